#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nwqm/embedding_store.hpp"
#include "nwqm/encoders.hpp"

namespace nwqm {

struct DumpRevision {
  std::string timestamp;
  std::string text;
};

struct DumpPage {
  std::string title;
  int ns = 0;
  std::int64_t id = 0;
  std::vector<DumpRevision> revisions;
};

/// MediaWiki export XML for the given pages, in order.
std::string to_dump_xml(const std::vector<DumpPage>& pages);

/// Seeded corpus whose text, talk and image signals all depend on the class.
/// Each modality of each page follows a neighbouring class with probability
/// `*_noise`, so no single modality is perfect when noise is non-zero.
struct SyntheticOptions {
  std::size_t pages_per_class = 10;
  std::uint64_t seed = 2021;
  int image_dim = kImageDim;
  double image_spread = 1.0;
  double text_noise = 0.1;
  double talk_noise = 0.1;
  double image_noise = 0.1;
  /// Redirects, foreign namespaces, unmatched and unlabelled pages, stale revisions.
  bool distractors = true;
};

struct SyntheticCorpus {
  std::vector<DumpPage> pages;
  EmbeddingStore images{static_cast<std::uint32_t>(kImageDim)};
  /// True class per labelled main page id, for checking ingest.
  std::vector<std::pair<std::int64_t, int>> labels;
};

SyntheticCorpus generate_synthetic(const SyntheticOptions& options);

/// Writes dump.xml and images.nwqm into `dir`.
void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace nwqm
