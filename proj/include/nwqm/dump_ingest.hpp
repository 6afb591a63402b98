#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "nwqm/quality.hpp"

namespace nwqm {

inline constexpr std::string_view kTalkPrefix = "Talk:";

struct RawPage {
  std::string title;
  int ns = 0;
  std::string text;
  std::int64_t page_id = 0;
  /// ISO-8601 UTC timestamp of the selected revision; empty when the page has none.
  std::string revision_timestamp;
};

struct PagePair {
  RawPage main;
  RawPage talk;
  std::optional<QualityClass> label;

  const std::string& title() const { return main.title; }
};

struct CorpusSplit {
  std::vector<PagePair> train;
  std::vector<PagePair> validation;
  std::vector<PagePair> test;
  std::uint64_t seed = 0;
};

struct DumpStats {
  std::size_t pages = 0;
  std::size_t missing_namespace = 0;
  std::size_t missing_title = 0;
};

/// Pull parser over a MediaWiki XML export. Keeps only the page being assembled
/// plus whatever pages the current input chunk completed.
class DumpReader {
 public:
  explicit DumpReader(std::istream& in, std::size_t chunk_size = 1 << 16);
  ~DumpReader();
  DumpReader(const DumpReader&) = delete;
  DumpReader& operator=(const DumpReader&) = delete;

  /// Next page in document order, or nullopt at end of input.
  /// Throws DumpParseError with the byte offset of malformed XML.
  std::optional<RawPage> next();

  const DumpStats& stats() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

/// Reads every page of a dump held in memory (convenience over DumpReader).
std::vector<RawPage> stream_pages(std::string_view xml, DumpStats* stats = nullptr);

bool is_redirect(std::string_view wikitext);

struct PairingStats {
  std::size_t duplicates = 0;
  std::size_t redirects = 0;
  std::size_t other_namespace = 0;
  std::size_t malformed_talk_title = 0;
  std::size_t unmatched = 0;  // filled by finish()
};

/// Single-pass main/talk matcher. A page waits in the pending table until its
/// counterpart arrives; the pair is then emitted and the entry released.
class PairBuilder {
 public:
  /// Feeds one page; returns the completed pair if this page closed one.
  std::optional<PagePair> add(RawPage page);

  /// Drops the pages still waiting for a partner and returns final counters.
  PairingStats finish();

  const PairingStats& stats() const { return stats_; }
  std::size_t pending() const { return pending_main_.size() + pending_talk_.size(); }

 private:
  std::unordered_map<std::string, RawPage> pending_main_;
  std::unordered_map<std::string, RawPage> pending_talk_;
  std::unordered_set<std::string> paired_;
  PairingStats stats_;
};

std::vector<PagePair> pair_main_talk(const std::vector<RawPage>& pages, PairingStats* stats = nullptr);

/// Quality class from talk-page project banners: every template's class=
/// parameter votes; majority wins, ties go to the higher ordinal.
std::optional<QualityClass> extract_label(std::string_view talk_text);

/// Keeps every FA pair and at most `per_class_cap` uniformly sampled pairs of each
/// other class. Output is grouped FA..Stub, each group in input order.
std::vector<PagePair> balance_sample(const std::vector<PagePair>& labeled, std::size_t per_class_cap,
                                     std::uint64_t seed);

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

/// Per-class split sizes by largest remainder; remainder ties favour train, then validation.
std::array<std::size_t, 3> stratum_sizes(std::size_t n, const SplitRatios& ratios);

CorpusSplit split_corpus(const std::vector<PagePair>& corpus, const SplitRatios& ratios, std::uint64_t seed);

struct IngestStats {
  DumpStats dump;
  PairingStats pairing;
  std::size_t unlabeled = 0;
  std::size_t cross_file_duplicates = 0;
  std::array<std::size_t, kNumClasses> labeled{};
};

/// Streams one dump, pairs within it, and labels the pairs. Unlabeled pairs are dropped.
std::vector<PagePair> ingest_dump(std::istream& in, IngestStats& stats);

}  // namespace nwqm
