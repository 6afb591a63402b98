#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nwqm/dump_ingest.hpp"
#include "nwqm/quality.hpp"

namespace nwqm {

/// One labelled main/talk pair as written by ingest (one JSON object per line).
struct CorpusRecord {
  std::int64_t page_id = 0;
  std::int64_t talk_page_id = 0;
  std::string title;
  QualityClass label = QualityClass::kStub;
  std::string main_text;
  std::string talk_text;
  std::string revision_timestamp;
};

CorpusRecord to_record(const PagePair& pair);

struct PreprocessedSection {
  std::string heading;
  int level = 1;
  std::vector<std::string> tokens;  // after the token budget
};

/// Model-ready text of one page (one JSON object per line).
struct PreprocessedRecord {
  std::int64_t page_id = 0;
  std::string title;
  QualityClass label = QualityClass::kStub;
  std::vector<PreprocessedSection> sections;  // genuine sections, at most 16
  std::size_t padding = 0;
  std::vector<std::string> page_tokens;  // whole page after the token budget
  std::vector<std::string> talk_sentences;
  std::size_t main_tokens = 0;
  std::size_t talk_tokens = 0;
  bool empty_main = false;
  std::size_t malformed = 0;
};

PreprocessedRecord preprocess_record(const CorpusRecord& record);

void write_corpus(const std::filesystem::path& path, const std::vector<CorpusRecord>& records);
std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path);

void write_preprocessed(const std::filesystem::path& path, const std::vector<PreprocessedRecord>& records);
std::vector<PreprocessedRecord> read_preprocessed(const std::filesystem::path& path);

}  // namespace nwqm
