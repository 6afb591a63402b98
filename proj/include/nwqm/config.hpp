#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "nwqm/attribution.hpp"
#include "nwqm/dump_ingest.hpp"
#include "nwqm/model.hpp"
#include "nwqm/synthetic.hpp"
#include "nwqm/training.hpp"

namespace nwqm {

struct PathsConfig {
  std::vector<std::string> dumps;
  std::string images;     // image store, optional
  std::string sentences;  // sentence store, optional (hashing embedder otherwise)
  std::string sections;   // section store, required for the lookup encoder
  std::string work_dir = "work";
};

struct IngestConfig {
  std::size_t per_class_cap = 5900;
  SplitRatios split;
};

struct VocabConfig {
  std::size_t min_count = 1;
  std::size_t max_size = 50000;
};

struct AttributionConfig {
  LimeOptions lime;
  /// Group pages by predicted class (default) or by true class.
  bool by_predicted = true;
  std::string split = "test";
  std::size_t max_pages = 0;  // 0 = all
};

struct RunConfig {
  std::uint64_t seed = 13;
  PathsConfig paths;
  IngestConfig ingest;
  ModelConfig model;
  TrainConfig train;
  VocabConfig vocab;
  AttributionConfig attribution;
  SyntheticOptions synthetic;

  /// Parses JSON; unknown keys and wrong types raise ConfigError naming the field and line.
  static RunConfig parse(std::string_view text, std::string_view source = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  void set_seed(std::uint64_t s) {
    seed = s;
    train.seed = s;
  }
};

/// Absolute paths and existing relative paths are kept; otherwise a relative
/// path is looked up under $NWQM_DATA_DIR when that variable is set.
std::filesystem::path resolve_input(const std::string& path);

}  // namespace nwqm
