#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nwqm/config.hpp"
#include "nwqm/corpus_io.hpp"
#include "nwqm/encoders.hpp"
#include "nwqm/error.hpp"
#include "nwqm/model.hpp"

namespace nwqm {

/// Another process holds the output directory.
class LockHeldError : public Error {
 public:
  explicit LockHeldError(const std::filesystem::path& lock)
      : Error("output directory is locked by another run: " + lock.string()) {}
};

/// Exclusive lock file inside a directory, released on destruction.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// File-system friendly variant name: full, woI, woT, woTI, talk-only, image-only.
std::string variant_slug(Variant v);

struct WorkLayout {
  std::filesystem::path root;

  std::filesystem::path corpus(const std::string& split) const { return root / "corpus" / (split + ".jsonl"); }
  std::filesystem::path preprocessed(const std::string& split) const {
    return root / "preprocessed" / (split + ".jsonl");
  }
  std::filesystem::path run(Variant v) const { return root / "runs" / variant_slug(v); }
  std::filesystem::path report() const { return root / "report.tsv"; }
};

/// Stores and embedder used to turn preprocessed records into model inputs.
class ExampleBuilder {
 public:
  ExampleBuilder(const RunConfig& config, const Vocabulary* vocab);

  Example build(const PreprocessedRecord& record) const;
  std::vector<Example> build(const std::vector<PreprocessedRecord>& records) const;

 private:
  const RunConfig& config_;
  const Vocabulary* vocab_;
  std::optional<EmbeddingStore> images_;
  std::optional<EmbeddingStore> sentences_;
  std::optional<EmbeddingStore> sections_;
  HashingSentenceEmbedder embedder_;
};

Vocabulary build_vocabulary(const std::vector<PreprocessedRecord>& records, const VocabConfig& config);

void run_synth(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log);
void run_ingest(const RunConfig& config, std::ostream& log);
void run_preprocess(const RunConfig& config, std::ostream& log);
void run_train(const RunConfig& config, std::ostream& log);
/// `compare` names a second trained variant for the paired significance test.
void run_evaluate(const RunConfig& config, const std::string& split, std::optional<Variant> compare,
                  std::ostream& log);
void run_attribute(const RunConfig& config, std::ostream& log);
void run_report(const RunConfig& config, const std::vector<Variant>& variants, std::ostream& out);

}  // namespace nwqm
