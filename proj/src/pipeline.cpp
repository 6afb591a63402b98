#include "nwqm/pipeline.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <ostream>
#include <set>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "nwqm/attribution.hpp"
#include "nwqm/error.hpp"
#include "nwqm/evaluation.hpp"
#include "nwqm/random.hpp"
#include "nwqm/synthetic.hpp"
#include "nwqm/training.hpp"

namespace nwqm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kSplits[] = {"train", "validation", "test"};

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

void require(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifactError(path.string());
}

std::vector<QualityClass> labels_of(const std::vector<Example>& examples) {
  std::vector<QualityClass> out;
  for (const auto& e : examples) out.push_back(class_from_ordinal(e.label));
  return out;
}

std::optional<EmbeddingStore> open_store(const std::string& path) {
  if (path.empty()) return std::nullopt;
  const fs::path resolved = resolve_input(path);
  require(resolved);
  return EmbeddingStore::read(resolved);
}

}  // namespace

namespace {

// A lock whose recorded process no longer exists was left by a crashed run.
bool stale_lock(const fs::path& path) {
  std::ifstream in(path);
  long pid = 0;
  if (!(in >> pid) || pid <= 0) return false;
  return ::kill(static_cast<pid_t>(pid), 0) != 0 && errno == ESRCH;
}

}  // namespace

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".nwqm.lock") {
  fs::create_directories(dir);
  int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0 && errno == EEXIST && stale_lock(path_)) {
    fs::remove(path_);
    fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  }
  if (fd < 0) {
    if (errno == EEXIST) throw LockHeldError(path_);
    throw Error("cannot create lock " + path_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::string variant_slug(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kWithoutImage: return "woI";
    case Variant::kWithoutTalk: return "woT";
    case Variant::kWithoutTalkImage: return "woTI";
    case Variant::kTalkOnly: return "talk-only";
    case Variant::kImageOnly: return "image-only";
  }
  return "unknown";
}

ExampleBuilder::ExampleBuilder(const RunConfig& config, const Vocabulary* vocab)
    : config_(config), vocab_(vocab), embedder_(config.model.dims.sentence_dim) {
  const Variant v = config.model.fusion.variant;
  if (uses_image(v)) images_ = open_store(config.paths.images);
  if (uses_talk(v)) sentences_ = open_store(config.paths.sentences);
  if (uses_text(v) && config.model.encoder == EncoderMode::kLookup) {
    if (config.paths.sections.empty()) throw ConfigError("paths.sections is required by the lookup encoder");
    sections_ = open_store(config.paths.sections);
  }
  if (uses_text(v) && config.model.encoder == EncoderMode::kToy && vocab_ == nullptr) {
    throw Error("the toy encoder needs a vocabulary");
  }
}

Example ExampleBuilder::build(const PreprocessedRecord& r) const {
  const ModelDims& d = config_.model.dims;
  const Variant v = config_.model.fusion.variant;
  Example ex;
  ex.page_id = r.page_id;
  ex.title = r.title;
  ex.label = ordinal(r.label);
  ex.padding = r.padding;
  ex.main_tokens = r.main_tokens;
  ex.talk_tokens = r.talk_tokens;
  if (uses_text(v)) {
    if (sections_) {
      for (std::size_t i = 0; i < r.sections.size(); ++i) ex.section_vectors.push_back(lookup_section(*sections_, r.page_id, i));
    } else {
      for (const auto& s : r.sections) ex.section_tokens.push_back(vocab_->ids(s.tokens));
      ex.page_tokens = vocab_->ids(r.page_tokens);
    }
  }
  if (uses_talk(v)) {
    std::vector<Vector> embeddings;
    for (std::size_t i = 0; i < r.talk_sentences.size(); ++i) {
      if (sentences_) {
        const std::string key = sentence_key(r.page_id, i);
        const auto* row = sentences_->find(key);
        if (row == nullptr) throw Error("sentence store has no record for key '" + key + "'");
        embeddings.push_back(
            Eigen::Map<const Eigen::VectorXf>(row->data(), static_cast<Eigen::Index>(row->size())).cast<double>());
      } else {
        embeddings.push_back(embedder_.embed(r.talk_sentences[i]));
      }
    }
    ex.mean_sentence = mean_sentence_embedding(embeddings, d.sentence_dim);
    ex.talk_empty = embeddings.empty();
  }
  if (uses_image(v)) {
    if (images_) {
      const ImageVector img = load_image_embedding(r.page_id, *images_, d.image_dim);
      ex.image = img.value;
      ex.image_present = img.present;
    } else {
      ex.image = Vector::Zero(d.image_dim);
    }
  }
  return ex;
}

std::vector<Example> ExampleBuilder::build(const std::vector<PreprocessedRecord>& records) const {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(build(r));
  return out;
}

Vocabulary build_vocabulary(const std::vector<PreprocessedRecord>& records, const VocabConfig& config) {
  std::vector<std::vector<std::string>> docs;
  for (const auto& r : records) {
    std::vector<std::string> tokens = r.page_tokens;
    for (const auto& s : r.sections) tokens.insert(tokens.end(), s.tokens.begin(), s.tokens.end());
    docs.push_back(std::move(tokens));
  }
  return Vocabulary::build(docs, config.min_count, config.max_size);
}

void run_synth(const RunConfig& config, const fs::path& out_dir, std::ostream& log) {
  DirectoryLock lock(out_dir);
  const SyntheticCorpus corpus = generate_synthetic(config.synthetic);
  write_synthetic(corpus, out_dir);
  fmt::print(log, "synth: {} pages, {} labelled pairs, {} image vectors -> {}\n", corpus.pages.size(),
             corpus.labels.size(), corpus.images.size(), out_dir.string());
}

void run_ingest(const RunConfig& config, std::ostream& log) {
  if (config.paths.dumps.empty()) throw ConfigError("paths.dumps lists no dump files");
  std::vector<fs::path> dumps;
  for (const auto& d : config.paths.dumps) {
    dumps.push_back(resolve_input(d));
    require(dumps.back());
  }
  const WorkLayout layout{config.paths.work_dir};
  DirectoryLock lock(layout.root);

  std::vector<PagePair> labelled;
  std::set<std::string> seen;
  IngestStats total;
  for (const auto& path : dumps) {
    std::ifstream in(path, std::ios::binary);
    IngestStats stats;
    auto pairs = ingest_dump(in, stats);
    for (auto& p : pairs) {
      if (!seen.insert(p.title()).second) {
        ++total.cross_file_duplicates;
        continue;
      }
      ++total.labeled[static_cast<std::size_t>(ordinal(*p.label))];
      labelled.push_back(std::move(p));
    }
    total.dump.pages += stats.dump.pages;
    total.dump.missing_namespace += stats.dump.missing_namespace;
    total.dump.missing_title += stats.dump.missing_title;
    total.pairing.duplicates += stats.pairing.duplicates;
    total.pairing.redirects += stats.pairing.redirects;
    total.pairing.other_namespace += stats.pairing.other_namespace;
    total.pairing.malformed_talk_title += stats.pairing.malformed_talk_title;
    total.pairing.unmatched += stats.pairing.unmatched;
    total.unlabeled += stats.unlabeled;
  }

  const auto balanced = balance_sample(labelled, config.ingest.per_class_cap, config.seed);
  const CorpusSplit split = split_corpus(balanced, config.ingest.split, config.seed);
  const std::vector<PagePair>* parts[] = {&split.train, &split.validation, &split.test};
  std::array<std::array<std::size_t, 3>, kNumClasses> counts{};
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<CorpusRecord> records;
    for (const auto& p : *parts[s]) {
      records.push_back(to_record(p));
      ++counts[static_cast<std::size_t>(ordinal(*p.label))][s];
    }
    fs::create_directories(layout.corpus(kSplits[s]).parent_path());
    write_corpus(layout.corpus(kSplits[s]), records);
  }

  auto out = open_out(layout.root / "corpus" / "counts.tsv");
  out << "class\ttrain\tvalidation\ttest\ttotal\n";
  for (auto it = kAllClasses.rbegin(); it != kAllClasses.rend(); ++it) {
    const auto& c = counts[static_cast<std::size_t>(ordinal(*it))];
    fmt::print(out, "{}\t{}\t{}\t{}\t{}\n", to_string(*it), c[0], c[1], c[2], c[0] + c[1] + c[2]);
  }
  fmt::print(out, "total\t{}\t{}\t{}\t{}\n", split.train.size(), split.validation.size(), split.test.size(),
             balanced.size());

  json stats{{"pages", total.dump.pages},
             {"missing_namespace", total.dump.missing_namespace},
             {"missing_title", total.dump.missing_title},
             {"duplicates", total.pairing.duplicates},
             {"redirects", total.pairing.redirects},
             {"other_namespace", total.pairing.other_namespace},
             {"malformed_talk_title", total.pairing.malformed_talk_title},
             {"unmatched", total.pairing.unmatched},
             {"unlabeled", total.unlabeled},
             {"cross_file_duplicates", total.cross_file_duplicates},
             {"labelled", labelled.size()},
             {"balanced", balanced.size()}};
  open_out(layout.root / "corpus" / "ingest_stats.json") << stats.dump(2) << '\n';
  fmt::print(log, "ingest: {} pages read, {} labelled pairs, {} kept; train {} / validation {} / test {}\n",
             total.dump.pages, labelled.size(), balanced.size(), split.train.size(), split.validation.size(),
             split.test.size());
}

void run_preprocess(const RunConfig& config, std::ostream& log) {
  const WorkLayout layout{config.paths.work_dir};
  for (const char* s : kSplits) require(layout.corpus(s));
  DirectoryLock lock(layout.root);
  for (const char* s : kSplits) {
    const auto corpus = read_corpus(layout.corpus(s));
    std::vector<PreprocessedRecord> records;
    std::size_t empty = 0;
    std::size_t malformed = 0;
    for (const auto& r : corpus) {
      records.push_back(preprocess_record(r));
      empty += records.back().empty_main ? 1 : 0;
      malformed += records.back().malformed;
    }
    fs::create_directories(layout.preprocessed(s).parent_path());
    write_preprocessed(layout.preprocessed(s), records);
    fmt::print(log, "preprocess {}: {} pages, {} empty, {} malformed constructs\n", s, records.size(), empty,
               malformed);
  }
}

void run_train(const RunConfig& config, std::ostream& log) {
  const WorkLayout layout{config.paths.work_dir};
  require(layout.preprocessed("train"));
  require(layout.preprocessed("validation"));
  DirectoryLock lock(layout.root);
  const auto train_records = read_preprocessed(layout.preprocessed("train"));
  const auto validation_records = read_preprocessed(layout.preprocessed("validation"));
  if (train_records.empty()) throw Error("training split is empty: " + layout.preprocessed("train").string());

  const Vocabulary vocab = build_vocabulary(train_records, config.vocab);
  ModelConfig model_config = config.model;
  model_config.dims.vocab_size = vocab.size();
  const ExampleBuilder builder(config, &vocab);
  const auto train_set = builder.build(train_records);
  const auto validation_set = builder.build(validation_records);

  Model model(model_config, config.seed);
  fmt::print(log, "train {}: {} parameters, {} train / {} validation pages\n",
             display_name(model_config.fusion.variant), model.params().scalar_count(), train_set.size(),
             validation_set.size());
  const TrainResult result = train(model, train_set, validation_set, config.train, &log);

  const fs::path dir = layout.run(model_config.fusion.variant);
  fs::create_directories(dir);
  model.save(dir / "model.ckpt", dir / "model.json");
  vocab.save(dir / "vocab.txt");
  auto report = open_out(dir / "loss_report.tsv");
  result.report.write(report);
  fmt::print(log, "best joint epoch {} (selection accuracy {:.4f}); {} clamped probabilities\n", result.best_epoch,
             result.best_validation, result.report.clamped);
}

namespace {

struct LoadedRun {
  Model model;
  Vocabulary vocab;
};

LoadedRun load_run(const RunConfig& config, Variant variant) {
  const fs::path dir = WorkLayout{config.paths.work_dir}.run(variant);
  require(dir / "model.ckpt");
  require(dir / "model.json");
  require(dir / "vocab.txt");
  return LoadedRun{Model::load(dir / "model.ckpt", dir / "model.json"), Vocabulary::load(dir / "vocab.txt")};
}

std::vector<Example> load_examples(const RunConfig& config, const Model& model, const Vocabulary& vocab,
                                   const std::string& split) {
  const fs::path path = WorkLayout{config.paths.work_dir}.preprocessed(split);
  require(path);
  RunConfig adjusted = config;
  adjusted.model = model.config();
  const ExampleBuilder builder(adjusted, &vocab);
  return builder.build(read_preprocessed(path));
}

std::vector<QualityClass> predict_all(const Model& model, const std::vector<Example>& examples,
                                      std::vector<Prediction>* details = nullptr) {
  std::vector<QualityClass> out;
  for (const auto& ex : examples) {
    Prediction p = model.predict(ex);
    out.push_back(p.predicted);
    if (details != nullptr) details->push_back(std::move(p));
  }
  return out;
}

}  // namespace

void run_evaluate(const RunConfig& config, const std::string& split, std::optional<Variant> compare,
                  std::ostream& log) {
  const Variant variant = config.model.fusion.variant;
  const WorkLayout layout{config.paths.work_dir};
  const fs::path dir = layout.run(variant);
  const LoadedRun run = load_run(config, variant);
  std::optional<LoadedRun> other;
  if (compare) other = load_run(config, *compare);
  DirectoryLock lock(layout.root);

  const auto examples = load_examples(config, run.model, run.vocab, split);
  if (examples.empty()) throw Error("no pages in split '" + split + "'");
  std::vector<Prediction> details;
  const auto predicted = predict_all(run.model, examples, &details);
  const auto truth = labels_of(examples);

  const fs::path eval = dir / "eval";
  fs::create_directories(eval);
  {
    auto out = open_out(eval / "predictions.tsv");
    out << "page_id\ttitle\ttrue\tpredicted";
    for (QualityClass c : kAllClasses) out << "\tp_" << to_string(c);
    out << '\n';
    for (std::size_t i = 0; i < examples.size(); ++i) {
      fmt::print(out, "{}\t{}\t{}\t{}", examples[i].page_id, examples[i].title, to_string(truth[i]),
                 to_string(predicted[i]));
      for (double p : details[i].distribution.p) fmt::print(out, "\t{:.9f}", p);
      out << '\n';
    }
  }
  const ConfusionMatrix cm = confusion(predicted, truth);
  {
    auto out = open_out(eval / "confusion.csv");
    cm.write_csv(out);
  }
  const auto distance = mean_ordinal_distance(predicted, truth);
  {
    auto out = open_out(eval / "distance.tsv");
    out << "class\tmean_distance\terrors\n";
    for (QualityClass c : kAllClasses) {
      const auto i = static_cast<std::size_t>(ordinal(c));
      fmt::print(out, "{}\t{:.6f}\t{}\n", to_string(c), distance[i], cm.support(c) - cm.counts[i][i]);
    }
  }
  if (examples.size() >= 4) {
    std::vector<std::size_t> main_len;
    std::vector<std::size_t> talk_len;
    for (const auto& e : examples) {
      main_len.push_back(e.main_tokens);
      talk_len.push_back(e.talk_tokens);
    }
    auto qm = open_out(eval / "quartiles_main.csv");
    quartile_report(main_len, predicted, truth).write_csv(qm);
    auto qt = open_out(eval / "quartiles_talk.csv");
    quartile_report(talk_len, predicted, truth).write_csv(qt);
  } else {
    fmt::print(log, "evaluate: fewer than 4 pages, quartile reports skipped\n");
  }
  if (uses_text(variant)) {
    auto out = open_out(eval / "page_vectors.tsv");
    for (std::size_t i = 0; i < examples.size(); ++i) {
      fmt::print(out, "{}\t{}", examples[i].page_id, to_string(truth[i]));
      for (Eigen::Index k = 0; k < details[i].page.size(); ++k) fmt::print(out, "\t{:.9g}", details[i].page(k));
      out << '\n';
    }
  }

  const double acc = accuracy(predicted, truth);
  json metrics{{"variant", std::string(to_string(variant))},
               {"model", std::string(display_name(variant))},
               {"split", split},
               {"pages", examples.size()},
               {"accuracy", acc}};
  json dist = json::object();
  for (QualityClass c : kAllClasses) dist[std::string(to_string(c))] = distance[static_cast<std::size_t>(ordinal(c))];
  metrics["mean_ordinal_distance"] = dist;
  if (other) {
    const auto other_examples = load_examples(config, other->model, other->vocab, split);
    const auto other_predicted = predict_all(other->model, other_examples);
    const auto sm = stuart_maxwell(predicted, other_predicted);
    metrics["stuart_maxwell"] = {{"against", std::string(to_string(*compare))},
                                 {"statistic", sm.statistic},
                                 {"df", sm.df},
                                 {"p_value", sm.p_value}};
    fmt::print(log, "Stuart-Maxwell vs {}: statistic {:.6f}, df {}, p {:.6g}\n", display_name(*compare),
               sm.statistic, sm.df, sm.p_value);
  }
  open_out(eval / "metrics.json") << metrics.dump(2) << '\n';
  fmt::print(log, "evaluate {} on {}: accuracy {:.4f} over {} pages\n", display_name(variant), split, acc,
             examples.size());
}

void run_attribute(const RunConfig& config, std::ostream& log) {
  const Variant variant = config.model.fusion.variant;
  const WorkLayout layout{config.paths.work_dir};
  const LoadedRun run = load_run(config, variant);
  DirectoryLock lock(layout.root);
  auto examples = load_examples(config, run.model, run.vocab, config.attribution.split);
  if (config.attribution.max_pages > 0 && examples.size() > config.attribution.max_pages) {
    examples.resize(config.attribution.max_pages);
  }

  std::vector<FeatureBlock> blocks;
  AttributionReport report;
  for (const auto& b : run.model.modality_blocks()) {
    blocks.push_back({b.name, b.offset, b.size});
    report.modalities.push_back(b.name);
  }
  const std::size_t features = blocks.back().offset + blocks.back().size;
  if (config.attribution.lime.samples < features) {
    fmt::print(log, "warning: {} samples for {} features; the surrogate relies on ridge regularisation\n",
               config.attribution.lime.samples, features);
  }
  const ScoreFn score = [&](const Vector& x) { return run.model.probabilities_from_modalities(x); };

  const fs::path dir = layout.run(variant) / "attribution";
  auto pages = open_out(dir / "pages.tsv");
  pages << "page_id\ttrue\tpredicted";
  for (const auto& m : report.modalities) pages << '\t' << m;
  pages << '\n';
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Vector x = run.model.modality_input(examples[i]);
    const LimeExplanation e = explain(score, x, config.attribution.lime, derive_seed(config.seed, i));
    const auto scores = block_scores(e.weights, blocks, config.attribution.lime.top_k);
    const QualityClass predicted = class_from_ordinal(e.target);
    const QualityClass truth = class_from_ordinal(examples[i].label);
    report.add(config.attribution.by_predicted ? predicted : truth, scores);
    fmt::print(pages, "{}\t{}\t{}", examples[i].page_id, to_string(truth), to_string(predicted));
    for (double s : scores) fmt::print(pages, "\t{:.9g}", s);
    pages << '\n';
  }
  report.finish();
  auto out = open_out(dir / "attribution.tsv");
  report.write_tsv(out);
  fmt::print(log, "attribute {}: {} pages, grouped by {} class\n", display_name(variant), examples.size(),
             config.attribution.by_predicted ? "predicted" : "true");
  report.write_tsv(log);
}

void run_report(const RunConfig& config, const std::vector<Variant>& variants, std::ostream& out) {
  const WorkLayout layout{config.paths.work_dir};
  std::vector<std::pair<Variant, json>> rows;
  for (Variant v : kAllVariants) {
    const bool wanted = variants.empty() || std::find(variants.begin(), variants.end(), v) != variants.end();
    if (!wanted) continue;
    const fs::path path = layout.run(v) / "eval" / "metrics.json";
    if (!fs::exists(path)) {
      if (variants.empty()) continue;
      throw MissingArtifactError(path.string());
    }
    std::ifstream in(path);
    rows.emplace_back(v, json::parse(in));
  }
  if (rows.empty()) throw MissingArtifactError((layout.root / "runs" / "<variant>" / "eval" / "metrics.json").string());
  DirectoryLock lock(layout.root);
  std::string table = "Model\tAccuracy (%)\tPages\n";
  for (const auto& [v, m] : rows) {
    table += fmt::format("{}\t{:.2f}\t{}\n", display_name(v), 100.0 * m.at("accuracy").get<double>(),
                         m.at("pages").get<std::size_t>());
  }
  open_out(layout.report()) << table;
  out << table;
}

}  // namespace nwqm
