#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nwqm/config.hpp"
#include "nwqm/corpus_io.hpp"
#include "nwqm/model.hpp"
#include "nwqm/pipeline.hpp"
#include "nwqm/random.hpp"
#include "nwqm/summarizer.hpp"
#include "nwqm/training.hpp"

namespace nwqm::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string pattern = (std::filesystem::temp_directory_path() / "nwqm-test-XXXXXX").string();
    if (::mkdtemp(pattern.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::ostream& null_stream() {
  static std::ostream sink(nullptr);
  return sink;
}

/// Small dimensions that keep finite-difference sweeps fast. attention_dim
/// differs from the bidirectional width so the output projection is exercised.
inline ModelConfig tiny_config(Variant variant, FusionMode mode = FusionMode::kConcatDiff) {
  ModelConfig c;
  c.dims.vocab_size = 12;
  c.dims.embed_dim = 4;
  c.dims.section_dim = 5;
  c.dims.gru_hidden = 3;
  c.dims.attention_dim = 4;
  c.dims.sentence_dim = 7;
  c.dims.talk_dim = 6;
  c.dims.image_dim = 10;
  c.dims.image_proj_dim = 6;
  c.dims.hidden_dim = 5;
  c.fusion.variant = variant;
  c.fusion.mode = mode;
  return c;
}

/// Random toy-mode example: 1..4 sections of random token ids, left padding to 16 slots.
inline Example random_example(const ModelDims& d, Rng& rng, int label, std::size_t max_sections = 4) {
  Example ex;
  ex.page_id = static_cast<std::int64_t>(rng.uniform_index(100000));
  ex.label = label;
  const std::size_t sections = 1 + rng.uniform_index(max_sections);
  for (std::size_t s = 0; s < sections; ++s) {
    std::vector<std::int32_t> ids(1 + rng.uniform_index(6));
    for (auto& id : ids) id = static_cast<std::int32_t>(rng.uniform_index(d.vocab_size));
    ex.section_tokens.push_back(std::move(ids));
  }
  ex.padding = 16 - sections;
  for (const auto& s : ex.section_tokens) ex.page_tokens.insert(ex.page_tokens.end(), s.begin(), s.end());
  ex.mean_sentence = Vector(d.sentence_dim);
  for (Eigen::Index i = 0; i < ex.mean_sentence.size(); ++i) ex.mean_sentence(i) = rng.uniform(-1.0, 1.0);
  ex.talk_empty = false;
  ex.image = Vector(d.image_dim);
  for (Eigen::Index i = 0; i < ex.image.size(); ++i) ex.image(i) = rng.uniform(-1.0, 1.0);
  ex.image_present = true;
  return ex;
}

/// Overwrites every tensor with uniform(-scale, scale) draws.
inline void randomize(ParameterSet& params, Rng& rng, double scale = 0.5) {
  for (Tensor& t : params.tensors()) {
    for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
      for (Eigen::Index r = 0; r < t.value.rows(); ++r) t.value(r, c) = rng.uniform(-scale, scale);
    }
  }
}

inline std::filesystem::path bundled_config() { return std::filesystem::path(NWQM_SOURCE_DIR) / "configs" / "synthetic.json"; }

/// Loads the bundled desk config and points every path inside `root`.
inline RunConfig config_in(const std::filesystem::path& root) {
  RunConfig c = RunConfig::load(bundled_config());
  c.paths.dumps = {(root / "synthetic" / "dump.xml").string()};
  c.paths.images = (root / "synthetic" / "images.nwqm").string();
  c.paths.work_dir = (root / "work").string();
  return c;
}

/// synth + ingest + preprocess into `root`.
inline void prepare_corpus(const RunConfig& c, const std::filesystem::path& root) {
  run_synth(c, root / "synthetic", null_stream());
  run_ingest(c, null_stream());
  run_preprocess(c, null_stream());
}

/// Tensors whose gradients the suite checks for `stage`: everything the stage's
/// loss reaches, frozen encoder included.
inline std::vector<TensorId> checked_tensors(const Model& model, Stage stage) {
  std::vector<TensorId> out;
  const auto add = [&](TensorGroup g) {
    const auto ids = model.group(g);
    out.insert(out.end(), ids.begin(), ids.end());
  };
  switch (stage) {
    case Stage::kPretrain:
      add(TensorGroup::kEncoder);
      add(TensorGroup::kPretrainHead);
      break;
    case Stage::kSummarizer:
      add(TensorGroup::kEncoder);
      add(TensorGroup::kSummarizer);
      add(TensorGroup::kSummarizerHead);
      break;
    case Stage::kJoint:
      out = model.forward_tensors();
      break;
  }
  return out;
}

/// Central differences at step h carry about eps * max(1, |f|) / h of rounding
/// error per entry. A draw is usable when every tensor with a non-zero analytic
/// gradient has an RMS entry at least 1e5 times that floor, so a 1e-5 relative
/// tolerance measures the derivative and not the rounding. Only analytic
/// gradients are consulted.
inline bool well_conditioned(const Model& model, Stage stage, const Example& ex,
                             const std::vector<TensorId>& trainable, const Vector* dropout, double step = 1e-6) {
  Gradients grads(model.params(), trainable);
  const double f = loss_and_gradients(model, stage, ex, dropout, grads);
  const double floor = std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f)) / step;
  for (TensorId id : trainable) {
    const double norm = grads[id].norm();
    if (norm == 0.0) continue;
    if (norm / std::sqrt(static_cast<double>(grads[id].size())) < 1e5 * floor) return false;
  }
  return true;
}

struct GradientSuiteResult {
  int accepted = 0;
  int drawn = 0;
  double worst = 0.0;
  std::string worst_tensor;
};

/// Finite-difference checks on `examples` well-conditioned random draws of
/// (parameters, example, dropout mask) for one variant and stage.
inline GradientSuiteResult gradient_suite(const ModelConfig& config, Stage stage, int examples, std::uint64_t seed,
                                          int max_draws = 60) {
  GradientSuiteResult r;
  Rng rng(seed);
  while (r.accepted < examples && r.drawn < max_draws) {
    ++r.drawn;
    Model model(config, rng.next());
    randomize(model.params(), rng, 1.0);
    Example ex = random_example(config.dims, rng, static_cast<int>(rng.uniform_index(kNumClasses)), 16);
    if (config.encoder == EncoderMode::kLookup) {
      for (std::size_t s = 0; s < ex.section_tokens.size(); ++s) {
        Vector v(config.dims.section_dim);
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-1.0, 1.0);
        ex.section_vectors.push_back(v);
      }
      ex.section_tokens.clear();
    }
    const Vector mask = dropout_mask(dropout_width(model, stage), config.dropout, rng);
    const auto trainable = checked_tensors(model, stage);
    if (!well_conditioned(model, stage, ex, trainable, &mask)) continue;
    ++r.accepted;
    for (const auto& e : check_gradients(model, stage, ex, trainable, &mask)) {
      if (e.relative_error > r.worst) {
        r.worst = e.relative_error;
        r.worst_tensor = e.tensor;
      }
    }
  }
  return r;
}

struct Dataset {
  Vocabulary vocab;
  std::vector<Example> train;
  std::vector<Example> validation;
  std::vector<Example> test;
};

/// Examples for every split with the vocabulary built from the training split, as `train` does.
inline Dataset load_dataset(const RunConfig& c) {
  const WorkLayout layout{c.paths.work_dir};
  Dataset d;
  const auto train = read_preprocessed(layout.preprocessed("train"));
  d.vocab = build_vocabulary(train, c.vocab);
  const ExampleBuilder builder(c, &d.vocab);
  d.train = builder.build(train);
  d.validation = builder.build(read_preprocessed(layout.preprocessed("validation")));
  d.test = builder.build(read_preprocessed(layout.preprocessed("test")));
  return d;
}

/// Hand-set bidirectional GRU (input 2, hidden 1 per direction) and 2-wide
/// attention used by the manual oracle. Reference values were computed by hand
/// from the cell and attention equations (double precision, independent code).
struct ManualSummarizer {
  ParameterSet params;
  SummarizerParams summarizer;

  ManualSummarizer() {
    summarizer = register_summarizer(params, 2, 1, 2);
    const auto set = [&](TensorId id, std::initializer_list<double> v) {
      Matrix& m = params[id].value;
      auto it = v.begin();
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = *it++;
      }
    };
    const GruDirectionParams& f = summarizer.gru.forward;
    set(f.w_update, {0.5, -0.3});
    set(f.u_update, {0.2});
    set(f.b_update, {0.1});
    set(f.w_reset, {-0.4, 0.6});
    set(f.u_reset, {0.7});
    set(f.b_reset, {0.0});
    set(f.w_candidate, {0.9, 0.1});
    set(f.u_candidate, {-0.5});
    set(f.b_candidate, {0.05});
    const GruDirectionParams& b = summarizer.gru.backward;
    set(b.w_update, {0.3, 0.3});
    set(b.u_update, {-0.1});
    set(b.b_update, {0.0});
    set(b.w_reset, {0.2, -0.2});
    set(b.u_reset, {0.4});
    set(b.b_reset, {0.1});
    set(b.w_candidate, {-0.6, 0.8});
    set(b.u_candidate, {0.3});
    set(b.b_candidate, {-0.1});
    set(summarizer.attention.weight, {1.0, -0.5, 0.25, 0.75});
    set(summarizer.attention.bias, {0.1, -0.2});
    set(summarizer.attention.context, {1.5, -1.0});
  }

  static std::vector<Vector> inputs() {
    Vector x1(2), x2(2);
    x1 << 1.0, 2.0;
    x2 << -0.5, 0.5;
    return {x1, x2};
  }

  static constexpr double kSingleStep = 0.40887703898514388;  // forward cell on x1 from h = 0
  static constexpr double kHidden[2][2] = {{0.40887703898514388, 0.59787192821604884},
                                           {0.024071213535874658, 0.26852478349901765}};
  static constexpr double kAlpha[2] = {0.49933645305762969, 0.50066354694237036};
  static constexpr double kPooled[2] = {0.52483639383398306, 0.54425442226015552};
  static constexpr double kPooledHidden[2] = {0.21621878953162613, 0.43297981856667789};
};

}  // namespace nwqm::test
