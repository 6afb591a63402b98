#include "nwqm/training.hpp"

#include <cmath>
#include <ostream>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "nwqm/error.hpp"
#include "nwqm/random.hpp"

namespace nwqm {

LossValue cross_entropy(const ClassDistribution& dist, QualityClass label) {
  const double p = dist.p[static_cast<std::size_t>(ordinal(label))];
  if (p < kProbabilityFloor) return {-std::log(kProbabilityFloor), true};
  return {-std::log(p), false};
}

AdamState::AdamState(const ParameterSet& params, const AdamConfig& config) : config_(config) {
  for (const auto& t : params.tensors()) {
    m_.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
    v_.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
  }
}

void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state) {
  const AdamConfig& c = state.config_;
  ++state.t_;
  const double t = static_cast<double>(state.t_);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (TensorId id : grads.ids()) {
    const Matrix& g = grads[id];
    Matrix& m = state.m_[id.index];
    Matrix& v = state.v_[id.index];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    params[id].value.array() -=
        c.lr * (m.array() / correct1) / ((v.array() / correct2).sqrt() + c.epsilon);
  }
}

void StageConfig::validate(const std::string& name) const {
  if (!(lr > 0.0)) throw ConfigError("train." + name + ".lr must be positive");
  if (epochs < 0) throw ConfigError("train." + name + ".epochs must not be negative");
  if (batch <= 0) throw ConfigError("train." + name + ".batch must be positive");
}

void TrainConfig::validate() const {
  pretrain.validate("pretrain");
  summarizer.validate("summarizer");
  joint.validate("joint");
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kPretrain: return "pretrain";
    case Stage::kSummarizer: return "summarizer";
    case Stage::kJoint: return "joint";
  }
  return "?";
}

void LossReport::write(std::ostream& out) const {
  out << "stage\tepoch\tsplit\tloss\taccuracy\n";
  for (const auto& r : rows) {
    fmt::print(out, "{}\t{}\t{}\t{:.9f}\t{:.6f}\n", to_string(r.stage), r.epoch, r.split, r.loss, r.accuracy);
  }
}

std::vector<LossRow> LossReport::select(Stage stage, std::string_view split) const {
  std::vector<LossRow> out;
  for (const auto& r : rows) {
    if (r.stage == stage && r.split == split) out.push_back(r);
  }
  return out;
}

LogitsFn logits_for(Stage stage) {
  switch (stage) {
    case Stage::kPretrain:
      return [](const Model& m, Tape& t, const Example& ex, const Vector* d) { return m.pretrain_logits(t, ex, d); };
    case Stage::kSummarizer:
      return [](const Model& m, Tape& t, const Example& ex, const Vector* d) {
        return m.summarizer_logits(t, ex, d);
      };
    case Stage::kJoint:
      return [](const Model& m, Tape& t, const Example& ex, const Vector* d) { return m.forward(t, ex, d).logits; };
  }
  throw Error("unknown stage");
}

std::vector<TensorId> trainable_for(const Model& model, Stage stage) {
  std::vector<TensorGroup> groups;
  switch (stage) {
    case Stage::kPretrain: groups = {TensorGroup::kEncoder, TensorGroup::kPretrainHead}; break;
    case Stage::kSummarizer: groups = {TensorGroup::kSummarizer, TensorGroup::kSummarizerHead}; break;
    case Stage::kJoint:
      groups = {TensorGroup::kSummarizer, TensorGroup::kTalk, TensorGroup::kImage, TensorGroup::kHead};
      break;
  }
  std::vector<TensorId> out;
  for (TensorGroup g : groups) {
    const auto ids = model.group(g);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

int dropout_width(const Model& model, Stage stage) {
  switch (stage) {
    case Stage::kPretrain: return model.hidden_width(TensorGroup::kPretrainHead);
    case Stage::kSummarizer: return model.hidden_width(TensorGroup::kSummarizerHead);
    case Stage::kJoint: return model.hidden_width(TensorGroup::kHead);
  }
  return 0;
}

SplitScore evaluate_split(const Model& model, const std::vector<Example>& examples, Stage stage) {
  SplitScore s;
  if (examples.empty()) return s;
  const LogitsFn logits = logits_for(stage);
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    Tape tape(model.params());
    const Var z = logits(model, tape, ex, nullptr);
    const Vector& zv = tape.value(z);
    Eigen::Index best = 0;
    zv.maxCoeff(&best);
    if (best == ex.label) ++correct;
    s.loss += tape.scalar(tape.softmax_cross_entropy(z, ex.label));
    s.clamped += tape.clamped();
  }
  s.loss /= static_cast<double>(examples.size());
  s.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
  return s;
}

double loss_and_gradients(const Model& model, Stage stage, const Example& ex, const Vector* dropout,
                          Gradients& grads, std::size_t* clamped) {
  const auto ids = grads.ids();
  Tape tape(model.params(), ids);
  const Var loss = tape.softmax_cross_entropy(logits_for(stage)(model, tape, ex, dropout), ex.label);
  tape.backward(loss, grads);
  if (clamped != nullptr) *clamped += tape.clamped();
  return tape.scalar(loss);
}

namespace {

bool stage_applies(const Model& model, Stage stage) {
  switch (stage) {
    case Stage::kPretrain: return model.has_encoder();
    case Stage::kSummarizer: return uses_text(model.config().fusion.variant);
    case Stage::kJoint: return true;
  }
  return false;
}

void record(LossReport& report, Stage stage, int epoch, const char* split, const SplitScore& s) {
  report.rows.push_back({stage, epoch, split, s.loss, s.accuracy});
  report.clamped += s.clamped;
}

}  // namespace

void train_stage(Model& model, Stage stage, const StageConfig& cfg, std::uint64_t seed,
                 const std::vector<Example>& train_set, const std::vector<Example>& validation_set,
                 LossReport& report, std::ostream* log, int* best_epoch, double* best_validation) {
  if (train_set.empty()) throw Error("training split is empty");
  cfg.validate(std::string(to_string(stage)));
  const auto trainable = trainable_for(model, stage);
  const bool has_validation = !validation_set.empty();
  const std::uint64_t stage_seed = derive_seed(seed, 1 + static_cast<std::uint64_t>(stage));

  // Selection key: accuracy, then lower loss; the earliest epoch wins exact ties.
  const auto score_epoch = [&](int epoch) {
    const SplitScore tr = evaluate_split(model, train_set, stage);
    record(report, stage, epoch, "train", tr);
    std::pair<double, double> selector{tr.accuracy, -tr.loss};
    if (has_validation) {
      const SplitScore va = evaluate_split(model, validation_set, stage);
      record(report, stage, epoch, "validation", va);
      selector = {va.accuracy, -va.loss};
      if (log != nullptr) {
        fmt::print(*log, "{} epoch {:3d}  train loss {:.6f} acc {:.4f}  validation loss {:.6f} acc {:.4f}\n",
                   to_string(stage), epoch, tr.loss, tr.accuracy, va.loss, va.accuracy);
      }
    } else if (log != nullptr) {
      fmt::print(*log, "{} epoch {:3d}  train loss {:.6f} acc {:.4f}\n", to_string(stage), epoch, tr.loss,
                 tr.accuracy);
    }
    return selector;
  };

  auto best = score_epoch(0);
  int best_at = 0;
  std::vector<Matrix> snapshot;
  for (TensorId id : trainable) snapshot.push_back(model.params()[id].value);

  AdamState adam(model.params(), AdamConfig{cfg.lr});
  Gradients grads(model.params(), trainable);
  Rng dropout_rng(derive_seed(stage_seed, 0xd0));
  const int width = dropout_width(model, stage);
  const double p = model.config().dropout;
  std::vector<std::size_t> order(train_set.size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(derive_seed(stage_seed, static_cast<std::uint64_t>(epoch)));
    shuffler.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      grads.zero();
      std::size_t clamped = 0;
      for (std::size_t i = start; i < end; ++i) {
        const Vector mask = dropout_mask(width, p, dropout_rng);
        loss_and_gradients(model, stage, train_set[order[i]], &mask, grads, &clamped);
      }
      report.clamped += clamped;
      grads.scale(1.0 / static_cast<double>(end - start));
      if (const auto bad = grads.first_non_finite(model.params())) {
        throw NumericError("non-finite gradient in tensor " + *bad);
      }
      adam_step(model.params(), grads, adam);
    }
    const auto selector = score_epoch(epoch);
    if (selector > best) {
      best = selector;
      best_at = epoch;
      for (std::size_t i = 0; i < trainable.size(); ++i) snapshot[i] = model.params()[trainable[i]].value;
    }
  }
  for (std::size_t i = 0; i < trainable.size(); ++i) model.params()[trainable[i]].value = snapshot[i];
  if (best_epoch != nullptr) *best_epoch = best_at;
  if (best_validation != nullptr) *best_validation = best.first;
}

TrainResult train(Model& model, const std::vector<Example>& train_set, const std::vector<Example>& validation_set,
                  const TrainConfig& config, std::ostream* log) {
  config.validate();
  if (train_set.empty()) throw Error("training split is empty");
  TrainResult result;
  const std::pair<Stage, const StageConfig*> stages[] = {
      {Stage::kPretrain, &config.pretrain}, {Stage::kSummarizer, &config.summarizer}, {Stage::kJoint, &config.joint}};
  for (const auto& [stage, cfg] : stages) {
    if (!stage_applies(model, stage)) continue;
    if (cfg->epochs == 0 && stage != Stage::kJoint) continue;
    int best_epoch = 0;
    double best_validation = 0.0;
    train_stage(model, stage, *cfg, config.seed, train_set, validation_set, result.report, log, &best_epoch,
                &best_validation);
    if (stage == Stage::kJoint) {
      result.best_epoch = best_epoch;
      result.best_validation = best_validation;
    }
  }
  return result;
}

std::vector<GradientCheckEntry> check_gradients(Model& model, Stage stage, const Example& ex,
                                                const std::vector<TensorId>& trainable, const Vector* dropout,
                                                double step) {
  Gradients analytic(model.params(), trainable);
  loss_and_gradients(model, stage, ex, dropout, analytic);
  const LogitsFn logits = logits_for(stage);
  const auto loss_at = [&] {
    Tape tape(model.params());
    return tape.scalar(tape.softmax_cross_entropy(logits(model, tape, ex, dropout), ex.label));
  };
  std::vector<GradientCheckEntry> out;
  for (TensorId id : trainable) {
    Matrix& value = model.params()[id].value;
    Matrix numeric(value.rows(), value.cols());
    for (Eigen::Index c = 0; c < value.cols(); ++c) {
      for (Eigen::Index r = 0; r < value.rows(); ++r) {
        const double keep = value(r, c);
        value(r, c) = keep + step;
        const double up = loss_at();
        value(r, c) = keep - step;
        const double down = loss_at();
        value(r, c) = keep;
        numeric(r, c) = (up - down) / (2.0 * step);
      }
    }
    const Matrix& a = analytic[id];
    const double scale = std::max(a.norm(), numeric.norm());
    GradientCheckEntry e;
    e.tensor = model.params()[id].name;
    e.analytic_norm = a.norm();
    e.relative_error = scale < 1e-10 ? 0.0 : (a - numeric).norm() / scale;
    out.push_back(e);
  }
  return out;
}

}  // namespace nwqm
