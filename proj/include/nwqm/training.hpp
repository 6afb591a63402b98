#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "nwqm/autodiff.hpp"
#include "nwqm/fusion.hpp"
#include "nwqm/model.hpp"

namespace nwqm {

inline constexpr double kProbabilityFloor = 1e-12;

struct LossValue {
  double loss = 0.0;
  bool clamped = false;
};

/// -log p_label, with p_label clamped to 1e-12.
LossValue cross_entropy(const ClassDistribution& dist, QualityClass label);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState(const ParameterSet& params, const AdamConfig& config);

  const AdamConfig& config() const { return config_; }
  std::uint64_t step() const { return t_; }
  const Matrix& first_moment(TensorId id) const { return m_[id.index]; }
  const Matrix& second_moment(TensorId id) const { return v_[id.index]; }

 private:
  friend void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state);

  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::uint64_t t_ = 0;
};

/// One bias-corrected Adam update of every tensor that has a gradient buffer.
void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state);

struct StageConfig {
  double lr = 1e-3;
  int epochs = 10;
  int batch = 16;

  void validate(const std::string& name) const;
};

/// Staged regime: encoder pretraining, then the summarizer with the encoder
/// frozen, then the fused model with the encoder frozen.
struct TrainConfig {
  StageConfig pretrain{2e-5, 4, 16};
  StageConfig summarizer{1e-3, 10, 16};
  StageConfig joint{1e-3, 40, 32};
  std::uint64_t seed = 13;

  void validate() const;
};

enum class Stage { kPretrain, kSummarizer, kJoint };
std::string_view to_string(Stage stage);

struct LossRow {
  Stage stage = Stage::kJoint;
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct LossReport {
  std::vector<LossRow> rows;
  std::size_t clamped = 0;

  /// Tab-separated with a header line.
  void write(std::ostream& out) const;
  std::vector<LossRow> select(Stage stage, std::string_view split) const;
};

struct SplitScore {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t clamped = 0;
};

using LogitsFn = std::function<Var(const Model&, Tape&, const Example&, const Vector* dropout)>;

LogitsFn logits_for(Stage stage);
/// Tensors updated by `stage`; the encoder stays frozen after pretraining.
std::vector<TensorId> trainable_for(const Model& model, Stage stage);
/// Width of the dropout mask applied inside the stage's head.
int dropout_width(const Model& model, Stage stage);

/// Mean loss and accuracy in inference mode.
SplitScore evaluate_split(const Model& model, const std::vector<Example>& examples, Stage stage = Stage::kJoint);

struct TrainResult {
  LossReport report;
  int best_epoch = 0;
  double best_validation = 0.0;
};

/// Runs the enabled stages (epochs > 0) that apply to the model's variant.
/// After each stage the best-validation parameters are restored: highest accuracy,
/// then lowest loss, then earliest epoch (epoch 0 included). Without validation
/// data the training split selects.
TrainResult train(Model& model, const std::vector<Example>& train_set, const std::vector<Example>& validation_set,
                  const TrainConfig& config, std::ostream* log = nullptr);

/// Runs one stage; exposed for tests and custom schedules.
void train_stage(Model& model, Stage stage, const StageConfig& stage_config, std::uint64_t seed,
                 const std::vector<Example>& train_set, const std::vector<Example>& validation_set,
                 LossReport& report, std::ostream* log = nullptr, int* best_epoch = nullptr,
                 double* best_validation = nullptr);

/// Loss of one example and its gradients for `trainable`.
double loss_and_gradients(const Model& model, Stage stage, const Example& ex, const Vector* dropout,
                          Gradients& grads, std::size_t* clamped = nullptr);

struct GradientCheckEntry {
  std::string tensor;
  double relative_error = 0.0;
  double analytic_norm = 0.0;
};

/// Central differences on every entry of every tensor in `trainable`:
/// per tensor ||analytic - numeric|| / max(||analytic||, ||numeric||), 0 when both are ~0.
std::vector<GradientCheckEntry> check_gradients(Model& model, Stage stage, const Example& ex,
                                                const std::vector<TensorId>& trainable, const Vector* dropout,
                                                double step = 1e-6);

}  // namespace nwqm
