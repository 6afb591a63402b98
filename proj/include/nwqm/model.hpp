#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nwqm/autodiff.hpp"
#include "nwqm/encoders.hpp"
#include "nwqm/fusion.hpp"
#include "nwqm/summarizer.hpp"

namespace nwqm {

struct ModelDims {
  std::size_t vocab_size = 1;
  int embed_dim = 64;
  int section_dim = 768;
  int gru_hidden = kGruHidden;
  int attention_dim = kAttentionDim;
  int sentence_dim = kSentenceDim;
  int talk_dim = kTalkDim;
  int image_dim = kImageDim;
  int image_proj_dim = kTalkDim;
  int hidden_dim = 256;

  int page_dim() const { return 2 * gru_hidden; }
};

struct ModelConfig {
  ModelDims dims;
  EncoderMode encoder = EncoderMode::kToy;
  FusionSpec fusion;
  SummarizerOptions summarizer;
  double dropout = 0.5;
  /// Zero output layer: the untrained model predicts the uniform distribution.
  bool zero_init_output = true;

  /// Throws ConfigError for shapes the fusion mode cannot combine.
  void validate() const;
};

/// Model-ready view of one page.
struct Example {
  std::int64_t page_id = 0;
  std::string title;
  int label = -1;

  /// Toy mode: token ids per genuine section. Lookup mode: stored section vectors.
  std::vector<std::vector<std::int32_t>> section_tokens;
  std::vector<Vector> section_vectors;
  std::size_t padding = 0;
  /// Budgeted tokens of the whole page, for encoder pretraining.
  std::vector<std::int32_t> page_tokens;

  Vector mean_sentence;
  bool talk_empty = true;
  Vector image;
  bool image_present = false;

  std::size_t main_tokens = 0;
  std::size_t talk_tokens = 0;

  std::size_t section_count() const {
    return section_tokens.empty() ? section_vectors.size() : section_tokens.size();
  }
};

struct ForwardResult {
  Var logits;
  Var features;
  Var page;       // D_p (valid when the variant reads text)
  Var talk;       // T_p
  Var attention;  // alpha over summarized positions
};

struct Prediction {
  ClassDistribution distribution;
  QualityClass predicted = QualityClass::kStub;
  Vector page;
  Vector talk;
  Vector attention;
};

/// Parameter groups trained by each stage.
enum class TensorGroup { kEncoder, kPretrainHead, kSummarizer, kSummarizerHead, kTalk, kImage, kHead };

class Model {
 public:
  /// Registers the tensors the configured variant needs and initialises them from `seed`.
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  bool has_encoder() const { return encoder_.has_value(); }

  /// Fused-classifier logits. `dropout` is the head's mask in training mode.
  ForwardResult forward(Tape& tape, const Example& ex, const Vector* dropout = nullptr) const;
  /// Text-only logits through the summarizer's own head.
  Var summarizer_logits(Tape& tape, const Example& ex, const Vector* dropout = nullptr) const;
  /// Page-level logits through the toy encoder alone.
  Var pretrain_logits(Tape& tape, const Example& ex, const Vector* dropout = nullptr) const;

  Prediction predict(const Example& ex) const;

  /// Feature blocks [D_p ; T_p ; I_p] for the modalities the variant reads, in that order.
  struct ModalityBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
  };
  std::vector<ModalityBlock> modality_blocks() const;
  Vector modality_input(const Example& ex) const;
  /// Class probabilities from a (possibly perturbed) modality input vector.
  Vector probabilities_from_modalities(const Vector& input) const;

  std::vector<TensorId> group(TensorGroup g) const;
  std::vector<TensorId> all_tensors() const;
  /// Tensors reached by forward(): everything but the auxiliary heads.
  std::vector<TensorId> forward_tensors() const;

  int hidden_width(TensorGroup head) const;

  /// Named float32 tensors plus a JSON description next to it.
  void save(const std::filesystem::path& checkpoint, const std::filesystem::path& description) const;
  static Model load(const std::filesystem::path& checkpoint, const std::filesystem::path& description);

  std::string describe() const;

 private:
  Var page_vector(Tape& tape, const Example& ex, Var* attention) const;
  void initialise(std::uint64_t seed);

  ModelConfig config_;
  ParameterSet params_;
  std::optional<ToyEncoderParams> encoder_;
  std::optional<HeadParams> pretrain_head_;
  std::optional<SummarizerParams> summarizer_;
  std::optional<HeadParams> summarizer_head_;
  std::optional<TalkEncoderParams> talk_;
  std::optional<ImageProjection> image_;
  HeadParams head_{};
};

std::string_view to_string(EncoderMode mode);
EncoderMode parse_encoder_mode(std::string_view text);

}  // namespace nwqm
