#pragma once

#include <span>
#include <string>
#include <vector>

#include "nwqm/autodiff.hpp"

namespace nwqm {

inline constexpr int kGruHidden = 100;
inline constexpr int kAttentionDim = 200;

/// One GRU direction:
///   z = sigmoid(Wz x + Uz h + bz)       update gate
///   r = sigmoid(Wr x + Ur h + br)       reset gate
///   c = tanh(Wc x + Uc (r * h) + bc)    candidate
///   h' = (1 - z) * h + z * c
struct GruDirectionParams {
  TensorId w_update, u_update, b_update;
  TensorId w_reset, u_reset, b_reset;
  TensorId w_candidate, u_candidate, b_candidate;
};

struct GruParams {
  GruDirectionParams forward;
  GruDirectionParams backward;
  int hidden = kGruHidden;
};

GruParams register_gru(ParameterSet& params, int input_dim, int hidden);

Var gru_cell(Tape& tape, const GruDirectionParams& p, Var x, Var h);

/// h_x = [forward_x ; backward_x]; both directions start from a zero state.
std::vector<Var> gru_bidirectional(Tape& tape, const GruParams& p, std::span<const Var> inputs);

/// Which vectors the attention weights pool: the printed output equation sums the
/// projected u_x; the hierarchical-attention convention sums the hidden states h_x.
enum class AttentionPooling { kProjected, kHidden };
enum class AttentionActivation { kSigmoid, kTanh };

struct AttentionOptions {
  AttentionPooling pooling = AttentionPooling::kProjected;
  AttentionActivation activation = AttentionActivation::kSigmoid;
};

/// u_x = act(W h_x + b), alpha = softmax_x(u_x . u_ctx), o = sum_x alpha_x u_x.
/// When the attention width differs from the hidden width, o is projected back to it.
struct AttentionParams {
  TensorId weight;   // attention_dim x hidden_width
  TensorId bias;     // attention_dim
  TensorId context;  // attention_dim
  bool has_output_projection = false;
  TensorId out_weight{};  // hidden_width x attention_dim
  TensorId out_bias{};
};

AttentionParams register_attention(ParameterSet& params, int hidden_width, int attention_dim);

struct AttentionResult {
  Var pooled;
  Var weights;
};

AttentionResult attention_pool(Tape& tape, const AttentionParams& p, std::span<const Var> hidden,
                               const AttentionOptions& options = {});

struct SummarizerParams {
  GruParams gru;
  AttentionParams attention;
};

struct SummarizerOptions {
  AttentionOptions attention;
  /// Drop padding slots entirely (their attention weight becomes exactly 0).
  bool mask_padding = false;
};

SummarizerParams register_summarizer(ParameterSet& params, int section_dim, int gru_hidden, int attention_dim);

/// Page vector from the genuine section vectors, left-padded with `padding` zero vectors
/// unless padding is masked. `weights` spans padding + sections positions when unmasked.
AttentionResult summarize(Tape& tape, const SummarizerParams& p, std::span<const Var> sections, std::size_t padding,
                          const SummarizerOptions& options = {});

}  // namespace nwqm
