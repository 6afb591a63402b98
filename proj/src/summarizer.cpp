#include "nwqm/summarizer.hpp"

#include "nwqm/error.hpp"

namespace nwqm {

namespace {

GruDirectionParams register_direction(ParameterSet& params, const std::string& prefix, int input_dim, int hidden) {
  GruDirectionParams d;
  d.w_update = params.add(prefix + ".w_update", hidden, input_dim);
  d.u_update = params.add(prefix + ".u_update", hidden, hidden);
  d.b_update = params.add(prefix + ".b_update", hidden);
  d.w_reset = params.add(prefix + ".w_reset", hidden, input_dim);
  d.u_reset = params.add(prefix + ".u_reset", hidden, hidden);
  d.b_reset = params.add(prefix + ".b_reset", hidden);
  d.w_candidate = params.add(prefix + ".w_candidate", hidden, input_dim);
  d.u_candidate = params.add(prefix + ".u_candidate", hidden, hidden);
  d.b_candidate = params.add(prefix + ".b_candidate", hidden);
  return d;
}

}  // namespace

GruParams register_gru(ParameterSet& params, int input_dim, int hidden) {
  GruParams p;
  p.forward = register_direction(params, "gru.forward", input_dim, hidden);
  p.backward = register_direction(params, "gru.backward", input_dim, hidden);
  p.hidden = hidden;
  return p;
}

Var gru_cell(Tape& tape, const GruDirectionParams& p, Var x, Var h) {
  const Var z = tape.sigmoid(tape.add(tape.affine(p.w_update, p.b_update, x), tape.matvec(p.u_update, h)));
  const Var r = tape.sigmoid(tape.add(tape.affine(p.w_reset, p.b_reset, x), tape.matvec(p.u_reset, h)));
  const Var c =
      tape.tanh(tape.add(tape.affine(p.w_candidate, p.b_candidate, x), tape.matvec(p.u_candidate, tape.mul(r, h))));
  return tape.add(tape.mul(tape.one_minus(z), h), tape.mul(z, c));
}

std::vector<Var> gru_bidirectional(Tape& tape, const GruParams& p, std::span<const Var> inputs) {
  const std::size_t n = inputs.size();
  if (n == 0) throw DimensionError("bidirectional GRU needs at least one input");
  std::vector<Var> fwd(n);
  std::vector<Var> bwd(n);
  Var h = tape.zeros(p.hidden);
  for (std::size_t x = 0; x < n; ++x) fwd[x] = h = gru_cell(tape, p.forward, inputs[x], h);
  h = tape.zeros(p.hidden);
  for (std::size_t x = n; x-- > 0;) bwd[x] = h = gru_cell(tape, p.backward, inputs[x], h);
  std::vector<Var> out(n);
  for (std::size_t x = 0; x < n; ++x) {
    const Var halves[] = {fwd[x], bwd[x]};
    out[x] = tape.concat(halves);
  }
  return out;
}

AttentionParams register_attention(ParameterSet& params, int hidden_width, int attention_dim) {
  AttentionParams p;
  p.weight = params.add("attention.weight", attention_dim, hidden_width);
  p.bias = params.add("attention.bias", attention_dim);
  p.context = params.add("attention.context", attention_dim);
  if (attention_dim != hidden_width) {
    p.has_output_projection = true;
    p.out_weight = params.add("attention.out.weight", hidden_width, attention_dim);
    p.out_bias = params.add("attention.out.bias", hidden_width);
  }
  return p;
}

AttentionResult attention_pool(Tape& tape, const AttentionParams& p, std::span<const Var> hidden,
                               const AttentionOptions& options) {
  if (hidden.empty()) throw DimensionError("attention over an empty sequence");
  const Var context = tape.parameter(p.context);
  std::vector<Var> projected;
  std::vector<Var> scores;
  projected.reserve(hidden.size());
  scores.reserve(hidden.size());
  for (Var h : hidden) {
    const Var pre = tape.affine(p.weight, p.bias, h);
    const Var u = options.activation == AttentionActivation::kSigmoid ? tape.sigmoid(pre) : tape.tanh(pre);
    projected.push_back(u);
    scores.push_back(tape.dot(u, context));
  }
  const Var weights = tape.softmax(tape.concat(scores));
  if (options.pooling == AttentionPooling::kHidden) return {tape.weighted_sum(weights, hidden), weights};
  Var pooled = tape.weighted_sum(weights, projected);
  if (p.has_output_projection) pooled = tape.affine(p.out_weight, p.out_bias, pooled);
  return {pooled, weights};
}

SummarizerParams register_summarizer(ParameterSet& params, int section_dim, int gru_hidden, int attention_dim) {
  SummarizerParams p;
  p.gru = register_gru(params, section_dim, gru_hidden);
  p.attention = register_attention(params, 2 * gru_hidden, attention_dim);
  return p;
}

AttentionResult summarize(Tape& tape, const SummarizerParams& p, std::span<const Var> sections, std::size_t padding,
                          const SummarizerOptions& options) {
  if (sections.empty()) throw DimensionError("page has no sections to summarize");
  std::vector<Var> inputs;
  if (!options.mask_padding) {
    const Eigen::Index dim = tape.value(sections.front()).size();
    const Var pad = tape.zeros(dim);
    inputs.assign(padding, pad);
  }
  inputs.insert(inputs.end(), sections.begin(), sections.end());
  const auto hidden = gru_bidirectional(tape, p.gru, inputs);
  return attention_pool(tape, p.attention, hidden, options.attention);
}

}  // namespace nwqm
