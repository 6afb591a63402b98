#include "nwqm/fusion.hpp"

#include <algorithm>
#include <cctype>
#include <vector>

#include "nwqm/error.hpp"

namespace nwqm {

namespace {

std::string squeeze(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c)) == 0 && c != '(' && c != ')') {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

}  // namespace

std::string_view to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kConcat: return "u,v";
    case FusionMode::kConcatDiff: return "u,v,|u-v|";
    case FusionMode::kConcatDiffProd: return "u,v,|u-v|,u*v";
    case FusionMode::kConcatProd: return "u,v,u*v";
    case FusionMode::kDiffProd: return "|u-v|,u*v";
    case FusionMode::kDiff: return "|u-v|";
    case FusionMode::kProd: return "u*v";
  }
  return "?";
}

FusionMode parse_fusion_mode(std::string_view text) {
  const std::string key = squeeze(text);
  for (FusionMode m : kAllFusionModes) {
    if (key == to_string(m)) return m;
  }
  throw ConfigError("unknown fusion mode '" + std::string(text) + "'");
}

bool uses_elementwise(FusionMode mode) { return mode != FusionMode::kConcat; }

std::size_t fused_dim(FusionMode mode, std::size_t u, std::size_t v) {
  switch (mode) {
    case FusionMode::kConcat: return u + v;
    case FusionMode::kConcatDiff: return u + v + u;
    case FusionMode::kConcatDiffProd: return u + v + 2 * u;
    case FusionMode::kConcatProd: return u + v + u;
    case FusionMode::kDiffProd: return 2 * u;
    case FusionMode::kDiff: return u;
    case FusionMode::kProd: return u;
  }
  return 0;
}

Var fuse(Tape& tape, Var u, Var v, FusionMode mode) {
  if (uses_elementwise(mode) && tape.value(u).size() != tape.value(v).size()) {
    throw DimensionError("fusion mode " + std::string(to_string(mode)) + " needs equal sizes, got " +
                         std::to_string(tape.value(u).size()) + " and " + std::to_string(tape.value(v).size()));
  }
  const auto diff = [&] { return tape.abs(tape.sub(u, v)); };
  const auto prod = [&] { return tape.mul(u, v); };
  std::vector<Var> parts;
  switch (mode) {
    case FusionMode::kConcat: parts = {u, v}; break;
    case FusionMode::kConcatDiff: parts = {u, v, diff()}; break;
    case FusionMode::kConcatDiffProd: parts = {u, v, diff(), prod()}; break;
    case FusionMode::kConcatProd: parts = {u, v, prod()}; break;
    case FusionMode::kDiffProd: parts = {diff(), prod()}; break;
    case FusionMode::kDiff: parts = {diff()}; break;
    case FusionMode::kProd: parts = {prod()}; break;
  }
  return tape.concat(parts);
}

Vector fuse(const Vector& u, const Vector& v, FusionMode mode) {
  ParameterSet none;
  Tape tape(none);
  return tape.value(fuse(tape, tape.constant(u), tape.constant(v), mode));
}

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::kFull: return "full";
    case Variant::kWithoutImage: return "w/oI";
    case Variant::kWithoutTalk: return "w/oT";
    case Variant::kWithoutTalkImage: return "w/oTI";
    case Variant::kTalkOnly: return "talk-only";
    case Variant::kImageOnly: return "image-only";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  std::string key = squeeze(text);
  if (key == "full") return Variant::kFull;
  if (key == "w/oi" || key == "woi" || key == "without-image") return Variant::kWithoutImage;
  if (key == "w/ot" || key == "wot" || key == "without-talk") return Variant::kWithoutTalk;
  if (key == "w/oti" || key == "woti" || key == "text-only") return Variant::kWithoutTalkImage;
  if (key == "talk-only" || key == "talk") return Variant::kTalkOnly;
  if (key == "image-only" || key == "image") return Variant::kImageOnly;
  throw ConfigError("unknown variant '" + std::string(text) + "'");
}

std::string_view display_name(Variant variant) {
  switch (variant) {
    case Variant::kFull: return "NwQM";
    case Variant::kWithoutImage: return "NwQM-w/oI";
    case Variant::kWithoutTalk: return "NwQM-w/oT";
    case Variant::kWithoutTalkImage: return "NwQM-w/oTI";
    case Variant::kTalkOnly: return "Talk";
    case Variant::kImageOnly: return "Image";
  }
  return "?";
}

bool uses_text(Variant v) { return v != Variant::kTalkOnly && v != Variant::kImageOnly; }
bool uses_talk(Variant v) {
  return v == Variant::kFull || v == Variant::kWithoutImage || v == Variant::kTalkOnly;
}
bool uses_image(Variant v) {
  return v == Variant::kFull || v == Variant::kWithoutTalk || v == Variant::kImageOnly;
}

std::string_view to_string(FoldOrder fold) { return fold == FoldOrder::kTextTalk ? "text-talk" : "text-image"; }

FoldOrder parse_fold_order(std::string_view text) {
  const std::string key = squeeze(text);
  if (key == "text-talk") return FoldOrder::kTextTalk;
  if (key == "text-image") return FoldOrder::kTextImage;
  throw ConfigError("unknown fold order '" + std::string(text) + "'");
}

ImageProjection register_image_projection(ParameterSet& params, int image_dim, int proj_dim) {
  return ImageProjection{params.add("image.weight", proj_dim, image_dim), params.add("image.bias", proj_dim)};
}

Var fuse_modalities(Tape& tape, const FusionSpec& spec, const ImageProjection& projection, Var page, Var talk,
                    Var image) {
  const auto projected = [&] { return tape.affine(projection.weight, projection.bias, image); };
  switch (spec.variant) {
    case Variant::kFull: {
      const Var img = projected();
      const bool text_talk = spec.fold == FoldOrder::kTextTalk;
      const Var parts[] = {fuse(tape, page, text_talk ? talk : img, spec.mode), text_talk ? img : talk};
      return tape.concat(parts);
    }
    case Variant::kWithoutImage: return fuse(tape, page, talk, spec.mode);
    case Variant::kWithoutTalk: return fuse(tape, page, projected(), spec.mode);
    case Variant::kWithoutTalkImage: return page;
    case Variant::kTalkOnly: return talk;
    case Variant::kImageOnly: return projected();
  }
  throw Error("unhandled variant");
}

std::size_t feature_dim(const FusionSpec& spec, std::size_t page_dim, std::size_t talk_dim,
                        std::size_t image_proj_dim) {
  switch (spec.variant) {
    case Variant::kFull:
      return spec.fold == FoldOrder::kTextTalk ? fused_dim(spec.mode, page_dim, talk_dim) + image_proj_dim
                                               : fused_dim(spec.mode, page_dim, image_proj_dim) + talk_dim;
    case Variant::kWithoutImage: return fused_dim(spec.mode, page_dim, talk_dim);
    case Variant::kWithoutTalk: return fused_dim(spec.mode, page_dim, image_proj_dim);
    case Variant::kWithoutTalkImage: return page_dim;
    case Variant::kTalkOnly: return talk_dim;
    case Variant::kImageOnly: return image_proj_dim;
  }
  return 0;
}

HeadParams register_head(ParameterSet& params, const std::string& prefix, int feature_dim, int hidden_dim,
                         int classes) {
  HeadParams h;
  h.hidden_weight = params.add(prefix + ".hidden.weight", hidden_dim, feature_dim);
  h.hidden_bias = params.add(prefix + ".hidden.bias", hidden_dim);
  h.out_weight = params.add(prefix + ".out.weight", classes, hidden_dim);
  h.out_bias = params.add(prefix + ".out.bias", classes);
  return h;
}

Vector dropout_mask(Eigen::Index n, double p, Rng& rng) {
  if (p <= 0.0) return Vector::Ones(n);
  if (p >= 1.0) throw Error("dropout probability must be below 1");
  const double keep_scale = 1.0 / (1.0 - p);
  Vector mask(n);
  for (Eigen::Index i = 0; i < n; ++i) mask(i) = rng.bernoulli(p) ? 0.0 : keep_scale;
  return mask;
}

Var classify_logits(Tape& tape, const HeadParams& head, Var features, const Vector* dropout) {
  Var hidden = tape.tanh(tape.affine(head.hidden_weight, head.hidden_bias, features));
  if (!tape.value(hidden).allFinite()) throw NumericError("non-finite activation in classifier hidden layer");
  if (dropout != nullptr) hidden = tape.scale(hidden, *dropout);
  const Var logits = tape.affine(head.out_weight, head.out_bias, hidden);
  if (!tape.value(logits).allFinite()) throw NumericError("non-finite activation in classifier output layer");
  return logits;
}

QualityClass ClassDistribution::argmax() const {
  return class_from_ordinal(static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()));
}

ClassDistribution to_distribution(const Vector& probabilities) {
  if (probabilities.size() != kNumClasses) throw DimensionError("class distribution must have 6 entries");
  ClassDistribution d;
  for (int i = 0; i < kNumClasses; ++i) d.p[static_cast<std::size_t>(i)] = probabilities(i);
  return d;
}

ClassDistribution classify(const ParameterSet& params, const HeadParams& head, const Vector& features, bool training,
                           std::uint64_t seed, double dropout) {
  Tape tape(params);
  Vector mask;
  if (training) {
    Rng rng(seed);
    mask = dropout_mask(params[head.hidden_weight].value.rows(), dropout, rng);
  }
  const Var logits = classify_logits(tape, head, tape.constant(features), training ? &mask : nullptr);
  return to_distribution(tape.value(tape.softmax(logits)));
}

}  // namespace nwqm
