#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "nwqm/autodiff.hpp"
#include "nwqm/quality.hpp"
#include "nwqm/random.hpp"

namespace nwqm {

/// Pairwise combination of u and v. |u-v| and u*v are elementwise.
enum class FusionMode {
  kConcat,          // (u, v)
  kConcatDiff,      // (u, v, |u-v|)
  kConcatDiffProd,  // (u, v, |u-v|, u*v)
  kConcatProd,      // (u, v, u*v)
  kDiffProd,        // (|u-v|, u*v)
  kDiff,            // (|u-v|)
  kProd,            // (u*v)
};

inline constexpr std::array<FusionMode, 7> kAllFusionModes = {
    FusionMode::kConcat,   FusionMode::kConcatDiff, FusionMode::kConcatDiffProd, FusionMode::kConcatProd,
    FusionMode::kDiffProd, FusionMode::kDiff,       FusionMode::kProd};

std::string_view to_string(FusionMode mode);
/// Accepts the printed spellings, e.g. "u,v,|u-v|" (blanks and parentheses ignored).
FusionMode parse_fusion_mode(std::string_view text);

bool uses_elementwise(FusionMode mode);
std::size_t fused_dim(FusionMode mode, std::size_t u_dim, std::size_t v_dim);

Var fuse(Tape& tape, Var u, Var v, FusionMode mode);
Vector fuse(const Vector& u, const Vector& v, FusionMode mode);

/// Which modalities reach the classifier.
enum class Variant { kFull, kWithoutImage, kWithoutTalk, kWithoutTalkImage, kTalkOnly, kImageOnly };

inline constexpr std::array<Variant, 6> kAllVariants = {Variant::kFull,       Variant::kWithoutImage,
                                                        Variant::kWithoutTalk, Variant::kWithoutTalkImage,
                                                        Variant::kTalkOnly,   Variant::kImageOnly};

std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view text);
/// Row label used in accuracy tables ("NwQM", "NwQM-w/oI", ...).
std::string_view display_name(Variant variant);

bool uses_text(Variant v);
bool uses_talk(Variant v);
bool uses_image(Variant v);

/// With all three modalities the pair mode fuses two of them and the third is appended.
enum class FoldOrder { kTextTalk, kTextImage };

std::string_view to_string(FoldOrder fold);
FoldOrder parse_fold_order(std::string_view text);

struct ImageProjection {
  TensorId weight;  // proj_dim x image_dim
  TensorId bias;
};

ImageProjection register_image_projection(ParameterSet& params, int image_dim, int proj_dim);

struct FusionSpec {
  Variant variant = Variant::kFull;
  FusionMode mode = FusionMode::kConcatDiff;
  FoldOrder fold = FoldOrder::kTextTalk;
};

/// Feature vector for the classifier:
///   full      fuse(D, T) ++ P(I)      (fold text-image: fuse(D, P(I)) ++ T)
///   w/oI      fuse(D, T)
///   w/oT      fuse(D, P(I))
///   w/oTI     D
///   talk-only T
///   image-only P(I)
/// Unused inputs may be any Var; they are not read.
Var fuse_modalities(Tape& tape, const FusionSpec& spec, const ImageProjection& projection, Var page, Var talk,
                    Var image);

std::size_t feature_dim(const FusionSpec& spec, std::size_t page_dim, std::size_t talk_dim, std::size_t image_proj_dim);

struct HeadParams {
  TensorId hidden_weight;  // hidden x features
  TensorId hidden_bias;
  TensorId out_weight;  // classes x hidden
  TensorId out_bias;
};

HeadParams register_head(ParameterSet& params, const std::string& prefix, int feature_dim, int hidden_dim,
                         int classes = kNumClasses);

/// Inverted dropout mask: each unit kept with probability 1 - p and scaled by 1 / (1 - p).
Vector dropout_mask(Eigen::Index n, double p, Rng& rng);

/// dense -> tanh -> dropout (training only) -> dense. Returns logits.
/// Throws NumericError naming the layer when an activation is not finite.
Var classify_logits(Tape& tape, const HeadParams& head, Var features, const Vector* dropout = nullptr);

struct ClassDistribution {
  std::array<double, kNumClasses> p{};

  QualityClass argmax() const;
};

ClassDistribution to_distribution(const Vector& probabilities);

/// Softmax over the head's logits. Training mode draws a dropout mask from `seed`.
ClassDistribution classify(const ParameterSet& params, const HeadParams& head, const Vector& features,
                           bool training = false, std::uint64_t seed = 0, double dropout = 0.5);

}  // namespace nwqm
