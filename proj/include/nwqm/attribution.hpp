#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "nwqm/autodiff.hpp"
#include "nwqm/quality.hpp"

namespace nwqm {

/// Maps a feature vector to per-class scores (probabilities for a classifier).
using ScoreFn = std::function<Vector(const Vector& features)>;

struct LimeOptions {
  std::size_t samples = 1000;
  std::size_t top_k = 500;
  double ridge = 1e-3;
  /// Kernel width; <= 0 means 0.75 * sqrt(feature count).
  double kernel_width = 0.0;
};

struct LimeExplanation {
  /// Surrogate weight per feature; exactly 0 for features equal to the baseline.
  Vector weights;
  int target = 0;
  double intercept = 0.0;
  /// More features than samples: the surrogate leans on the ridge term.
  bool underdetermined = false;
};

/// Random binary masks (k ~ U{1..F} features switched to the zero baseline, first
/// sample unperturbed), weights sqrt(exp(-hamming / width^2)), weighted ridge fit
/// of the target score on the mask bits. The target is the top-scoring class of `x`.
LimeExplanation explain(const ScoreFn& score, const Vector& x, const LimeOptions& options, std::uint64_t seed);

struct FeatureBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Mean |weight| per block over the top_k features by |weight| (all features when
/// fewer); 0 for a block with no feature in the top set.
std::vector<double> block_scores(const Vector& weights, const std::vector<FeatureBlock>& blocks, std::size_t top_k);

struct AttributionReport {
  std::vector<std::string> modalities;
  /// [class][modality] mean of per-page block scores.
  std::array<std::vector<double>, kNumClasses> mean;
  std::array<std::size_t, kNumClasses> pages{};

  void add(QualityClass group, const std::vector<double>& scores);
  void finish();
  void write_tsv(std::ostream& out) const;
};

}  // namespace nwqm
