#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "nwqm/autodiff.hpp"
#include "nwqm/quality.hpp"

namespace nwqm {

double accuracy(std::span<const QualityClass> predicted, std::span<const QualityClass> truth);

/// Rows are the true class, columns the prediction, both in ordinal order Stub..FA.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};

  std::size_t total() const;
  std::size_t support(QualityClass truth) const;
  std::size_t trace() const;
  /// Plot-ready CSV with a header row of predicted labels.
  void write_csv(std::ostream& out) const;
};

ConfusionMatrix confusion(std::span<const QualityClass> predicted, std::span<const QualityClass> truth);

/// Per true class: mean |ordinal(pred) - ordinal(true)| over its misclassified
/// examples; 0 for a class without errors.
std::array<double, kNumClasses> mean_ordinal_distance(std::span<const QualityClass> predicted,
                                                      std::span<const QualityClass> truth);

struct StuartMaxwellResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

/// Upper tail of the chi-square distribution.
double chi_square_survival(double statistic, int df);

/// Marginal homogeneity of a K x K paired table (rows: rater A, columns: rater B).
/// Uses the first K-1 categories; a singular covariance falls back to the
/// pseudo-inverse with df equal to its rank.
StuartMaxwellResult stuart_maxwell(const Matrix& table);
StuartMaxwellResult stuart_maxwell(std::span<const QualityClass> a, std::span<const QualityClass> b);

struct QuartileReport {
  /// Indices into the input, per quartile, ordered shortest first.
  std::array<std::vector<std::size_t>, 4> members;
  std::array<std::array<double, kNumClasses>, 4> class_accuracy{};
  std::array<std::array<std::size_t, kNumClasses>, 4> class_support{};
  std::array<double, 4> overall{};

  /// quartile,class,accuracy,support rows.
  void write_csv(std::ostream& out) const;
};

/// Stable ascending sort by length, four contiguous groups; the remainder goes
/// to the earliest quartiles. Needs at least four examples.
QuartileReport quartile_report(std::span<const std::size_t> lengths, std::span<const QualityClass> predicted,
                               std::span<const QualityClass> truth);

}  // namespace nwqm
