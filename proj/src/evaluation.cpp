#include "nwqm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <boost/math/special_functions/gamma.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "nwqm/error.hpp"

namespace nwqm {

namespace {

void require_paired(std::span<const QualityClass> a, std::span<const QualityClass> b, const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": " + std::to_string(a.size()) + " predictions for " +
                         std::to_string(b.size()) + " labels");
  }
}

std::size_t idx(QualityClass c) { return static_cast<std::size_t>(ordinal(c)); }

}  // namespace

double accuracy(std::span<const QualityClass> predicted, std::span<const QualityClass> truth) {
  require_paired(predicted, truth, "accuracy");
  if (truth.empty()) throw Error("accuracy of an empty prediction set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : counts) n += std::accumulate(row.begin(), row.end(), std::size_t{0});
  return n;
}

std::size_t ConfusionMatrix::support(QualityClass truth) const {
  const auto& row = counts[idx(truth)];
  return std::accumulate(row.begin(), row.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < kNumClasses; ++i) n += counts[i][i];
  return n;
}

void ConfusionMatrix::write_csv(std::ostream& out) const {
  out << "true\\predicted";
  for (QualityClass c : kAllClasses) out << ',' << to_string(c);
  out << '\n';
  for (QualityClass t : kAllClasses) {
    out << to_string(t);
    for (std::size_t p = 0; p < kNumClasses; ++p) out << ',' << counts[idx(t)][p];
    out << '\n';
  }
}

ConfusionMatrix confusion(std::span<const QualityClass> predicted, std::span<const QualityClass> truth) {
  require_paired(predicted, truth, "confusion");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < truth.size(); ++i) ++m.counts[idx(truth[i])][idx(predicted[i])];
  return m;
}

std::array<double, kNumClasses> mean_ordinal_distance(std::span<const QualityClass> predicted,
                                                      std::span<const QualityClass> truth) {
  require_paired(predicted, truth, "mean_ordinal_distance");
  std::array<double, kNumClasses> sum{};
  std::array<std::size_t, kNumClasses> errors{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == truth[i]) continue;
    sum[idx(truth[i])] += std::abs(ordinal(predicted[i]) - ordinal(truth[i]));
    ++errors[idx(truth[i])];
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (errors[c] > 0) sum[c] /= static_cast<double>(errors[c]);
  }
  return sum;
}

double chi_square_survival(double statistic, int df) {
  if (df <= 0) return 1.0;
  if (statistic <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * statistic);
}

StuartMaxwellResult stuart_maxwell(const Matrix& table) {
  if (table.rows() != table.cols() || table.rows() < 2) throw DimensionError("Stuart-Maxwell needs a square K x K table, K >= 2");
  const Eigen::Index k = table.rows() - 1;
  Vector d(k);
  Matrix s(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    d(i) = table.row(i).sum() - table.col(i).sum();
    for (Eigen::Index j = 0; j < k; ++j) {
      s(i, j) = i == j ? table.row(i).sum() + table.col(i).sum() - 2.0 * table(i, i) : -(table(i, j) + table(j, i));
    }
  }
  StuartMaxwellResult r;
  r.df = static_cast<int>(k);
  if (d.isZero(0.0)) return r;
  const Eigen::CompleteOrthogonalDecomposition<Matrix> cod(s);
  const Eigen::Index rank = cod.rank();
  r.df = static_cast<int>(rank);
  if (rank == 0) return r;
  r.statistic = d.dot(cod.pseudoInverse() * d);
  r.p_value = chi_square_survival(r.statistic, r.df);
  return r;
}

StuartMaxwellResult stuart_maxwell(std::span<const QualityClass> a, std::span<const QualityClass> b) {
  require_paired(a, b, "stuart_maxwell");
  Matrix table = Matrix::Zero(kNumClasses, kNumClasses);
  for (std::size_t i = 0; i < a.size(); ++i) table(ordinal(a[i]), ordinal(b[i])) += 1.0;
  return stuart_maxwell(table);
}

void QuartileReport::write_csv(std::ostream& out) const {
  out << "quartile,class,accuracy,support\n";
  for (std::size_t q = 0; q < 4; ++q) {
    for (QualityClass c : kAllClasses) {
      fmt::print(out, "Q{},{},{:.6f},{}\n", q + 1, to_string(c), class_accuracy[q][idx(c)],
                 class_support[q][idx(c)]);
    }
    fmt::print(out, "Q{},all,{:.6f},{}\n", q + 1, overall[q], members[q].size());
  }
}

QuartileReport quartile_report(std::span<const std::size_t> lengths, std::span<const QualityClass> predicted,
                               std::span<const QualityClass> truth) {
  require_paired(predicted, truth, "quartile_report");
  if (lengths.size() != truth.size()) throw DimensionError("quartile_report: lengths and labels differ in count");
  const std::size_t n = truth.size();
  if (n < 4) throw Error("quartile report needs at least 4 examples, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
  QuartileReport r;
  std::size_t at = 0;
  for (std::size_t q = 0; q < 4; ++q) {
    const std::size_t size = n / 4 + (q < n % 4 ? 1 : 0);
    r.members[q].assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                        order.begin() + static_cast<std::ptrdiff_t>(at + size));
    at += size;
    std::array<std::size_t, kNumClasses> hits{};
    std::size_t all_hits = 0;
    for (std::size_t i : r.members[q]) {
      ++r.class_support[q][idx(truth[i])];
      if (predicted[i] == truth[i]) {
        ++hits[idx(truth[i])];
        ++all_hits;
      }
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      r.class_accuracy[q][c] =
          r.class_support[q][c] == 0 ? 0.0 : static_cast<double>(hits[c]) / static_cast<double>(r.class_support[q][c]);
    }
    r.overall[q] = static_cast<double>(all_hits) / static_cast<double>(size);
  }
  return r;
}

}  // namespace nwqm
