#include "nwqm/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "nwqm/error.hpp"
#include "nwqm/random.hpp"

namespace nwqm {

LimeExplanation explain(const ScoreFn& score, const Vector& x, const LimeOptions& options, std::uint64_t seed) {
  if (options.samples < 2) throw Error("attribution needs at least 2 samples");
  const Eigen::Index f = x.size();
  LimeExplanation out;
  out.weights = Vector::Zero(f);

  const Vector base = score(x);
  base.maxCoeff(&out.target);

  // Features already at the baseline cannot move the output; they stay at 0.
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < f; ++j) {
    if (x(j) != 0.0) active.push_back(j);
  }
  const auto m = static_cast<Eigen::Index>(active.size());
  const auto n = static_cast<Eigen::Index>(options.samples);
  if (m == 0) {
    out.intercept = base(out.target);
    return out;
  }
  out.underdetermined = n < m;

  const double width = options.kernel_width > 0.0 ? options.kernel_width : 0.75 * std::sqrt(static_cast<double>(f));
  Rng rng(seed);
  Matrix z = Matrix::Ones(n, m);
  Vector y(n);
  Vector w(n);
  std::vector<Eigen::Index> slots(static_cast<std::size_t>(m));
  Vector perturbed = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t off = 0;
    if (i > 0) {
      off = 1 + rng.uniform_index(static_cast<std::size_t>(m));
      std::iota(slots.begin(), slots.end(), Eigen::Index{0});
      // Partial Fisher-Yates: the first `off` slots are a uniform subset.
      for (std::size_t s = 0; s < off; ++s) {
        std::swap(slots[s], slots[s + rng.uniform_index(slots.size() - s)]);
        z(i, slots[s]) = 0.0;
      }
    }
    for (Eigen::Index j = 0; j < m; ++j) perturbed(active[static_cast<std::size_t>(j)]) = z(i, j) * x(active[static_cast<std::size_t>(j)]);
    y(i) = score(perturbed)(out.target);
    w(i) = std::sqrt(std::exp(-static_cast<double>(off) / (width * width)));
  }

  const double wsum = w.sum();
  const Eigen::RowVectorXd z_mean = (w.transpose() * z) / wsum;
  const double y_mean = w.dot(y) / wsum;
  const Vector root = w.cwiseSqrt();
  const Matrix a = root.asDiagonal() * (z.rowwise() - z_mean);
  const Vector b = root.cwiseProduct(y.array().matrix() - Vector::Constant(n, y_mean));

  Vector beta;
  if (m <= n) {
    Matrix gram = a.transpose() * a;
    gram.diagonal().array() += options.ridge;
    beta = gram.ldlt().solve(a.transpose() * b);
  } else {
    Matrix gram = a * a.transpose();
    gram.diagonal().array() += options.ridge;
    beta = a.transpose() * gram.ldlt().solve(b);
  }
  if (!beta.allFinite()) throw NumericError("attribution surrogate has non-finite weights");
  for (Eigen::Index j = 0; j < m; ++j) out.weights(active[static_cast<std::size_t>(j)]) = beta(j);
  out.intercept = y_mean - z_mean.dot(beta);
  return out;
}

std::vector<double> block_scores(const Vector& weights, const std::vector<FeatureBlock>& blocks, std::size_t top_k) {
  const auto f = static_cast<std::size_t>(weights.size());
  std::vector<std::size_t> order(f);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(weights(static_cast<Eigen::Index>(a))) > std::abs(weights(static_cast<Eigen::Index>(b)));
  });
  order.resize(std::min(top_k, f));
  std::vector<double> sum(blocks.size(), 0.0);
  std::vector<std::size_t> count(blocks.size(), 0);
  for (std::size_t j : order) {
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      if (j >= blocks[b].offset && j < blocks[b].offset + blocks[b].size) {
        sum[b] += std::abs(weights(static_cast<Eigen::Index>(j)));
        ++count[b];
      }
    }
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (count[b] > 0) sum[b] /= static_cast<double>(count[b]);
  }
  return sum;
}

void AttributionReport::add(QualityClass group, const std::vector<double>& scores) {
  if (scores.size() != modalities.size()) throw DimensionError("attribution scores do not match the modality list");
  auto& row = mean[static_cast<std::size_t>(ordinal(group))];
  if (row.empty()) row.assign(modalities.size(), 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) row[i] += scores[i];
  ++pages[static_cast<std::size_t>(ordinal(group))];
}

void AttributionReport::finish() {
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (mean[c].empty()) mean[c].assign(modalities.size(), 0.0);
    for (double& v : mean[c]) v = pages[c] == 0 ? 0.0 : v / static_cast<double>(pages[c]);
  }
}

void AttributionReport::write_tsv(std::ostream& out) const {
  out << "class\tpages";
  for (const auto& m : modalities) out << '\t' << m;
  out << '\n';
  for (QualityClass c : kAllClasses) {
    const auto i = static_cast<std::size_t>(ordinal(c));
    out << to_string(c) << '\t' << pages[i];
    for (std::size_t k = 0; k < modalities.size(); ++k) {
      fmt::print(out, "\t{:.9g}", mean[i].empty() ? 0.0 : mean[i][k]);
    }
    out << '\n';
  }
}

}  // namespace nwqm
