#pragma once

#include <cmath>
#include <utility>

#include "srdo/linalg.hpp"
#include "srdo/types.hpp"

namespace srdo {

// Moment convention: population (divide-by-n) normalization throughout, i.e.
// variances are (1/n) * sum (x - mean)^2, NOT the (n-1) sample convention most
// libraries default to. Weighted moments divide by sum(w).

/// Per-column centering/scaling record; apply() reproduces the exact transform
/// on held-out data.
struct Scaler {
  Vector mean;
  Vector std;  // population standard deviation

  Matrix apply(const Matrix& X) const {
    if (X.cols() != mean.size()) throw DimensionMismatch("scaler/matrix column count");
    Matrix out = X;
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      out.col(j) = (X.col(j).array() - mean[j]) / std[j];
    return out;
  }

  /// Maps coefficients fitted on standardized data back to the raw scale.
  Coefficients unscale(const Coefficients& c) const {
    Coefficients raw;
    raw.slopes = c.slopes.array() / std.array();
    raw.intercept = c.intercept - (c.slopes.array() * mean.array() / std.array()).sum();
    return raw;
  }
};

/// Centers and scales every column to mean 0, population std 1.
/// Throws ZeroVarianceColumn for any column with variance below 1e-12; the
/// caller must drop such columns (or keep the raw data) explicitly.
inline std::pair<DesignMatrix, Scaler> standardize(const DesignMatrix& X) {
  X.validate();
  const Eigen::Index n = X.rows(), p = X.cols();
  Scaler sc;
  sc.mean.resize(p);
  sc.std.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    sc.mean[j] = X.values.col(j).mean();
    const double var = (X.values.col(j).array() - sc.mean[j]).square().sum() / n;
    if (var < 1e-12) throw ZeroVarianceColumn(static_cast<std::size_t>(j));
    sc.std[j] = std::sqrt(var);
  }
  DesignMatrix out;
  out.values = sc.apply(X.values);
  out.column_names = X.column_names;
  return {std::move(out), std::move(sc)};
}

/// Weighted correlation matrix of X with conditioning diagnostics.
///
/// Weighted means c_j = sum_i w_i x_ij / sum_i w_i, weighted covariance
/// sum_i w_i (x_i - c)(x_i - c)^T / sum_i w_i, rescaled to unit diagonal.
inline CorrelationDiagnostics weighted_correlation(const DesignMatrix& X,
                                                   const SampleWeights& w) {
  X.validate();
  w.validate();
  const Eigen::Index n = X.rows(), p = X.cols();
  if (w.values.size() != n) throw DimensionMismatch("weights/design row count");

  const double wsum = w.values.sum();
  const Vector c = X.values.transpose() * w.values / wsum;
  Matrix centered = X.values.rowwise() - c.transpose();
  Matrix cov = centered.transpose() * (centered.array().colwise() * w.values.array()).matrix();
  cov /= wsum;

  Vector sd(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (cov(j, j) < 1e-12) throw DegenerateWeightedVariance(static_cast<std::size_t>(j));
    sd[j] = std::sqrt(cov(j, j));
  }

  CorrelationDiagnostics d;
  d.correlation.resize(p, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index k = 0; k < p; ++k)
      d.correlation(j, k) = (j == k) ? 1.0 : cov(j, k) / (sd[j] * sd[k]);

  d.max_offdiag = 0.0;
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index k = j + 1; k < p; ++k)
      d.max_offdiag = std::max(d.max_offdiag, std::abs(d.correlation(j, k)));

  d.smallest_eigenvalue = smallest_eigenvalue(d.correlation);
  d.gershgorin_bound = 1.0 - static_cast<double>(p - 1) * d.max_offdiag;
  d.weight_second_moment = w.values.squaredNorm() / n;
  d.effective_sample_size = (wsum * wsum) / w.values.squaredNorm();
  return d;
}

}  // namespace srdo
