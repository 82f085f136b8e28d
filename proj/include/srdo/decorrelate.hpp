#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "srdo/core.hpp"
#include "srdo/estimators.hpp"
#include "srdo/rng.hpp"

namespace srdo {

struct SrdoConfig {
  double weight_clip_lo = 0.05;
  double weight_clip_hi = 20.0;
  double classifier_regularization = 1e-4;
  int classifier_max_iterations = 500;
  int resample_replicas = 1;  // resampled rows per original row
  std::uint64_t seed = 0;
  /// Adds squares and pairwise products as classifier features. Gaussian
  /// log-density-ratios are quadratic, so this is the right family for
  /// normally distributed designs; off by default.
  bool quadratic_expansion = false;
  /// Classification mode: rows the approximate model predicts with
  /// min(p, 1-p) below this confidence floor are excluded from ratio training.
  double confidence_tau = 0.05;

  void validate() const {
    if (!(weight_clip_lo > 0.0 && weight_clip_lo < 1.0 && weight_clip_hi > 1.0))
      throw Error("weight clip bounds must satisfy 0 < lo < 1 < hi");
    if (classifier_regularization < 0.0) throw Error("regularization must be >= 0");
    if (resample_replicas < 1) throw Error("resample_replicas must be >= 1");
    if (!(confidence_tau >= 0.0 && confidence_tau < 0.5))
      throw Error("confidence_tau must lie in [0, 0.5)");
  }
};

/// Adds x_j^2 for every column and x_j * x_k for every pair j < k, after the
/// original columns: [x_1..x_p, x_1^2..x_p^2, x_1 x_2, x_1 x_3, ..., x_{p-1} x_p].
inline Matrix quadratic_expand(const Matrix& X) {
  const Eigen::Index n = X.rows(), p = X.cols();
  Matrix out(n, 2 * p + p * (p - 1) / 2);
  out.leftCols(p) = X;
  for (Eigen::Index j = 0; j < p; ++j) out.col(p + j) = X.col(j).array().square();
  Eigen::Index c = 2 * p;
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index k = j + 1; k < p; ++k)
      out.col(c++) = X.col(j).array() * X.col(k).array();
  return out;
}

/// Column-wise resampling with replacement: output cell (i, j) is drawn
/// uniformly from column j of X, independently across cells (row-major draw
/// order). The result has replicas * n rows and breaks the joint dependence
/// between columns while keeping each marginal.
inline DesignMatrix column_shuffle(const DesignMatrix& X, int replicas, Rng& rng) {
  X.validate();
  const Eigen::Index n = X.rows(), p = X.cols();
  DesignMatrix out;
  out.column_names = X.column_names;
  out.values.resize(replicas * n, p);
  for (Eigen::Index i = 0; i < replicas * n; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      out.values(i, j) = X.values(rng.next_index(static_cast<std::size_t>(n)), j);
  return out;
}

/// Probabilistic classifier separating original rows (Z = 0) from resampled
/// rows (Z = 1), fit as L2-regularized logistic regression.
struct DensityRatioModel {
  Coefficients classifier_coefficients;  // in expanded feature space when quadratic
  bool quadratic = false;
  Eigen::Index n_negative = 0;
  Eigen::Index n_positive = 0;
  struct TrainingMeta {
    int iterations = 0;
    double final_loss = 0.0;
    bool converged = true;
    std::uint64_t seed = 0;
  } training_meta;

  /// Classifier logit log[p(Z=1|x) / p(Z=0|x)] per row of X.
  Vector logit(const Matrix& X) const {
    const Matrix F = quadratic ? quadratic_expand(X) : X;
    if (F.cols() != classifier_coefficients.slopes.size())
      throw DimensionMismatch("density ratio model feature count");
    return (F * classifier_coefficients.slopes).array() + classifier_coefficients.intercept;
  }

  /// Log density ratio including the class-prior correction log(n_neg / n_pos).
  Vector log_ratio(const Matrix& X) const {
    return logit(X).array() +
           std::log(static_cast<double>(n_negative) / static_cast<double>(n_positive));
  }
};

/// Trains P(Z=1|x) on negatives X_neg vs positives X_pos by minimizing the
/// mean log-loss plus (regularization/2)||slopes||^2 with damped Newton.
/// Non-convergence is recorded in training_meta, not thrown.
inline DensityRatioModel fit_density_ratio(const DesignMatrix& X_neg, const DesignMatrix& X_pos,
                                           const SrdoConfig& config) {
  config.validate();
  if (X_neg.cols() != X_pos.cols()) throw DimensionMismatch("positive/negative column count");
  if (X_neg.rows() == 0 || X_pos.rows() == 0) throw EmptyInput("classifier training set");
  const Eigen::Index n0 = X_neg.rows(), n1 = X_pos.rows();

  DesignMatrix stacked;
  stacked.values.resize(n0 + n1, X_neg.cols());
  stacked.values.topRows(n0) = X_neg.values;
  stacked.values.bottomRows(n1) = X_pos.values;
  if (config.quadratic_expansion) stacked.values = quadratic_expand(stacked.values);

  ResponseVector z;
  z.task = Task::binary;
  z.values.resize(n0 + n1);
  z.values.head(n0).setConstant(-1.0);
  z.values.tail(n1).setConstant(1.0);

  EstimatorConfig cfg;
  cfg.method = Method::logistic;
  cfg.lambda2 = config.classifier_regularization;
  cfg.max_iterations = config.classifier_max_iterations;
  cfg.tolerance = 1e-8;
  const FitResult fit =
      fit_logistic(stacked, z, SampleWeights::uniform(n0 + n1), cfg);

  DensityRatioModel model;
  model.classifier_coefficients = fit.coefficients;
  model.quadratic = config.quadratic_expansion;
  model.n_negative = n0;
  model.n_positive = n1;
  model.training_meta = {fit.iterations, fit.objective, fit.converged, config.seed};
  return model;
}

namespace detail {

/// Raw ratio p(Z=1|x)/p(Z=0|x) with class-prior correction, clipped to the
/// configured bounds. Throws AllWeightsClipped when no raw weight lies inside.
inline Vector clipped_ratio(const DensityRatioModel& model, const Matrix& X,
                            const SrdoConfig& config) {
  const Vector lr = model.log_ratio(X);
  Vector raw = lr.array().exp();
  Eigen::Index inside = 0;
  for (Eigen::Index i = 0; i < raw.size(); ++i)
    if (raw[i] >= config.weight_clip_lo && raw[i] <= config.weight_clip_hi) ++inside;
  if (inside == 0) throw AllWeightsClipped();
  return raw.cwiseMax(config.weight_clip_lo).cwiseMin(config.weight_clip_hi);
}

}  // namespace detail

/// Density-ratio weights for the rows of X: w_i = p(Z=1|x_i) / p(Z=0|x_i)
/// times the class-imbalance correction n_neg/n_pos, clipped to
/// [weight_clip_lo, weight_clip_hi] and divided by the post-clip mean so the
/// mean is exactly 1.
inline SampleWeights estimate_weights(const DensityRatioModel& model, const DesignMatrix& X,
                                      const SrdoConfig& config) {
  config.validate();
  const Vector clipped = detail::clipped_ratio(model, X.values, config);
  return SampleWeights::from_raw(clipped,
                                 std::make_pair(config.weight_clip_lo, config.weight_clip_hi));
}

struct SrdoResult {
  SampleWeights weights;
  CorrelationDiagnostics before;
  CorrelationDiagnostics after;
  /// Set when weighting failed to improve the smallest eigenvalue of the
  /// correlation matrix; the returned weights are then uniform. (The mean
  /// absolute off-diagonal is not used as the criterion: reweighting lowers
  /// the large structural correlations while its reduced effective sample
  /// size adds noise to the many near-zero ones, so the matrix-wide mean can
  /// rise even when conditioning genuinely improves.)
  bool no_improvement = false;
  DensityRatioModel model;
};

/// The full reweighting pipeline: column-resample X, train the ratio
/// classifier, convert probabilities to clipped unit-mean weights, and report
/// conditioning diagnostics with and without the weights. X is expected to be
/// standardized. Deterministic given config.seed.
inline SrdoResult srdo(const DesignMatrix& X, const SrdoConfig& config) {
  config.validate();
  X.validate();
  SrdoResult result;
  result.before = weighted_correlation(X, SampleWeights::uniform(X.rows()));

  Rng rng(config.seed);
  const DesignMatrix shuffled = column_shuffle(X, config.resample_replicas, rng);
  result.model = fit_density_ratio(X, shuffled, config);
  result.weights = estimate_weights(result.model, X, config);
  result.after = weighted_correlation(X, result.weights);

  if (result.after.smallest_eigenvalue <= result.before.smallest_eigenvalue) {
    result.no_improvement = true;
    result.weights = SampleWeights::uniform(X.rows());
    result.after = result.before;
  }
  return result;
}

/// Classification-mode weights. Given an approximate model beta~ fitted on
/// (X, y), rows predicted confidently (min(p, 1-p) < confidence_tau) are
/// excluded from ratio training and receive weight 1; the remaining rows get
/// clipped_ratio / (p(1-p)), and everything is normalized to unit mean.
/// The clip applies to the density-ratio factor, so a constant divisor (e.g.
/// beta~ = 0, divisor 1/4) cancels under the final normalization.
inline SampleWeights classification_weights(const DesignMatrix& X,
                                            const Coefficients& approximate_model,
                                            const SrdoConfig& config) {
  config.validate();
  X.validate();
  const Eigen::Index n = X.rows();
  if (approximate_model.slopes.size() != X.cols())
    throw DimensionMismatch("approximate model slope count");

  const Vector eta =
      (X.values * approximate_model.slopes).array() + approximate_model.intercept;
  Vector p_tilde(n);
  std::vector<Eigen::Index> kept;
  kept.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    p_tilde[i] = 1.0 / (1.0 + std::exp(-eta[i]));
    if (std::min(p_tilde[i], 1.0 - p_tilde[i]) >= config.confidence_tau) kept.push_back(i);
  }
  if (kept.empty()) throw AllSamplesDropped();

  DesignMatrix X_kept;
  X_kept.values.resize(static_cast<Eigen::Index>(kept.size()), X.cols());
  for (std::size_t r = 0; r < kept.size(); ++r) X_kept.values.row(r) = X.values.row(kept[r]);

  Rng rng(config.seed);
  const DesignMatrix shuffled = column_shuffle(X_kept, config.resample_replicas, rng);
  const DensityRatioModel model = fit_density_ratio(X_kept, shuffled, config);
  const Vector ratio = detail::clipped_ratio(model, X_kept.values, config);

  Vector raw = Vector::Ones(n);
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const Eigen::Index i = kept[r];
    const double divisor = p_tilde[i] * (1.0 - p_tilde[i]);
    raw[i] = ratio[static_cast<Eigen::Index>(r)] / divisor;
  }
  return SampleWeights::from_raw(raw,
                                 std::make_pair(config.weight_clip_lo, config.weight_clip_hi));
}

}  // namespace srdo
