#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "srdo/core.hpp"
#include "srdo/rng.hpp"

namespace srdo {

// Loss scaling convention: every penalized objective uses the mean-loss form
//   (1/(2n)) sum_i w_i (y_i - beta0 - x_i.beta)^2 + lambda1 ||beta||_1 + (lambda2/2) Q(beta)
// (logistic: (1/n) sum_i w_i log(1 + exp(-y_i eta_i)) + (lambda2/2) ||slopes||^2),
// so lambda values are comparable across sample sizes. With this scaling the
// smallest lambda1 that zeroes every slope is max_j |(1/n) sum_i w_i x_ij (y_i - ybar_w)|.
// The intercept is never penalized.

enum class Method { ols, lasso, elastic_net, ulasso, iilasso, logistic };

struct EstimatorConfig {
  Method method = Method::ols;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  bool fit_intercept = true;
  int max_iterations = 10000;
  double tolerance = 1e-8;  // max coefficient change per sweep / gradient norm

  void validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0) throw Error("penalties must be nonnegative");
    if (!(tolerance > 0.0)) throw Error("tolerance must be positive");
    if (max_iterations < 1) throw Error("max_iterations must be >= 1");
  }
};

enum class PenaltyKind { ulasso_C, iilasso_R };

/// Correlation-driven penalty coupling matrix, zero diagonal.
/// ulasso_C: C_jk = r_jk^2; iilasso_R: R_jk = |r_jk| / (1 - |r_jk|), capped at
/// 1e6 once |r_jk| > 1 - 1e-6.
struct PenaltyMatrix {
  PenaltyKind kind = PenaltyKind::ulasso_C;
  Matrix values;
};

inline PenaltyMatrix build_penalty_matrix(const DesignMatrix& X, PenaltyKind kind) {
  X.validate();
  const Eigen::Index n = X.rows(), p = X.cols();
  PenaltyMatrix out;
  out.kind = kind;
  out.values = Matrix::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index k = j + 1; k < p; ++k) {
      const double r = std::abs(X.values.col(j).dot(X.values.col(k))) / n;
      double entry;
      if (kind == PenaltyKind::ulasso_C) {
        entry = r * r;
      } else {
        entry = (r > 1.0 - 1e-6) ? 1e6 : r / (1.0 - r);
      }
      out.values(j, k) = out.values(k, j) = entry;
    }
  }
  return out;
}

struct FitResult {
  Coefficients coefficients;
  bool converged = true;
  int iterations = 0;
  double objective = 0.0;
};

namespace detail {

inline void check_xyw(const DesignMatrix& X, const ResponseVector& y, const SampleWeights& w) {
  X.validate();
  y.validate();
  w.validate();
  if (y.values.size() != X.rows()) throw DimensionMismatch("response/design row count");
  if (w.values.size() != X.rows()) throw DimensionMismatch("weights/design row count");
}

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace detail

/// Exact weighted least squares via the weighted normal equations.
/// Throws SingularGram when the weighted Gram matrix has smallest eigenvalue
/// <= 1e-10 (exact rank deficiency cannot be rescued by reweighting).
inline FitResult fit_wls(const DesignMatrix& X, const ResponseVector& y, const SampleWeights& w,
                         const EstimatorConfig& config = {}) {
  detail::check_xyw(X, y, w);
  if (y.task != Task::regression) throw Error("fit_wls expects a regression response");
  const Eigen::Index n = X.rows(), p = X.cols();
  const Eigen::Index d = config.fit_intercept ? p + 1 : p;

  Matrix A(n, d);
  if (config.fit_intercept) {
    A.col(0).setOnes();
    A.rightCols(p) = X.values;
  } else {
    A = X.values;
  }

  const Matrix Aw = (A.array().colwise() * w.values.array()).matrix();
  const Matrix G = A.transpose() * Aw / static_cast<double>(n);
  if (smallest_eigenvalue(G) <= 1e-10) throw SingularGram();
  const Vector rhs = Aw.transpose() * y.values / static_cast<double>(n);
  const Vector theta = G.ldlt().solve(rhs);

  FitResult fit;
  if (config.fit_intercept) {
    fit.coefficients.intercept = theta[0];
    fit.coefficients.slopes = theta.tail(p);
  } else {
    fit.coefficients.intercept = 0.0;
    fit.coefficients.slopes = theta;
  }
  fit.iterations = 1;
  const Vector r = y.values - A * theta;
  fit.objective = 0.5 * (w.values.array() * r.array().square()).sum() / n;
  return fit;
}

/// Cyclic coordinate descent for lasso / elastic net / ULasso / IILasso.
///
/// Per-coordinate closed forms (a_j = (1/n) sum w x_ij^2, rho_j the weighted
/// partial-residual correlation):
///   lasso        beta_j = S(rho_j, l1) / a_j
///   elastic net  beta_j = S(rho_j, l1) / (a_j + l2)
///   ulasso       beta_j = S(rho_j - l2 * sum_{k!=j} C_jk beta_k, l1) / a_j
///   iilasso      beta_j = S(rho_j, l1 + l2 * sum_{k!=j} R_jk |beta_k|) / a_j
/// Each step solves its one-dimensional subproblem exactly, so the objective
/// never increases across sweeps (for IILasso convergence is to a stationary
/// point of the non-convex objective). The intercept is refreshed to the
/// weighted residual mean at the top of every sweep.
///
/// `sweep_objectives`, when non-null, receives the objective value after each
/// sweep.
inline FitResult fit_coordinate_descent(const DesignMatrix& X, const ResponseVector& y,
                                        const SampleWeights& w, const EstimatorConfig& config,
                                        const std::optional<PenaltyMatrix>& penalty = {},
                                        std::vector<double>* sweep_objectives = nullptr) {
  detail::check_xyw(X, y, w);
  config.validate();
  if (y.task != Task::regression) throw Error("coordinate descent expects a regression response");
  const Eigen::Index n = X.rows(), p = X.cols();
  const Method m = config.method;
  if (m == Method::ulasso || m == Method::iilasso) {
    if (!penalty) throw Error("ulasso/iilasso need a penalty matrix");
    if (penalty->values.rows() != p) throw DimensionMismatch("penalty matrix size");
  }

  const Vector& wv = w.values;
  const double wsum = wv.sum();
  Vector a(p);
  Matrix Xw(n, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    Xw.col(j) = X.values.col(j).array() * wv.array();
    a[j] = X.values.col(j).dot(Xw.col(j)) / n;
  }

  // The signed ULasso cross terms can make the quadratic part indefinite and
  // the objective unbounded below; refuse rather than silently diverge.
  // (IILasso's |b|^T R |b| is nonnegative, so it stays bounded.)
  if (m == Method::ulasso && config.lambda2 > 0.0) {
    Matrix Xc = X.values;
    if (config.fit_intercept) {
      const Vector c = X.values.transpose() * wv / wsum;
      Xc = X.values.rowwise() - c.transpose();
    }
    const Matrix quad =
        Xc.transpose() * (Xc.array().colwise() * wv.array()).matrix() / n +
        config.lambda2 * penalty->values;
    if (smallest_eigenvalue(quad) < -1e-10) throw IndefinitePenalty();
  }

  Vector beta = Vector::Zero(p);
  double beta0 = 0.0;
  Vector resid = y.values;  // y - beta0 - X beta

  const auto objective = [&]() {
    double f = 0.5 * (wv.array() * resid.array().square()).sum() / n;
    f += config.lambda1 * beta.lpNorm<1>();
    if (m == Method::elastic_net) f += 0.5 * config.lambda2 * beta.squaredNorm();
    if (m == Method::ulasso) f += 0.5 * config.lambda2 * beta.dot(penalty->values * beta);
    if (m == Method::iilasso) {
      const Vector ab = beta.cwiseAbs();
      f += 0.5 * config.lambda2 * ab.dot(penalty->values * ab);
    }
    return f;
  };

  FitResult fit;
  fit.converged = false;
  int sweep = 0;
  for (; sweep < config.max_iterations; ++sweep) {
    double max_change = 0.0;

    if (config.fit_intercept) {
      const double new_b0 = beta0 + wv.dot(resid) / wsum;
      const double change = new_b0 - beta0;
      resid.array() -= change;
      beta0 = new_b0;
      max_change = std::abs(change);
    }

    for (Eigen::Index j = 0; j < p; ++j) {
      const double rho = Xw.col(j).dot(resid) / n + a[j] * beta[j];
      double num = rho;
      double denom = a[j];
      double thr = config.lambda1;
      if (m == Method::elastic_net) {
        denom += config.lambda2;
      } else if (m == Method::ulasso) {
        num -= config.lambda2 * (penalty->values.row(j).dot(beta.transpose()));
      } else if (m == Method::iilasso) {
        thr += config.lambda2 * (penalty->values.row(j).dot(beta.cwiseAbs().transpose()));
      }
      if (denom <= 1e-12) throw IndefinitePenalty(static_cast<std::size_t>(j));

      const double new_beta = detail::soft_threshold(num, thr) / denom;
      const double change = new_beta - beta[j];
      if (change != 0.0) {
        resid -= X.values.col(j) * change;
        beta[j] = new_beta;
        max_change = std::max(max_change, std::abs(change));
      }
    }

    if (sweep_objectives) sweep_objectives->push_back(objective());
    if (max_change < config.tolerance) {
      fit.converged = true;
      ++sweep;
      break;
    }
  }

  fit.objective = objective();
  fit.coefficients.intercept = beta0;
  fit.coefficients.slopes = std::move(beta);
  fit.iterations = sweep;
  return fit;
}

namespace detail {

inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

struct LogisticProblem {
  const Matrix& A;       // n x d, first column ones when intercept is fitted
  const Vector& y;       // -1/+1
  const Vector& w;
  double lambda2;        // ridge on slopes only
  bool intercept;

  double loss(const Vector& theta) const {
    const Eigen::Index n = A.rows();
    const Vector eta = A * theta;
    double f = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) f += w[i] * softplus(-y[i] * eta[i]);
    f /= n;
    const Eigen::Index s0 = intercept ? 1 : 0;
    f += 0.5 * lambda2 * theta.tail(theta.size() - s0).squaredNorm();
    return f;
  }

  Vector gradient(const Vector& theta) const {
    const Eigen::Index n = A.rows();
    const Vector eta = A * theta;
    Vector g = Vector::Zero(theta.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sig = 1.0 / (1.0 + std::exp(y[i] * eta[i]));  // sigma(-y eta)
      g += (w[i] * -y[i] * sig) * A.row(i).transpose();
    }
    g /= n;
    const Eigen::Index s0 = intercept ? 1 : 0;
    g.tail(theta.size() - s0) += lambda2 * theta.tail(theta.size() - s0);
    return g;
  }

  Matrix hessian(const Vector& theta) const {
    const Eigen::Index n = A.rows();
    const Vector eta = A * theta;
    Vector d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double pr = 1.0 / (1.0 + std::exp(-eta[i]));
      d[i] = w[i] * pr * (1.0 - pr);
    }
    Matrix H = A.transpose() * (A.array().colwise() * d.array()).matrix() / n;
    const Eigen::Index s0 = intercept ? 1 : 0;
    for (Eigen::Index j = s0; j < theta.size(); ++j) H(j, j) += lambda2;
    return H;
  }
};

/// Damped Newton on the weighted logistic objective; halves the step (up to
/// 50 times) whenever the loss would increase.
inline FitResult newton_logistic(const LogisticProblem& prob, double grad_tol, int max_iter) {
  Vector theta = Vector::Zero(prob.A.cols());
  double f = prob.loss(theta);
  FitResult fit;
  fit.converged = false;
  int it = 0;
  for (; it < max_iter; ++it) {
    const Vector g = prob.gradient(theta);
    if (g.norm() < grad_tol) {
      fit.converged = true;
      break;
    }
    Matrix H = prob.hessian(theta);
    Vector step = H.ldlt().solve(g);
    if (!step.allFinite()) {
      H.diagonal().array() += 1e-10;
      step = H.ldlt().solve(g);
    }
    double scale = 1.0;
    Vector candidate = theta - step;
    double f_new = prob.loss(candidate);
    for (int h = 0; h < 50 && !(f_new <= f); ++h) {
      scale *= 0.5;
      candidate = theta - scale * step;
      f_new = prob.loss(candidate);
    }
    if (!(f_new <= f)) break;  // no acceptable step remains
    theta = candidate;
    f = f_new;
  }
  const Eigen::Index p = prob.intercept ? prob.A.cols() - 1 : prob.A.cols();
  if (prob.intercept) {
    fit.coefficients.intercept = theta[0];
    fit.coefficients.slopes = theta.tail(p);
  } else {
    fit.coefficients.slopes = theta;
  }
  fit.iterations = it;
  fit.objective = f;
  return fit;
}

}  // namespace detail

/// Weighted logistic regression with ridge lambda2 on the slopes, by damped
/// Newton. Both classes must appear among rows with positive weight. With
/// lambda2 = 0 on separable data the optimum is at infinity; the iteration cap
/// then applies and the result carries converged = false.
inline FitResult fit_logistic(const DesignMatrix& X, const ResponseVector& y,
                              const SampleWeights& w, const EstimatorConfig& config = {}) {
  detail::check_xyw(X, y, w);
  if (y.task != Task::binary) throw Error("fit_logistic expects a -1/+1 response");
  const Eigen::Index n = X.rows(), p = X.cols();

  bool has_pos = false, has_neg = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w.values[i] > 0.0) {
      if (y.values[i] > 0.0) has_pos = true;
      else has_neg = true;
    }
  }
  if (!has_pos || !has_neg) throw OneClassOnly();

  Matrix A(n, config.fit_intercept ? p + 1 : p);
  if (config.fit_intercept) {
    A.col(0).setOnes();
    A.rightCols(p) = X.values;
  } else {
    A = X.values;
  }
  const detail::LogisticProblem prob{A, y.values, w.values, config.lambda2,
                                     config.fit_intercept};
  return detail::newton_logistic(prob, config.tolerance, config.max_iterations);
}

/// Fits with the estimator selected by config.method, building the ULasso /
/// IILasso coupling matrix from X when needed.
inline FitResult fit_with(const DesignMatrix& X, const ResponseVector& y, const SampleWeights& w,
                          const EstimatorConfig& config) {
  switch (config.method) {
    case Method::ols:
      return fit_wls(X, y, w, config);
    case Method::logistic:
      return fit_logistic(X, y, w, config);
    case Method::ulasso:
      return fit_coordinate_descent(X, y, w, config,
                                    build_penalty_matrix(X, PenaltyKind::ulasso_C));
    case Method::iilasso:
      return fit_coordinate_descent(X, y, w, config,
                                    build_penalty_matrix(X, PenaltyKind::iilasso_R));
    default:
      return fit_coordinate_descent(X, y, w, config);
  }
}

struct CrossValidationResult {
  EstimatorConfig best;
  /// (lambda1, lambda2, mean validation loss) per grid point, in scan order.
  std::vector<std::array<double, 3>> losses;
};

/// k-fold cross validation over a (lambda1, lambda2) grid.
///
/// Rows are shuffled once with the supplied generator; weights travel with
/// their rows and the training folds' weights are renormalized to unit mean.
/// Validation loss is the unweighted mean squared error (regression) or mean
/// log-loss (binary). Ties break toward larger lambda1, then larger lambda2.
inline CrossValidationResult cross_validate(const DesignMatrix& X, const ResponseVector& y,
                                            const SampleWeights& w,
                                            const EstimatorConfig& base,
                                            std::vector<std::pair<double, double>> grid,
                                            int k_folds, Rng& rng) {
  detail::check_xyw(X, y, w);
  if (k_folds < 2) throw Error("cross validation needs k_folds >= 2");
  if (grid.empty()) throw EmptyInput("lambda grid");
  const Eigen::Index n = X.rows();
  if (n < k_folds) throw Error("more folds than rows");

  std::vector<Eigen::Index> perm(n);
  for (Eigen::Index i = 0; i < n; ++i) perm[i] = i;
  for (Eigen::Index i = n - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.next_index(static_cast<std::size_t>(i + 1))]);

  // visit larger lambdas first so strict improvement implements the tie rule
  std::stable_sort(grid.begin(), grid.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second > b.second;
  });

  std::vector<double> total_loss(grid.size(), 0.0);
  for (int f = 0; f < k_folds; ++f) {
    const Eigen::Index lo = n * f / k_folds, hi = n * (f + 1) / k_folds;
    const Eigen::Index n_val = hi - lo, n_tr = n - n_val;

    DesignMatrix Xtr, Xval;
    Xtr.values.resize(n_tr, X.cols());
    Xval.values.resize(n_val, X.cols());
    ResponseVector ytr{Vector(n_tr), y.task}, yval{Vector(n_val), y.task};
    Vector wtr(n_tr);
    Eigen::Index it = 0, iv = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index row = perm[static_cast<std::size_t>(i)];
      if (i >= lo && i < hi) {
        Xval.values.row(iv) = X.values.row(row);
        yval.values[iv++] = y.values[row];
      } else {
        Xtr.values.row(it) = X.values.row(row);
        ytr.values[it] = y.values[row];
        wtr[it++] = w.values[row];
      }
    }
    const SampleWeights wtr_norm = SampleWeights::from_raw(wtr);

    for (std::size_t g = 0; g < grid.size(); ++g) {
      EstimatorConfig cfg = base;
      cfg.lambda1 = grid[g].first;
      cfg.lambda2 = grid[g].second;
      const FitResult fit = fit_with(Xtr, ytr, wtr_norm, cfg);
      const Vector score =
          (Xval.values * fit.coefficients.slopes).array() + fit.coefficients.intercept;
      double loss = 0.0;
      if (y.task == Task::regression) {
        loss = (yval.values - score).squaredNorm() / n_val;
      } else {
        for (Eigen::Index i = 0; i < n_val; ++i)
          loss += detail::softplus(-yval.values[i] * score[i]);
        loss /= n_val;
      }
      total_loss[g] += loss;
    }
  }

  CrossValidationResult out;
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double mean_loss = total_loss[g] / k_folds;
    out.losses.push_back({grid[g].first, grid[g].second, mean_loss});
    if (mean_loss < total_loss[best] / k_folds) best = g;
  }
  out.best = base;
  out.best.lambda1 = grid[best].first;
  out.best.lambda2 = grid[best].second;
  return out;
}

}  // namespace srdo
