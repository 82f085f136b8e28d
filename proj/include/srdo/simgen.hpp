#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "srdo/core.hpp"
#include "srdo/rng.hpp"

namespace srdo {

/// Block-diagonal covariance: q = p/s blocks of size s, each with unit
/// diagonal and off-diagonal rho_per_block[l].
struct CovarianceSpec {
  int p = 0;
  int s = 1;
  std::vector<double> rho_per_block;

  int block_count() const { return s > 0 ? p / s : 0; }

  static CovarianceSpec uniform(int p, int s, double rho) {
    CovarianceSpec spec;
    spec.p = p;
    spec.s = s;
    spec.rho_per_block.assign(s > 0 ? static_cast<std::size_t>(p / s) : 0, rho);
    return spec;
  }

  void validate() const {
    if (p < 1 || s < 1 || p % s != 0) throw Error("covariance spec needs p >= 1 divisible by s");
    if (rho_per_block.size() != static_cast<std::size_t>(block_count()))
      throw DimensionMismatch("rho_per_block length must equal p/s");
    // each block (1-rho)I + rho 11^T is PD iff rho in (-1/(s-1), 1)
    if (s > 1) {
      const double lo = -1.0 / (s - 1);
      for (double rho : rho_per_block)
        if (!(rho > lo && rho < 1.0)) throw InvalidRho(rho, s);
    }
  }
};

enum class BiasKind {
  eigvec_linear,  // b_i = scale * x_i . v
  eigvec_sign,    // b_i = scale * sign((x_i - xbar) . v), a bounded perturbation
};

struct SimulationConfig {
  int n = 0;
  CovarianceSpec spec;
  Coefficients beta_true;
  double noise_std = 1.0;
  std::uint64_t seed = 0;
  BiasKind bias_kind = BiasKind::eigvec_sign;
  double bias_scale = 0.5;
  /// When true, test environments reuse the training environment's bias
  /// direction instead of recomputing it from their own design.
  bool reuse_train_bias_direction = false;

  void validate() const {
    spec.validate();
    if (n < 0) throw Error("sample count must be nonnegative");
    if (!(noise_std >= 0.0)) throw Error("noise_std must be >= 0");
    if (beta_true.slopes.size() != spec.p)
      throw DimensionMismatch("beta_true slope count must equal p");
  }
};

inline Matrix build_block_covariance(const CovarianceSpec& spec) {
  spec.validate();
  Matrix S = Matrix::Zero(spec.p, spec.p);
  for (int l = 0; l < spec.block_count(); ++l) {
    const double rho = spec.rho_per_block[static_cast<std::size_t>(l)];
    for (int j = 0; j < spec.s; ++j)
      for (int k = 0; k < spec.s; ++k)
        S(l * spec.s + j, l * spec.s + k) = (j == k) ? 1.0 : rho;
  }
  return S;
}

/// Draws n i.i.d. rows from N(0, Sigma) via the Cholesky factor. Rows are
/// filled in order, each row's coordinates in column order, so output is a
/// pure function of (n, Sigma, rng state).
inline DesignMatrix sample_design(int n, const Matrix& Sigma, Rng& rng) {
  const Matrix L = cholesky_lower(Sigma);  // throws NotPositiveDefinite
  const Eigen::Index p = Sigma.rows();
  DesignMatrix X;
  X.values.resize(n, p);
  Vector z(p);
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) z[j] = rng.next_gaussian();
    X.values.row(i) = (L * z).transpose();
  }
  return X;
}

struct BiasResult {
  Vector b;          // length n, b = X v
  Vector v;          // unit eigenvector for the smallest eigenvalue
  double gamma_sq;   // smallest eigenvalue of the centered covariance
  bool degenerate;   // smallest eigenvalue multiplicity > 1 within 1e-8
};

/// Smallest-eigenvalue direction of the centered covariance of X, with the
/// raw linear bias b = X v.
///
/// Sign is fixed so the first component with |v_k| > 1e-12 is positive. When
/// the smallest eigenvalue is degenerate within 1e-8 the result is still
/// deterministic (Jacobi ordering plus the sign rule) and `degenerate` is set.
inline BiasResult bias_vector(const DesignMatrix& X) {
  X.validate();
  const Eigen::Index n = X.rows(), p = X.cols();
  if (n <= p) throw Error("bias_vector needs n > p");
  const Vector mean = X.values.colwise().mean();
  const Matrix centered = X.values.rowwise() - mean.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(n);
  const SymmetricEigen eig = jacobi_eigen(cov);

  BiasResult out;
  out.gamma_sq = eig.values[0];
  out.degenerate = p > 1 && std::abs(eig.values[1] - eig.values[0]) < 1e-8;
  out.v = eig.vectors.col(0);
  for (Eigen::Index k = 0; k < p; ++k) {
    if (std::abs(out.v[k]) > 1e-12) {
      if (out.v[k] < 0.0) out.v = -out.v;
      break;
    }
  }
  out.b = X.values * out.v;
  return out;
}

/// Misspecification term added to the linear response.
///
/// eigvec_linear reproduces b = scale * X v. eigvec_sign is the bounded
/// worst-case perturbation along the same direction, scale * sign((x-xbar).v):
/// its least-squares projection grows like scale/gamma as the smallest
/// eigenvalue gamma^2 shrinks, which is what makes collinear designs unstable,
/// whereas a purely linear term is absorbed into the fitted coefficients.
inline Vector misspecification_bias(const DesignMatrix& X, const Vector& v, BiasKind kind,
                                    double scale) {
  if (v.size() != X.cols()) throw DimensionMismatch("bias direction length");
  if (kind == BiasKind::eigvec_linear) return scale * (X.values * v);
  const Vector mean = X.values.colwise().mean();
  Vector z = (X.values.rowwise() - mean.transpose()) * v;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    z[i] = scale * (z[i] > 0.0 ? 1.0 : (z[i] < 0.0 ? -1.0 : 0.0));
  return z;
}

/// y_i = beta0 + x_i . slopes + b_i + eps_i with eps_i iid N(0, sigma^2).
inline ResponseVector generate_response(const DesignMatrix& X, const Coefficients& beta,
                                        const Vector& b, double sigma, Rng& rng) {
  if (beta.slopes.size() != X.cols()) throw DimensionMismatch("beta slope count");
  if (b.size() != X.rows()) throw DimensionMismatch("bias length");
  ResponseVector y;
  y.task = Task::regression;
  y.values = X.values * beta.slopes;
  y.values.array() += beta.intercept;
  y.values += b;
  for (Eigen::Index i = 0; i < y.values.size(); ++i) y.values[i] += sigma * rng.next_gaussian();
  return y;
}

struct EnvironmentMeta {
  std::string tag;
  double rho = 0.0;
  std::uint64_t seed = 0;
  Vector bias_direction;
  double gamma_sq = 0.0;
  bool degenerate = false;
};

struct EnvironmentSuite {
  LabeledDataset train;
  EnvironmentMeta train_meta;
  std::vector<LabeledDataset> tests;
  std::vector<EnvironmentMeta> test_meta;
};

namespace detail {

inline std::string format_rho(double rho) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", rho);
  return buf;
}

inline std::pair<LabeledDataset, EnvironmentMeta> generate_environment(
    const SimulationConfig& config, double rho, std::uint64_t env_seed, const std::string& tag,
    const Vector* forced_direction) {
  CovarianceSpec spec = config.spec;
  spec.rho_per_block.assign(spec.rho_per_block.size(), rho);
  const Matrix Sigma = build_block_covariance(spec);

  Rng rng(env_seed);
  DesignMatrix X = sample_design(config.n, Sigma, rng);

  EnvironmentMeta meta;
  meta.tag = tag;
  meta.rho = rho;
  meta.seed = env_seed;
  if (forced_direction != nullptr) {
    meta.bias_direction = *forced_direction;
    meta.gamma_sq = 0.0;
    meta.degenerate = false;
  } else {
    const BiasResult bias = bias_vector(X);
    meta.bias_direction = bias.v;
    meta.gamma_sq = bias.gamma_sq;
    meta.degenerate = bias.degenerate;
  }

  const Vector b =
      misspecification_bias(X, meta.bias_direction, config.bias_kind, config.bias_scale);
  LabeledDataset data;
  data.y = generate_response(X, config.beta_true, b, config.noise_std, rng);
  data.X = std::move(X);
  data.environment_tag = tag;
  return {std::move(data), std::move(meta)};
}

}  // namespace detail

/// Train environment at the configured rho plus one test environment per
/// entry of rho_tests (same beta, same bias rule; direction recomputed per
/// environment unless reuse_train_bias_direction is set). Environment k is
/// generated from the child seed derive_seed(config.seed, k) with the train
/// environment at k = 0, so environments can be generated independently.
inline EnvironmentSuite generate_environment_suite(const SimulationConfig& config,
                                                   const std::vector<double>& rho_tests) {
  config.validate();
  if (config.spec.rho_per_block.empty()) throw Error("simulation needs at least one block");
  const double rho_train = config.spec.rho_per_block.front();
  for (double rho : rho_tests) {
    CovarianceSpec probe = CovarianceSpec::uniform(config.spec.p, config.spec.s, rho);
    probe.validate();  // throws InvalidRho for out-of-range test rho
  }

  EnvironmentSuite suite;
  auto [train, train_meta] = detail::generate_environment(
      config, rho_train, derive_seed(config.seed, 0), "train", nullptr);
  suite.train = std::move(train);
  suite.train_meta = std::move(train_meta);

  for (std::size_t k = 0; k < rho_tests.size(); ++k) {
    const std::string tag = "rho=" + detail::format_rho(rho_tests[k]);
    const Vector* forced =
        config.reuse_train_bias_direction ? &suite.train_meta.bias_direction : nullptr;
    auto [data, meta] = detail::generate_environment(config, rho_tests[k],
                                                     derive_seed(config.seed, k + 1), tag, forced);
    suite.tests.push_back(std::move(data));
    suite.test_meta.push_back(std::move(meta));
  }
  return suite;
}

}  // namespace srdo
