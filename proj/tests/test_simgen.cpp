#include <gtest/gtest.h>

#include <cmath>

#include "srdo/estimators.hpp"
#include "srdo/simgen.hpp"

using namespace srdo;

namespace {

Coefficients figure_beta() {
  Coefficients beta;
  beta.slopes.resize(10);
  beta.slopes << 0.2, -0.4, 0.6, -0.8, 1.0, -0.2, 0.4, -0.6, 0.8, -1.0;
  return beta;
}

}  // namespace

TEST(BlockCovariance, UniformRhoBlocks) {
  const Matrix S = build_block_covariance(CovarianceSpec::uniform(10, 2, 0.8));
  for (int j = 0; j < 10; ++j) {
    for (int k = 0; k < 10; ++k) {
      const bool same_block = j / 2 == k / 2;
      const double expected = j == k ? 1.0 : (same_block ? 0.8 : 0.0);
      EXPECT_DOUBLE_EQ(S(j, k), expected);
    }
  }
}

TEST(BlockCovariance, RhoZeroGivesIdentity) {
  const Matrix S = build_block_covariance(CovarianceSpec::uniform(4, 4, 0.0));
  EXPECT_LT((S - Matrix::Identity(4, 4)).norm(), 1e-15);
}

TEST(BlockCovariance, InvalidRhoRejected) {
  EXPECT_THROW(build_block_covariance(CovarianceSpec::uniform(4, 2, -1.5)), InvalidRho);
  EXPECT_THROW(build_block_covariance(CovarianceSpec::uniform(4, 2, 1.0)), InvalidRho);
  // s = 4 allows rho slightly above -1/3 but not -0.4
  EXPECT_NO_THROW(build_block_covariance(CovarianceSpec::uniform(4, 4, -0.3)));
  EXPECT_THROW(build_block_covariance(CovarianceSpec::uniform(4, 4, -0.4)), InvalidRho);
}

TEST(BlockCovariance, PerBlockRho) {
  CovarianceSpec spec;
  spec.p = 4;
  spec.s = 2;
  spec.rho_per_block = {0.2, -0.5};
  const Matrix S = build_block_covariance(spec);
  EXPECT_DOUBLE_EQ(S(0, 1), 0.2);
  EXPECT_DOUBLE_EQ(S(2, 3), -0.5);
  EXPECT_DOUBLE_EQ(S(0, 2), 0.0);
}

TEST(SampleDesign, EmpiricalCorrelationNearIdentity) {
  Rng rng(101);
  const DesignMatrix X = sample_design(100000, Matrix::Identity(2, 2), rng);
  const auto d = weighted_correlation(X, SampleWeights::uniform(X.rows()));
  EXPECT_LT(std::abs(d.correlation(0, 1)), 0.02);
}

TEST(SampleDesign, EmpiricalCovarianceConvergesToTarget) {
  const Matrix Sigma = build_block_covariance(CovarianceSpec::uniform(6, 2, 0.7));
  Rng rng(202);
  const DesignMatrix X = sample_design(50000, Sigma, rng);
  const Vector mean = X.values.colwise().mean();
  const Matrix C = X.values.rowwise() - mean.transpose();
  const Matrix cov = C.transpose() * C / X.rows();
  EXPECT_LT((cov - Sigma).cwiseAbs().maxCoeff(), 0.05);
}

TEST(SampleDesign, ZeroRowsAllowed) {
  Rng rng(3);
  const DesignMatrix X = sample_design(0, Matrix::Identity(3, 3), rng);
  EXPECT_EQ(X.rows(), 0);
  EXPECT_EQ(X.cols(), 3);
}

TEST(SampleDesign, RankDeficientCovarianceRejected) {
  Matrix S(2, 2);
  S << 1.0, 1.0, 1.0, 1.0;
  Rng rng(4);
  EXPECT_THROW(sample_design(10, S, rng), NotPositiveDefinite);
}

TEST(BiasVector, KnownCovarianceGivesSecondAxis) {
  // Construct X with exact sample covariance diag(1, 0.25) and zero mean by
  // whitening a random matrix and rescaling the second column.
  Rng rng(505);
  const int n = 300;
  Matrix G(n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) G(i, j) = rng.next_gaussian();
  G.rowwise() -= G.colwise().mean();
  const Matrix cov = G.transpose() * G / n;
  const SymmetricEigen eig = jacobi_eigen(cov);
  // whiten: W = V diag(1/sqrt(lambda)) V^T
  const Matrix W = eig.vectors *
                   eig.values.cwiseSqrt().cwiseInverse().asDiagonal() *
                   eig.vectors.transpose();
  DesignMatrix X;
  X.values = G * W;
  X.values.col(1) *= 0.5;

  const BiasResult bias = bias_vector(X);
  EXPECT_NEAR(bias.gamma_sq, 0.25, 1e-8);
  EXPECT_NEAR(bias.v[0], 0.0, 1e-7);
  EXPECT_NEAR(bias.v[1], 1.0, 1e-7);  // sign rule: first nonzero positive
  EXPECT_LT((bias.b - X.values.col(1)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(BiasVector, SingleColumn) {
  Rng rng(7);
  DesignMatrix X = sample_design(50, Matrix::Identity(1, 1), rng);
  const BiasResult bias = bias_vector(X);
  EXPECT_DOUBLE_EQ(bias.v[0], 1.0);
  EXPECT_LT((bias.b - X.values.col(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BiasVector, EigenpairResidualSmall) {
  Rng rng(606);
  const Matrix Sigma = build_block_covariance(CovarianceSpec::uniform(8, 2, 0.6));
  const DesignMatrix X = sample_design(400, Sigma, rng);
  const BiasResult bias = bias_vector(X);
  const Vector mean = X.values.colwise().mean();
  const Matrix C = X.values.rowwise() - mean.transpose();
  const Matrix cov = C.transpose() * C / X.rows();
  EXPECT_LT((cov * bias.v - bias.gamma_sq * bias.v).norm(), 1e-8);
  EXPECT_NEAR(bias.v.norm(), 1.0, 1e-12);
}

TEST(BiasVector, DegenerateEigenspaceFlaggedDeterministically) {
  // exact identity covariance has a fully degenerate spectrum; the flag must
  // be set and the direction must be reproducible
  Rng rng(707);
  Matrix G(50, 3);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 3; ++j) G(i, j) = rng.next_gaussian();
  G.rowwise() -= G.colwise().mean();
  const Matrix cov = G.transpose() * G / 50.0;
  const SymmetricEigen eig = jacobi_eigen(cov);
  const Matrix W = eig.vectors * eig.values.cwiseSqrt().cwiseInverse().asDiagonal() *
                   eig.vectors.transpose();
  DesignMatrix X;
  X.values = G * W;  // exact identity sample covariance
  const BiasResult a = bias_vector(X);
  const BiasResult b = bias_vector(X);
  EXPECT_TRUE(a.degenerate);
  EXPECT_LT((a.v - b.v).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MisspecificationBias, SignModeIsBoundedAndScaled) {
  Rng rng(808);
  const DesignMatrix X = sample_design(200, Matrix::Identity(3, 3), rng);
  const BiasResult bias = bias_vector(X);
  const Vector b = misspecification_bias(X, bias.v, BiasKind::eigvec_sign, 0.5);
  for (Eigen::Index i = 0; i < b.size(); ++i)
    EXPECT_TRUE(b[i] == 0.5 || b[i] == -0.5 || b[i] == 0.0);
  const Vector lin = misspecification_bias(X, bias.v, BiasKind::eigvec_linear, 2.0);
  EXPECT_LT((lin - 2.0 * bias.b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GenerateResponse, NoiselessLinearIsExact) {
  Rng rng(909);
  DesignMatrix X = sample_design(100, Matrix::Identity(3, 3), rng);
  Coefficients beta;
  beta.slopes.resize(3);
  beta.slopes << 1.0, 0.0, 0.0;
  const ResponseVector y = generate_response(X, beta, Vector::Zero(100), 0.0, rng);
  EXPECT_LT((y.values - X.values.col(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GenerateResponse, NoiseVarianceMatchesSigma) {
  Rng rng(1010);
  DesignMatrix X = sample_design(100000, Matrix::Identity(2, 2), rng);
  Coefficients beta;
  beta.slopes = Vector::Zero(2);
  const double sigma = 1.7;
  const ResponseVector y = generate_response(X, beta, Vector::Zero(100000), sigma, rng);
  const double mean = y.values.mean();
  const double var = (y.values.array() - mean).square().sum() / y.values.size();
  EXPECT_NEAR(var, sigma * sigma, 0.05 * sigma * sigma);
}

TEST(EnvironmentSuite, StructureAndDeterminism) {
  SimulationConfig cfg;
  cfg.n = 200;
  cfg.spec = CovarianceSpec::uniform(10, 2, 0.8);
  cfg.beta_true = figure_beta();
  cfg.seed = 42;

  const std::vector<double> rho_tests{-0.5, 0.0, 0.5};
  const EnvironmentSuite a = generate_environment_suite(cfg, rho_tests);
  const EnvironmentSuite b = generate_environment_suite(cfg, rho_tests);
  ASSERT_EQ(a.tests.size(), 3u);
  EXPECT_EQ(a.tests[0].environment_tag, "rho=-0.5");
  EXPECT_EQ(a.tests[1].environment_tag, "rho=0");
  // bit-identical regeneration
  EXPECT_EQ(a.train.X.values, b.train.X.values);
  EXPECT_EQ(a.train.y.values, b.train.y.values);
  EXPECT_EQ(a.tests[2].X.values, b.tests[2].X.values);
  // environments differ from each other
  EXPECT_NE(a.tests[0].X.values(0, 0), a.tests[1].X.values(0, 0));
}

TEST(EnvironmentSuite, EmptyTestListAndIidSetting) {
  SimulationConfig cfg;
  cfg.n = 500;
  cfg.spec = CovarianceSpec::uniform(4, 2, 0.8);
  cfg.beta_true.slopes = Vector::Ones(4);
  cfg.seed = 9;
  const EnvironmentSuite none = generate_environment_suite(cfg, {});
  EXPECT_TRUE(none.tests.empty());

  // test rho equal to train rho: same distribution family, fresh draw
  const EnvironmentSuite iid = generate_environment_suite(cfg, {0.8});
  const auto d_train = weighted_correlation(iid.train.X, SampleWeights::uniform(cfg.n));
  const auto d_test = weighted_correlation(iid.tests[0].X, SampleWeights::uniform(cfg.n));
  EXPECT_NEAR(d_train.correlation(0, 1), d_test.correlation(0, 1), 0.15);
}

TEST(EnvironmentSuite, ReuseTrainBiasDirection) {
  SimulationConfig cfg;
  cfg.n = 300;
  cfg.spec = CovarianceSpec::uniform(4, 2, 0.7);
  cfg.beta_true.slopes = Vector::Ones(4);
  cfg.seed = 77;
  cfg.reuse_train_bias_direction = true;
  const EnvironmentSuite suite = generate_environment_suite(cfg, {0.0, 0.5});
  for (const auto& meta : suite.test_meta)
    EXPECT_LT((meta.bias_direction - suite.train_meta.bias_direction).norm(), 1e-15);

  cfg.reuse_train_bias_direction = false;
  const EnvironmentSuite recomputed = generate_environment_suite(cfg, {0.0, 0.5});
  EXPECT_GT(
      (recomputed.test_meta[0].bias_direction - recomputed.train_meta.bias_direction).norm(),
      1e-6);
}

TEST(EnvironmentSuite, InvalidTestRhoRejected) {
  SimulationConfig cfg;
  cfg.n = 100;
  cfg.spec = CovarianceSpec::uniform(4, 2, 0.5);
  cfg.beta_true.slopes = Vector::Ones(4);
  cfg.seed = 1;
  EXPECT_THROW(generate_environment_suite(cfg, {-1.2}), InvalidRho);
}

TEST(BiasBound, GeneratedBiasRespectsCauchySchwarz) {
  // |b_i| <= max_i ||x_i||_2 for both bias kinds (||v||_2 = 1, scale <= 1)
  for (BiasKind kind : {BiasKind::eigvec_linear, BiasKind::eigvec_sign}) {
    SimulationConfig cfg;
    cfg.n = 400;
    cfg.spec = CovarianceSpec::uniform(6, 2, 0.9);
    cfg.beta_true.slopes = Vector::Ones(6);
    cfg.seed = 13;
    cfg.bias_kind = kind;
    cfg.bias_scale = kind == BiasKind::eigvec_linear ? 1.0 : 0.5;
    const EnvironmentSuite suite = generate_environment_suite(cfg, {});
    const Vector b = misspecification_bias(suite.train.X, suite.train_meta.bias_direction,
                                           kind, cfg.bias_scale);
    const double max_norm = suite.train.X.values.rowwise().norm().maxCoeff();
    EXPECT_LE(b.cwiseAbs().maxCoeff(), max_norm + 1e-12);
  }
}

TEST(ErrorInflation, OlsErrorGrowsAsSmallestEigenvalueShrinks) {
  // executable form of the worst-case perturbation analysis, desk scale:
  // rho = 0.99 must inflate the OLS estimation error by >= 3x vs rho = 0
  const int n = 20000;
  Coefficients beta;
  beta.slopes.resize(2);
  beta.slopes << 1.0, -1.0;

  const auto ols_error = [&](double rho, std::uint64_t seed) {
    SimulationConfig cfg;
    cfg.n = n;
    cfg.spec = CovarianceSpec::uniform(2, 2, rho);
    cfg.beta_true = beta;
    cfg.seed = seed;
    const EnvironmentSuite suite = generate_environment_suite(cfg, {});
    const FitResult fit = fit_wls(suite.train.X, suite.train.y, SampleWeights::uniform(n));
    return (fit.coefficients.slopes - beta.slopes).norm();
  };

  double e_low = 0.0, e_high = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    e_low += ols_error(0.0, 100 + seed);
    e_high += ols_error(0.99, 200 + seed);
  }
  EXPECT_GE(e_high / e_low, 3.0);
}
