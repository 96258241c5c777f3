#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rpie/error.hpp"
#include "rpie/loo.hpp"
#include "rpie/normal.hpp"

using namespace rpie;

namespace {

KernelSpec kernel(KernelFamily family, Eigen::Index d, double sigma2, double theta, double nugget) {
  return KernelSpec{family, sigma2, Eigen::VectorXd::Constant(d, theta), nugget};
}

}  // namespace

TEST(VirtualLoo, MatchesBruteForceRefit) {
  std::mt19937_64 rng(21);
  Dataset data;
  data.X = oracle::uniform(15, 2, rng);
  data.y = oracle::normal(15, rng);
  const KernelSpec k = kernel(KernelFamily::Matern52, 2, 1.3, 0.4, 0.0);
  const FittedGp gp(data, k, {TrendKind::Ordinary});
  const LooDiagnostics loo = virtual_loo(gp);
  const auto brute = oracle::brute_loo(data.X, data.y, k, TrendKind::Ordinary);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    EXPECT_NEAR(loo.loo_mean[i], brute[i].mean, 1e-6 * std::max(1.0, std::abs(brute[i].mean)));
    EXPECT_NEAR(loo.loo_var[i], brute[i].var, 1e-6 * brute[i].var);
  }
}

TEST(VirtualLoo, PureNuggetLimit) {
  Dataset data;
  data.X.resize(2, 1);
  data.X << 0.0, 1.0;
  data.y = Eigen::Vector2d(0.7, -0.4);
  const FittedGp gp(data, kernel(KernelFamily::Matern32, 1, 1e-12, 0.5, 1.0), {TrendKind::Simple});
  const LooDiagnostics loo = virtual_loo(gp);
  EXPECT_NEAR(loo.loo_mean[0], 0.0, 1e-9);
  EXPECT_NEAR(loo.loo_mean[1], 0.0, 1e-9);
  EXPECT_NEAR(loo.loo_var[0], 1.0, 1e-9);
  EXPECT_NEAR(loo.loo_var[1], 1.0, 1e-9);
}

TEST(VirtualLoo, ResponseInTrendSpaceIsReproduced) {
  std::mt19937_64 rng(22);
  Dataset data;
  data.X = oracle::uniform(10, 2, rng);
  data.y = 1.5 + 2.0 * data.X.col(0).array() - data.X.col(1).array();
  const FittedGp gp(data, kernel(KernelFamily::Matern32, 2, 1.0, 0.5, 0.0), {TrendKind::Universal});
  const LooDiagnostics loo = virtual_loo(gp);
  EXPECT_LE((loo.loo_mean - data.y).norm(), 1e-8);
  EXPECT_NEAR(loo_mse(gp), 0.0, 1e-14);
}

TEST(LooMse, TwoFormulasAgreeAndScaleQuadratically) {
  std::mt19937_64 rng(23);
  Dataset data;
  data.X = oracle::uniform(10, 2, rng);
  data.y = oracle::normal(10, rng);
  const KernelSpec k = kernel(KernelFamily::Matern52, 2, 1.0, 0.5, 0.01);
  const FittedGp gp(data, k, {TrendKind::Ordinary});
  EXPECT_NEAR(loo_mse(gp), loo_mse_quadratic(gp), 1e-10 * loo_mse(gp));
  Dataset doubled = data;
  doubled.y *= 2.0;
  EXPECT_NEAR(loo_mse(FittedGp(doubled, k, {TrendKind::Ordinary})), 4.0 * loo_mse(gp), 1e-10);
}

TEST(QuasiGaussian, StepCases) {
  const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(7);
  EXPECT_EQ(quasi_gaussian(zeros, 0.95), 1.0);
  EXPECT_EQ(quasi_gaussian(zeros, 0.05), 0.0);
  EXPECT_THROW(quasi_gaussian(zeros, 0.5), InvalidParameter);
  EXPECT_THROW(quasi_gaussian(zeros, 1.0), InvalidParameter);
}

TEST(QuasiGaussian, Smoothed) {
  const SmoothingParams p{0.01};
  EXPECT_EQ(quasi_gaussian_smoothed(Eigen::VectorXd::Zero(4), 0.95, p), 1.0);
  const double q = normal_quantile(0.95);
  Eigen::VectorXd r = Eigen::VectorXd::Constant(4, -10.0);
  r[0] = q - 0.005;  // halfway up the ramp
  EXPECT_NEAR(quasi_gaussian_smoothed(r, 0.95, p), 3.0 / 4.0 + 0.5 / 4.0, 1e-12);
  EXPECT_THROW(quasi_gaussian_smoothed(r, 0.95, SmoothingParams{2.0}), InvalidParameter);
  EXPECT_THROW(quasi_gaussian_smoothed(r, 0.95, SmoothingParams{0.0}), InvalidParameter);
  EXPECT_EQ(ramp_upper(0.0, 0.01), 0.0);
  EXPECT_EQ(ramp_upper(0.02, 0.01), 1.0);
  EXPECT_EQ(ramp_lower(0.0, 0.01), 1.0);
  EXPECT_NEAR(ramp_lower(-0.0025, 0.01), 0.75, 1e-15);
  EXPECT_EQ(ramp_lower(-0.02, 0.01), 0.0);
}

TEST(QuasiGaussian, SmoothedConvergesToStep) {
  std::mt19937_64 rng(24);
  const Eigen::VectorXd r = oracle::normal(200, rng);
  for (double a : {0.9, 0.1}) {
    const double raw = quasi_gaussian(r, a);
    double previous = std::abs(quasi_gaussian_smoothed(r, a, {1e-2}) - raw);
    for (double delta : {1e-4, 1e-6}) {
      const double gap = std::abs(quasi_gaussian_smoothed(r, a, {delta}) - raw);
      EXPECT_LE(gap, previous + 1e-15);
      previous = gap;
    }
    EXPECT_LE(previous, 1.0 / 200.0);
  }
}

TEST(QuasiGaussian, WellSpecifiedBinomialBand) {
  // Residuals of a correctly specified model are standard normal, so psi_0.9
  // stays inside the +-3 SE band in the vast majority of replications.
  std::mt19937_64 rng(25);
  int inside = 0;
  for (int rep = 0; rep < 200; ++rep) {
    Dataset data;
    data.X = oracle::uniform(100, 1, rng);
    const KernelSpec k = kernel(KernelFamily::Matern32, 1, 1.0, 0.3, 0.01);
    const Eigen::MatrixXd L = oracle::covariance(data.X, k).llt().matrixL();
    data.y = L * oracle::normal(100, rng);
    const double psi = quasi_gaussian(FittedGp(data, k, {TrendKind::Simple}), 0.9);
    inside += (psi >= 0.84 && psi <= 0.96) ? 1 : 0;
  }
  EXPECT_GE(inside, 198);
}

TEST(LooCoverage, HandCounts) {
  EXPECT_EQ(loo_coverage(Eigen::VectorXd::Zero(5), 0.3), 1.0);
  Eigen::Vector4d r(0.0, 0.0, 3.0, -3.0);
  EXPECT_DOUBLE_EQ(loo_coverage(r, 0.1), 0.5);
  EXPECT_THROW(loo_coverage(r, 1.0), InvalidParameter);
}

TEST(LooCoverage, EqualsDirectCount) {
  std::mt19937_64 rng(26);
  for (int rep = 0; rep < 50; ++rep) {
    Dataset data;
    data.X = oracle::uniform(20, 2, rng);
    data.y = oracle::normal(20, rng) + data.X.col(0) * 3.0;
    const FittedGp gp(data, kernel(KernelFamily::Matern52, 2, 0.5, 0.3, 0.05), {TrendKind::Ordinary});
    const LooDiagnostics loo = virtual_loo(gp);
    EXPECT_DOUBLE_EQ(loo_coverage(gp, 0.2), loo_coverage_by_count(data.y, loo, 0.2));
  }
}
