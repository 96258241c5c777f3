#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rpie/bench.hpp"
#include "rpie/calibration.hpp"
#include "rpie/error.hpp"
#include "rpie/normal.hpp"

using namespace rpie;

namespace {

Dataset noisy_dataset(std::uint64_t seed, Eigen::Index n, Eigen::Index d) {
  std::mt19937_64 rng(seed);
  Dataset data;
  data.X = oracle::uniform(n, d, rng);
  data.y = (3.0 * data.X.col(0).array()).sin().matrix() + 0.1 * oracle::normal(n, rng);
  return data;
}

double smoothed_at(const Dataset& data, const TrendSpec& trend, KernelSpec k, double sigma2, double a,
                   double delta = 1e-2) {
  k.sigma2 = sigma2;
  return quasi_gaussian_smoothed(FittedGp(data, k, trend), a, {delta});
}

// Misspecified pair: rough data, smooth reference.
struct Problem {
  Dataset data;
  TrendSpec trend{TrendKind::Ordinary};
  EstimationResult reference;
};

Problem morokoff_problem(std::uint64_t seed, Eigen::Index n) {
  Problem p;
  ExperimentSetup setup = experiment_setup(ExperimentName::Morokoff, 3);
  setup.design.n = n;
  setup.design.seed = seed;
  p.data.X = sample_design(setup.design);
  p.data.y = setup.function.sample(p.data.X, seed + 1);
  p.reference = fit_mle(p.data, p.trend, KernelFamily::Matern52, NuggetMode::fixed(1e-4));
  return p;
}

}  // namespace

TEST(LogGridTest, PointsAndParsing) {
  const auto pts = LogGrid{1e-2, 1e2, 5}.points();
  ASSERT_EQ(pts.size(), 5u);
  EXPECT_DOUBLE_EQ(pts.front(), 1e-2);
  EXPECT_DOUBLE_EQ(pts.back(), 1e2);
  EXPECT_NEAR(pts[2], 1.0, 1e-14);
  const LogGrid g = LogGrid::parse("0.1,10,7");
  EXPECT_EQ(g.count, 7);
  EXPECT_EQ(g.lo, 0.1);
  EXPECT_THROW(LogGrid::parse("1,2"), InvalidParameter);
  EXPECT_THROW((LogGrid{1.0, 2.0, 1}.validate()), InvalidParameter);
  EXPECT_NO_THROW((LogGrid{1.0, 1.0, 1}.validate()));
  EXPECT_THROW((LogGrid{-1.0, 2.0, 4}.validate()), InvalidParameter);
  RpieConfig c;
  c.refine_iters = 10;
  EXPECT_THROW(c.validate(), InvalidParameter);
}

TEST(ResidualProfileTest, MatchesDirectFits) {
  const Dataset data = noisy_dataset(41, 25, 2);
  const Eigen::Vector2d theta(0.3, 0.5);
  for (TrendKind kind : {TrendKind::Simple, TrendKind::Ordinary, TrendKind::Universal}) {
    for (double nugget : {0.0, 0.02}) {
      const ResidualProfile profile(data, {kind}, KernelFamily::Matern52, theta, nugget);
      for (double s2 : {1e-3, 0.4, 7.0}) {
        const FittedGp gp(data, KernelSpec{KernelFamily::Matern52, s2, theta, nugget}, {kind});
        const Eigen::VectorXd direct = virtual_loo(gp).std_resid;
        EXPECT_LE((profile.std_resid(s2) - direct).norm(), 1e-7 * (1.0 + direct.norm()))
            << to_string(kind) << " nugget " << nugget << " s2 " << s2;
        EXPECT_LE((profile.beta(s2) - gp.beta_hat()).norm(), 1e-7 * (1.0 + gp.beta_hat().norm()));
        EXPECT_LE((profile.covariance(s2) - oracle::covariance(data.X, gp.kernel())).norm(), 1e-12);
      }
    }
  }
}

TEST(SigmaOpt, HitsTargetOnRandomDatasets) {
  RpieConfig cfg;
  int solved = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Dataset data = noisy_dataset(100 + seed, 30, 2);
    const KernelSpec k{KernelFamily::Matern32, 1.0, Eigen::Vector2d(0.3, 0.6), 0.01};
    for (double a : {0.95, 0.05}) {
      ASSERT_TRUE(check_hypotheses(data, {TrendKind::Ordinary}, k, a).h3);
      const auto s2 = sigma_opt(data, {TrendKind::Ordinary}, k.family, k.theta, k.nugget, a, cfg);
      ASSERT_TRUE(s2.has_value()) << "seed " << seed << " a " << a;
      ++solved;
      EXPECT_NEAR(smoothed_at(data, {TrendKind::Ordinary}, k, *s2, a), a, 1e-6);
    }
  }
  EXPECT_EQ(solved, 60);
}

TEST(SigmaOpt, FirstBracketIsTheSmallest) {
  RpieConfig cfg;
  cfg.a = 0.9;
  const Dataset data = noisy_dataset(7, 30, 2);
  const KernelSpec k{KernelFamily::Matern52, 1.0, Eigen::Vector2d(0.2, 0.4), 0.005};
  const auto s2 = sigma_opt(data, {TrendKind::Ordinary}, k.family, k.theta, k.nugget, cfg.a, cfg);
  ASSERT_TRUE(s2.has_value());
  const double var_y = response_variance(data.y);
  const auto grid = cfg.sigma_scan.points();
  const double first_sign = smoothed_at(data, {TrendKind::Ordinary}, k, grid[0] * var_y, cfg.a) - cfg.a;
  for (double g : grid) {
    const double s = g * var_y;
    if (s >= *s2 / (1.0 + 1e-9)) break;
    const double v = smoothed_at(data, {TrendKind::Ordinary}, k, s, cfg.a) - cfg.a;
    EXPECT_GT(v * first_sign, 0.0) << "sign change below the returned root at " << s;
  }
}

TEST(SigmaOpt, AbsentWhenResidualsVanish) {
  Dataset data = noisy_dataset(8, 20, 1);
  data.y = Eigen::VectorXd::Constant(20, 4.0);
  RpieConfig cfg;
  const auto s2 = sigma_opt(data, {TrendKind::Ordinary}, KernelFamily::Matern32,
                            Eigen::VectorXd::Constant(1, 0.3), 0.01, 0.95, cfg);
  EXPECT_FALSE(s2.has_value());
}

TEST(SymmetricSqrt, SquaresBack) {
  std::mt19937_64 rng(42);
  const Eigen::MatrixXd K = oracle::random_spd(9, rng);
  const Eigen::MatrixXd S = symmetric_sqrt(K);
  EXPECT_LE((S * S - K).norm(), 1e-12 * K.norm());
  EXPECT_LE((S - S.transpose()).norm(), 1e-14);
}

TEST(Wasserstein, ClosedFormCases) {
  std::mt19937_64 rng(43);
  const Eigen::MatrixXd K = oracle::random_spd(4, rng);
  const Eigen::VectorXd m = oracle::normal(4, rng);
  EXPECT_NEAR(wasserstein2_gaussians(m, K, m, K), 0.0, 1e-12);

  const Eigen::VectorXd z = Eigen::VectorXd::Zero(1);
  EXPECT_NEAR(wasserstein2_gaussians(z, Eigen::MatrixXd::Constant(1, 1, 1.0), z,
                                     Eigen::MatrixXd::Constant(1, 1, 4.0)),
              1.0, 1e-14);
  const Eigen::MatrixXd K1 = Eigen::Vector2d(1.0, 4.0).asDiagonal();
  const Eigen::MatrixXd K2 = Eigen::Vector2d(9.0, 1.0).asDiagonal();
  EXPECT_NEAR(wasserstein2_gaussians(Eigen::Vector2d::Zero(), K1, Eigen::Vector2d::Zero(), K2), 5.0, 1e-12);
}

TEST(Wasserstein, ScalarFormula) {
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> sd(0.01, 5.0), mu(-3.0, 3.0);
  for (int rep = 0; rep < 100; ++rep) {
    const double s1 = sd(rng), s2 = sd(rng), m1 = mu(rng), m2 = mu(rng);
    const double w = wasserstein2_gaussians(Eigen::VectorXd::Constant(1, m1), Eigen::MatrixXd::Constant(1, 1, s1 * s1),
                                            Eigen::VectorXd::Constant(1, m2), Eigen::MatrixXd::Constant(1, 1, s2 * s2));
    EXPECT_NEAR(w, (s1 - s2) * (s1 - s2) + (m1 - m2) * (m1 - m2), 1e-10);
  }
}

TEST(Wasserstein, MetricAxiomsAndOracle) {
  std::mt19937_64 rng(45);
  for (int rep = 0; rep < 30; ++rep) {
    const Eigen::Index n = 2 + rep % 15;
    Eigen::MatrixXd K[3];
    Eigen::VectorXd m[3];
    for (int i = 0; i < 3; ++i) {
      K[i] = oracle::random_spd(n, rng, 0.05);
      m[i] = oracle::normal(n, rng);
    }
    auto d = [&](int i, int j) { return std::sqrt(wasserstein2_gaussians(m[i], K[i], m[j], K[j])); };
    EXPECT_NEAR(d(0, 1), d(1, 0), 1e-8);
    EXPECT_GT(d(0, 1), 0.0);
    EXPECT_LE(d(0, 2), d(0, 1) + d(1, 2) + 1e-8);
    EXPECT_NEAR(wasserstein2_gaussians(m[0], K[0], m[1], K[1]), oracle::w2(m[0], K[0], m[1], K[1]),
                1e-8 * (1.0 + oracle::w2(m[0], K[0], m[1], K[1])));
  }
}

TEST(Wasserstein, RejectsInvalidCovariances) {
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 0.5, 0.0, 1.0;
  Eigen::MatrixXd indef(2, 2);
  indef << 1.0, 0.0, 0.0, -1.0;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_THROW(wasserstein2_gaussians(z, asym, z, I), InvalidMatrix);
  EXPECT_THROW(wasserstein2_gaussians(z, I, z, indef), InvalidMatrix);
  EXPECT_THROW(wasserstein2_gaussians(Eigen::VectorXd::Zero(3), I, z, I), ShapeError);
}

TEST(RelaxationObjective, MatchesDenseDistance) {
  const Problem p = morokoff_problem(3, 40);
  RpieConfig cfg;
  cfg.a = 0.95;
  const Eigen::MatrixXd F = oracle::basis(p.data.X, TrendKind::Ordinary);
  const KernelSpec& ref = p.reference.kernel;
  const Eigen::MatrixXd K0 = oracle::covariance(p.data.X, ref);
  const Eigen::VectorXd m0 = F * oracle::gls(K0, F, p.data.y);
  for (double lambda : {0.3, 1.0, 2.5}) {
    const auto L = relaxation_objective(p.data, p.trend, ref, lambda, cfg);
    const auto s2 = sigma_opt(p.data, p.trend, ref.family, lambda * ref.theta, ref.nugget, cfg.a, cfg);
    ASSERT_EQ(L.has_value(), s2.has_value());
    if (!L) continue;
    const KernelSpec k{ref.family, *s2, lambda * ref.theta, ref.nugget};
    const Eigen::MatrixXd K = oracle::covariance(p.data.X, k);
    const double dense = oracle::w2(F * oracle::gls(K, F, p.data.y), K, m0, K0);
    EXPECT_NEAR(*L, dense, 1e-7 * (1.0 + dense));
  }
  EXPECT_THROW(relaxation_objective(p.data, p.trend, ref, -1.0, cfg), InvalidParameter);
}

TEST(CalibrateQuantile, HitsTargetAndKeepsTrace) {
  const Problem p = morokoff_problem(4, 60);
  for (double a : {0.95, 0.05}) {
    RpieConfig cfg;
    cfg.a = a;
    const RpieSolution s = calibrate_quantile(p.data, p.trend, p.reference.kernel, cfg);
    EXPECT_NEAR(s.psi_achieved, a, 1e-6);
    EXPECT_EQ(s.trace.size(), 60u);
    EXPECT_GE(s.wasserstein2, 0.0);
    EXPECT_EQ(s.kernel.theta, s.lambda_star * p.reference.kernel.theta);
    EXPECT_EQ(s.kernel.sigma2, s.sigma2_opt);
    const FittedGp gp(p.data, s.kernel, p.trend);
    EXPECT_LE((gp.beta_hat() - s.beta_opt).norm(), 1e-12 * (1.0 + s.beta_opt.norm()));
    // No grid point beats the refined optimum.
    for (const auto& t : s.trace) {
      if (t.objective) {
        EXPECT_GE(*t.objective, s.wasserstein2 - 1e-12);
      }
    }
  }
}

TEST(CalibrateQuantile, SinglePointGrid) {
  const Problem p = morokoff_problem(5, 40);
  RpieConfig cfg;
  cfg.lambda_grid = LogGrid{1.0, 1.0, 1};
  const RpieSolution s = calibrate_quantile(p.data, p.trend, p.reference.kernel, cfg);
  EXPECT_EQ(s.lambda_star, 1.0);
  const auto s2 = sigma_opt(p.data, p.trend, p.reference.kernel.family, p.reference.kernel.theta,
                            p.reference.kernel.nugget, cfg.a, cfg);
  ASSERT_TRUE(s2.has_value());
  EXPECT_EQ(s.sigma2_opt, *s2);
}

TEST(CalibrateQuantile, InfeasibleWhenResidualsVanish) {
  Dataset data = noisy_dataset(9, 20, 1);
  data.y = Eigen::VectorXd::Constant(20, -1.0);
  const KernelSpec ref{KernelFamily::Matern32, 1.0, Eigen::VectorXd::Constant(1, 0.3), 0.01};
  RpieConfig cfg;
  cfg.lambda_grid.count = 5;
  try {
    calibrate_quantile(data, {TrendKind::Ordinary}, ref, cfg);
    FAIL() << "expected CalibrationInfeasible";
  } catch (const CalibrationInfeasible& e) {
    EXPECT_EQ(e.side(), "upper");
    EXPECT_DOUBLE_EQ(e.n_a(), 19.0);
  }
}

TEST(Calibrate, LooCoverageWithinRampCount) {
  const Problem p = morokoff_problem(6, 80);
  const CalibratedIntervalModel m = calibrate(p.data, p.trend, p.reference, 0.1);
  const double cov = calibrated_loo_coverage(m);
  // The smoothed constraints hold exactly; the unsmoothed count can differ
  // only through residuals lying inside a ramp band.
  const SmoothingParams delta;
  const double q_hi = normal_quantile(0.95), q_lo = normal_quantile(0.05);
  const Eigen::VectorXd ru = virtual_loo(FittedGp(p.data, m.upper.kernel, p.trend)).std_resid;
  const Eigen::VectorXd rl = virtual_loo(FittedGp(p.data, m.lower.kernel, p.trend)).std_resid;
  int ramp = 0;
  for (Eigen::Index i = 0; i < ru.size(); ++i) {
    const double xu = q_hi - ru[i], xl = q_lo - rl[i];
    ramp += (xu > 0.0 && xu <= delta.delta) ? 1 : 0;
    ramp += (xl < 0.0 && xl >= -delta.delta) ? 1 : 0;
  }
  EXPECT_LE(std::abs(cov - 0.9), ramp / 80.0 + 1e-6);
  // The direct count of y_i inside [lower_i, upper_i] gives the same number.
  int inside = 0;
  for (Eigen::Index i = 0; i < ru.size(); ++i) inside += (ru[i] <= q_hi && rl[i] > q_lo) ? 1 : 0;
  EXPECT_NEAR(cov, inside / 80.0, 1e-12);
}

TEST(Calibrate, SharedHyperparametersReduceToPlainInterval) {
  const Problem p = morokoff_problem(7, 30);
  CalibratedIntervalModel m;
  m.alpha = 0.2;
  m.reference = p.reference;
  m.data = p.data;
  m.trend = p.trend;
  m.upper.kernel = p.reference.kernel;
  m.lower.kernel = p.reference.kernel;
  std::mt19937_64 rng(46);
  const Eigen::MatrixXd X_new = oracle::uniform(10, 3, rng);
  const auto preds = predict_calibrated(m, X_new);
  const FittedGp gp(p.data, p.reference.kernel, p.trend);
  for (Eigen::Index i = 0; i < X_new.rows(); ++i) {
    const Interval iv = prediction_interval(gp, X_new.row(i).transpose(), 0.2);
    EXPECT_NEAR(preds[i].lower, iv.lower, 1e-12);
    EXPECT_NEAR(preds[i].upper, iv.upper, 1e-12);
    EXPECT_FALSE(preds[i].crossed);
  }
}

TEST(Calibrate, WellSpecifiedBarelyMoves) {
  const KernelSpec truth{KernelFamily::Matern32, 1.0, Eigen::Vector2d(0.3, 0.5), 0.05};
  std::mt19937_64 rng(47);
  Dataset data;
  data.X = oracle::uniform(80, 2, rng);
  data.y = simulate_gp(data.X, truth, 48);
  const auto ref = fit_mle(data, {TrendKind::Ordinary}, KernelFamily::Matern32, NuggetMode::fixed(0.05));
  const CalibratedIntervalModel m = calibrate(data, {TrendKind::Ordinary}, ref, 0.1);
  const double trace_k0 = oracle::covariance(data.X, ref.kernel).trace();
  for (const RpieSolution* s : {&m.upper, &m.lower}) {
    EXPECT_GT(s->lambda_star, 0.25);
    EXPECT_LT(s->lambda_star, 4.0);
    EXPECT_LT(s->wasserstein2, 0.5 * trace_k0);
  }
  // Training inputs keep a positive width thanks to the nugget.
  for (const auto& pr : predict_calibrated(m, data.X.topRows(5))) EXPECT_GT(pr.upper - pr.lower, 0.0);
}

TEST(Calibrate, ReflectionSwapsSides) {
  // Negating y negates every residual, so the upper problem for y is the
  // lower problem for -y.
  Problem p = morokoff_problem(8, 40);
  const CalibratedIntervalModel m = calibrate(p.data, p.trend, p.reference, 0.1);
  Dataset flipped = p.data;
  flipped.y = -p.data.y;
  const CalibratedIntervalModel f = calibrate(flipped, p.trend, p.reference, 0.1);
  EXPECT_NEAR(m.upper.lambda_star, f.lower.lambda_star, 1e-6 * m.upper.lambda_star);
  EXPECT_NEAR(m.lower.lambda_star, f.upper.lambda_star, 1e-6 * m.lower.lambda_star);
  EXPECT_NEAR(m.upper.sigma2_opt, f.lower.sigma2_opt, 1e-5 * m.upper.sigma2_opt);
}
