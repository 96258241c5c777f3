#include "rpie/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "rpie/error.hpp"
#include "rpie/normal.hpp"
#include "rpie/optimize.hpp"
#include "rpie/parallel.hpp"

namespace rpie {

void LogGrid::validate() const {
  if (count < 1) throw InvalidParameter("grid needs at least one point");
  if (!(lo > 0.0) || !std::isfinite(hi)) throw InvalidParameter("grid bounds must be positive");
  if (count == 1 ? lo != hi : !(lo < hi)) {
    throw InvalidParameter("grid must be strictly increasing (a single point needs lo == hi)");
  }
}

std::vector<double> LogGrid::points() const {
  validate();
  std::vector<double> out(static_cast<std::size_t>(count));
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double l0 = std::log(lo);
  const double step = (std::log(hi) - l0) / (count - 1);
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = std::exp(l0 + step * i);
  out.front() = lo;
  out.back() = hi;
  return out;
}

LogGrid LogGrid::parse(std::string_view text) {
  const std::string s(text);
  LogGrid g;
  const auto c1 = s.find(',');
  const auto c2 = c1 == std::string::npos ? std::string::npos : s.find(',', c1 + 1);
  if (c2 == std::string::npos) throw InvalidParameter("grid must be given as lo,hi,count");
  try {
    g.lo = std::stod(s.substr(0, c1));
    g.hi = std::stod(s.substr(c1 + 1, c2 - c1 - 1));
    g.count = std::stoi(s.substr(c2 + 1));
  } catch (const std::exception&) {
    throw InvalidParameter("grid must be given as lo,hi,count, got '" + s + "'");
  }
  g.validate();
  return g;
}

void RpieConfig::validate() const {
  validate_smoothing(a, delta);
  lambda_grid.validate();
  sigma_scan.validate();
  if (refine_iters < 30) throw InvalidParameter("refine_iters must be at least 30");
  if (golden_iters < 0) throw InvalidParameter("golden_iters must be non-negative");
}

ResidualProfile::ResidualProfile(const Dataset& data, const TrendSpec& trend,
                                 KernelFamily family, const Eigen::VectorXd& theta,
                                 double nugget)
    : spectral_(nugget > 0.0), nugget_(nugget) {
  data.validate();
  if (theta.size() != data.d()) throw ShapeError("length-scale vector has the wrong dimension");
  if (!(nugget >= 0.0)) throw InvalidParameter("nugget must be non-negative");
  F_ = build_regression_matrix(data.X, trend);
  R_ = correlation_matrix(data.X, family, theta);
  if (spectral_) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(R_);
    if (eig.info() != Eigen::Success) throw IllConditioned("eigendecomposition failed");
    U_ = eig.eigenvectors();
    lambda_ = eig.eigenvalues().cwiseMax(0.0);
    U2_ = U_.array().square();
    G_ = U_.transpose() * F_;
    z_ = U_.transpose() * data.y;
  } else {
    const FittedGp unit(data, KernelSpec{family, 1.0, theta, 0.0}, trend);
    const Eigen::VectorXd diag = kbar_diagonal(unit);
    unit_resid_ = unit.weights().array() / diag.array().sqrt();
    unit_beta_ = unit.beta_hat();
  }
}

Eigen::VectorXd ResidualProfile::std_resid(double sigma2) const {
  if (!spectral_) return unit_resid_ / std::sqrt(sigma2);
  const Eigen::VectorXd dinv = (sigma2 * lambda_.array() + nugget_).inverse();
  Eigen::VectorXd diag = U2_ * dinv;
  Eigen::VectorXd kbar_y = U_ * dinv.cwiseProduct(z_);
  const double scale = diag.maxCoeff();
  if (G_.cols() > 0) {
    const Eigen::MatrixXd Gd = dinv.asDiagonal() * G_;
    const Eigen::MatrixXd A = U_ * Gd;
    Eigen::MatrixXd M = G_.transpose() * Gd;
    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (M + M.transpose()));
    if (llt.info() != Eigen::Success) {
      throw HypothesisViolation(Hypothesis::H1, "F' K^-1 F is singular");
    }
    kbar_y -= A * llt.solve(Gd.transpose() * z_);
    const Eigen::MatrixXd Z = llt.matrixL().solve(A.transpose());
    diag -= Z.colwise().squaredNorm().transpose();
  }
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    if (!(diag[i] > 1e-12 * scale)) {
      throw HypothesisViolation(Hypothesis::H2, "Kbar diagonal entry " + std::to_string(i) +
                                                    " is not positive: e_i lies in Im F");
    }
  }
  return kbar_y.array() / diag.array().sqrt();
}

Eigen::VectorXd ResidualProfile::beta(double sigma2) const {
  if (!spectral_) return unit_beta_;
  if (G_.cols() == 0) return Eigen::VectorXd();
  const Eigen::VectorXd dinv = (sigma2 * lambda_.array() + nugget_).inverse();
  const Eigen::MatrixXd Gd = dinv.asDiagonal() * G_;
  const Eigen::MatrixXd M = G_.transpose() * Gd;
  return Eigen::LLT<Eigen::MatrixXd>(0.5 * (M + M.transpose())).solve(Gd.transpose() * z_);
}

Eigen::MatrixXd ResidualProfile::covariance(double sigma2) const {
  Eigen::MatrixXd K = sigma2 * R_;
  K.diagonal().array() += nugget_;
  return K;
}

std::optional<double> sigma_opt(const ResidualProfile& profile, double var_y, double a,
                                const RpieConfig& config) {
  validate_smoothing(a, config.delta);
  const std::vector<double> scan = config.sigma_scan.points();
  auto gap = [&](double s2) {
    return quasi_gaussian_smoothed(profile.std_resid(s2), a, config.delta) - a;
  };
  double prev_s = scan[0] * var_y;
  double prev_g = gap(prev_s);
  if (prev_g == 0.0) return prev_s;
  for (std::size_t j = 1; j < scan.size(); ++j) {
    const double s = scan[j] * var_y;
    const double g = gap(s);
    if (g == 0.0) return s;
    if ((g > 0.0) != (prev_g > 0.0)) {
      double lo = std::log(prev_s), hi = std::log(s);
      const bool lo_positive = prev_g > 0.0;
      double best = 0.5 * (lo + hi);
      for (int it = 0; it < config.refine_iters; ++it) {
        best = 0.5 * (lo + hi);
        const double gm = gap(std::exp(best));
        if (gm == 0.0) break;
        if ((gm > 0.0) == lo_positive) {
          lo = best;
        } else {
          hi = best;
        }
      }
      return std::exp(best);
    }
    prev_s = s;
    prev_g = g;
  }
  return std::nullopt;
}

std::optional<double> sigma_opt(const Dataset& data, const TrendSpec& trend, KernelFamily family,
                                const Eigen::VectorXd& theta, double nugget, double a,
                                const RpieConfig& config) {
  validate_smoothing(a, config.delta);
  const ResidualProfile profile(data, trend, family, theta, nugget);
  return sigma_opt(profile, response_variance(data.y), a, config);
}

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& K) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (K + K.transpose()));
  if (eig.info() != Eigen::Success) throw InvalidMatrix("eigendecomposition failed");
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

namespace {

void check_covariance(const Eigen::MatrixXd& K, const char* name) {
  if (K.rows() != K.cols()) throw InvalidMatrix(std::string(name) + " is not square");
  const double norm = K.norm();
  if ((K - K.transpose()).norm() > 1e-8 * (1.0 + norm)) {
    throw InvalidMatrix(std::string(name) + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (K + K.transpose()),
                                                     Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw InvalidMatrix("eigendecomposition failed");
  if (K.rows() > 0 && eig.eigenvalues().minCoeff() < -1e-8 * (1.0 + norm)) {
    throw InvalidMatrix(std::string(name) + " is not positive semi-definite");
  }
}

// Tr (S K S)^{1/2} for symmetric PSD S K S.
double trace_sqrt_product(const Eigen::MatrixXd& S, const Eigen::MatrixXd& K) {
  Eigen::MatrixXd M = S * K * S;
  M = 0.5 * (M + M.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw InvalidMatrix("eigendecomposition failed");
  return eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

// Everything about the reference Gaussian that L(lambda) reuses.
struct ReferenceGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd sqrt_cov;
  double trace = 0.0;

  ReferenceGaussian(const Dataset& data, const TrendSpec& trend, const KernelSpec& kernel) {
    const FittedGp model(data, kernel, trend);
    mean = model.p() > 0 ? Eigen::VectorXd(model.regression_matrix() * model.beta_hat())
                         : Eigen::VectorXd::Zero(data.n());
    const Eigen::MatrixXd K = build_covariance(data.X, kernel);
    sqrt_cov = symmetric_sqrt(K);
    trace = K.trace();
  }

  double distance(const Eigen::VectorXd& m, const Eigen::MatrixXd& K) const {
    const double w = (m - mean).squaredNorm() + K.trace() + trace -
                     2.0 * trace_sqrt_product(sqrt_cov, K);
    return std::max(w, 0.0);
  }
};

struct LambdaEval {
  std::optional<double> sigma2;
  std::optional<double> objective;
};

LambdaEval evaluate_lambda(const Dataset& data, const TrendSpec& trend,
                           const KernelSpec& reference, const ReferenceGaussian& ref,
                           double var_y, double lambda, const RpieConfig& config) {
  const Eigen::VectorXd theta = lambda * reference.theta;
  const ResidualProfile profile(data, trend, reference.family, theta, reference.nugget);
  LambdaEval out;
  out.sigma2 = sigma_opt(profile, var_y, config.a, config);
  if (!out.sigma2) return out;
  const Eigen::MatrixXd K = profile.covariance(*out.sigma2);
  const Eigen::VectorXd beta = profile.beta(*out.sigma2);
  const Eigen::VectorXd m = beta.size() > 0 ? Eigen::VectorXd(profile.regression_matrix() * beta)
                                            : Eigen::VectorXd::Zero(data.n());
  out.objective = ref.distance(m, K);
  return out;
}

void check_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidParameter("lambda must be positive");
}

}  // namespace

double wasserstein2_gaussians(const Eigen::VectorXd& m1, const Eigen::MatrixXd& K1,
                              const Eigen::VectorXd& m2, const Eigen::MatrixXd& K2) {
  if (m1.size() != m2.size() || K1.rows() != m1.size() || K2.rows() != m2.size()) {
    throw ShapeError("Gaussian parameters have inconsistent dimensions");
  }
  check_covariance(K1, "first covariance");
  check_covariance(K2, "second covariance");
  const Eigen::MatrixXd S1 = symmetric_sqrt(K1);
  const double w = (m1 - m2).squaredNorm() + K1.trace() + K2.trace() -
                   2.0 * trace_sqrt_product(S1, K2);
  return std::max(w, 0.0);
}

std::optional<double> relaxation_objective(const Dataset& data, const TrendSpec& trend,
                                           const KernelSpec& reference, double lambda,
                                           const RpieConfig& config) {
  check_lambda(lambda);
  config.validate();
  const ReferenceGaussian ref(data, trend, reference);
  return evaluate_lambda(data, trend, reference, ref, response_variance(data.y), lambda, config)
      .objective;
}

RpieSolution calibrate_quantile(const Dataset& data, const TrendSpec& trend,
                                const KernelSpec& reference, const RpieConfig& config) {
  config.validate();
  reference.validate();
  if (reference.dim() != data.d()) throw ShapeError("reference kernel has the wrong dimension");
  const ReferenceGaussian ref(data, trend, reference);
  const double var_y = response_variance(data.y);
  const std::vector<double> grid = config.lambda_grid.points();

  std::vector<LambdaEval> evals(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    evals[i] = evaluate_lambda(data, trend, reference, ref, var_y, grid[i], config);
  });

  RpieSolution sol;
  sol.a = config.a;
  sol.theta_ref = reference.theta;
  sol.trace.reserve(grid.size());
  std::size_t best = grid.size();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    sol.trace.push_back({grid[i], evals[i].sigma2, evals[i].objective});
    if (evals[i].objective && (best == grid.size() || *evals[i].objective < *evals[best].objective)) {
      best = i;
    }
  }
  const std::string side = config.a > 0.5 ? "upper" : "lower";
  if (best == grid.size()) {
    const HypothesisReport h = check_hypotheses(data, trend, reference, config.a);
    throw CalibrationInfeasible(
        side, static_cast<long>(h.k_eps), h.n_a,
        "no lambda on the grid satisfies the " + side + " coverage constraint (k_eps = " +
            std::to_string(h.k_eps) + ", n*a = " + std::to_string(h.n_a) +
            (h.h3 ? "" : ", H3 fails") + ")");
  }

  double lambda_star = grid[best];
  double sigma2 = *evals[best].sigma2;
  double objective = *evals[best].objective;
  if (grid.size() > 1 && config.golden_iters > 0) {
    const double lo = std::log(grid[best > 0 ? best - 1 : 0]);
    const double hi = std::log(grid[std::min(best + 1, grid.size() - 1)]);
    auto f = [&](double log_lambda) {
      const LambdaEval e =
          evaluate_lambda(data, trend, reference, ref, var_y, std::exp(log_lambda), config);
      return e.objective ? *e.objective : std::numeric_limits<double>::infinity();
    };
    const double refined = std::exp(golden_section(f, lo, hi, 1e-6, config.golden_iters));
    const LambdaEval e = evaluate_lambda(data, trend, reference, ref, var_y, refined, config);
    if (e.objective && *e.objective < objective) {
      lambda_star = refined;
      sigma2 = *e.sigma2;
      objective = *e.objective;
    }
  }

  sol.lambda_star = lambda_star;
  sol.sigma2_opt = sigma2;
  sol.wasserstein2 = objective;
  sol.kernel = KernelSpec{reference.family, sigma2, lambda_star * reference.theta,
                          reference.nugget};
  const FittedGp model(data, sol.kernel, trend);
  sol.beta_opt = model.beta_hat();
  sol.psi_achieved = quasi_gaussian_smoothed(model, config.a, config.delta);
  return sol;
}

CalibratedIntervalModel calibrate(const Dataset& data, const TrendSpec& trend,
                                  const EstimationResult& reference, double alpha,
                                  const RpieConfig& config) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParameter("alpha must lie in (0,1)");
  CalibratedIntervalModel out;
  out.alpha = alpha;
  out.reference = reference;
  out.data = data;
  out.trend = trend;
  RpieConfig side = config;
  side.a = 1.0 - alpha / 2.0;
  out.upper = calibrate_quantile(data, trend, reference.kernel, side);
  side.a = alpha / 2.0;
  out.lower = calibrate_quantile(data, trend, reference.kernel, side);
  return out;
}

std::vector<CalibratedPrediction> predict_calibrated(const CalibratedIntervalModel& model,
                                                     const Eigen::MatrixXd& X_new) {
  const FittedGp upper(model.data, model.upper.kernel, model.trend);
  const FittedGp lower(model.data, model.lower.kernel, model.trend);
  const FittedGp reference(model.data, model.reference.kernel, model.trend);
  const double q_hi = normal_quantile(1.0 - model.alpha / 2.0);
  const double q_lo = normal_quantile(model.alpha / 2.0);
  std::vector<CalibratedPrediction> out;
  out.reserve(static_cast<std::size_t>(X_new.rows()));
  for (Eigen::Index i = 0; i < X_new.rows(); ++i) {
    const Eigen::VectorXd x = X_new.row(i).transpose();
    const Prediction pu = upper.predict(x);
    const Prediction pl = lower.predict(x);
    CalibratedPrediction p;
    p.mean = reference.predict(x).mean;
    p.upper = pu.mean + q_hi * pu.sd();
    p.lower = pl.mean + q_lo * pl.sd();
    p.crossed = p.upper < p.lower;
    out.push_back(p);
  }
  return out;
}

double calibrated_loo_coverage(const CalibratedIntervalModel& model) {
  const FittedGp upper(model.data, model.upper.kernel, model.trend);
  const FittedGp lower(model.data, model.lower.kernel, model.trend);
  return quasi_gaussian(upper, 1.0 - model.alpha / 2.0) - quasi_gaussian(lower, model.alpha / 2.0);
}

}  // namespace rpie
