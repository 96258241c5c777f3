#include "rpie/loo.hpp"

#include <cmath>
#include <string>

#include "rpie/error.hpp"
#include "rpie/normal.hpp"

namespace rpie {

namespace {

void check_level(double a) {
  if (!(a > 0.0 && a < 1.0) || a == 0.5) {
    throw InvalidParameter("quantile level must lie in (0,1) and differ from 1/2, got " +
                           std::to_string(a));
  }
}

}  // namespace

LooDiagnostics loo_from_kbar(const Eigen::MatrixXd& kbar, const Eigen::VectorXd& y) {
  LooDiagnostics out;
  out.kbar_diag = kbar.diagonal();
  const Eigen::VectorXd ky = kbar * y;
  out.loo_var = out.kbar_diag.cwiseInverse();
  out.loo_mean = y - ky.cwiseQuotient(out.kbar_diag);
  out.std_resid = ky.cwiseQuotient(out.kbar_diag.cwiseSqrt());
  return out;
}

LooDiagnostics virtual_loo(const FittedGp& model) {
  return loo_from_kbar(model.kbar(), model.dataset().y);
}

double loo_mse(const FittedGp& model) {
  const auto loo = virtual_loo(model);
  return (model.dataset().y - loo.loo_mean).squaredNorm() / static_cast<double>(model.n());
}

double loo_mse_quadratic(const FittedGp& model) {
  const Eigen::MatrixXd& kbar = model.kbar();
  const Eigen::VectorXd& y = model.dataset().y;
  const Eigen::VectorXd inv_d2 = kbar.diagonal().array().square().inverse();
  const Eigen::VectorXd ky = kbar * y;
  return ky.dot(inv_d2.asDiagonal() * ky) / static_cast<double>(model.n());
}

double ramp_upper(double x, double delta) {
  if (x > delta) return 1.0;
  if (x > 0.0) return x / delta;
  return 0.0;
}

double ramp_lower(double x, double delta) {
  if (x >= 0.0) return 1.0;
  if (x >= -delta) return 1.0 + x / delta;
  return 0.0;
}

void validate_smoothing(double a, const SmoothingParams& params) {
  check_level(a);
  const double q = normal_quantile(a);
  if (!(params.delta > 0.0) || params.delta >= std::abs(q)) {
    throw InvalidParameter("smoothing width delta=" + std::to_string(params.delta) +
                           " must be positive and below |q_a|=" + std::to_string(std::abs(q)));
  }
}

double quasi_gaussian(const Eigen::VectorXd& std_resid, double a) {
  check_level(a);
  const double q = normal_quantile(a);
  double s = 0.0;
  for (Eigen::Index i = 0; i < std_resid.size(); ++i) s += step(q - std_resid[i]);
  return s / static_cast<double>(std_resid.size());
}

double quasi_gaussian_smoothed(const Eigen::VectorXd& std_resid, double a,
                               const SmoothingParams& params) {
  validate_smoothing(a, params);
  const double q = normal_quantile(a);
  double s = 0.0;
  if (a > 0.5) {
    for (Eigen::Index i = 0; i < std_resid.size(); ++i) s += ramp_upper(q - std_resid[i], params.delta);
  } else {
    for (Eigen::Index i = 0; i < std_resid.size(); ++i) s += ramp_lower(q - std_resid[i], params.delta);
  }
  return s / static_cast<double>(std_resid.size());
}

double quasi_gaussian(const FittedGp& model, double a) {
  return quasi_gaussian(virtual_loo(model).std_resid, a);
}

double quasi_gaussian_smoothed(const FittedGp& model, double a, const SmoothingParams& params) {
  return quasi_gaussian_smoothed(virtual_loo(model).std_resid, a, params);
}

double loo_coverage(const Eigen::VectorXd& std_resid, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParameter("alpha must lie in (0,1)");
  return quasi_gaussian(std_resid, 1.0 - alpha / 2.0) - quasi_gaussian(std_resid, alpha / 2.0);
}

double loo_coverage(const FittedGp& model, double alpha) {
  return loo_coverage(virtual_loo(model).std_resid, alpha);
}

double loo_coverage_by_count(const Eigen::VectorXd& y, const LooDiagnostics& loo, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParameter("alpha must lie in (0,1)");
  const double q_hi = normal_quantile(1.0 - alpha / 2.0);
  const double q_lo = normal_quantile(alpha / 2.0);
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double s = std::sqrt(loo.loo_var[i]);
    const double lower = loo.loo_mean[i] + q_lo * s;
    const double upper = loo.loo_mean[i] + q_hi * s;
    if (lower < y[i] && y[i] <= upper) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

}  // namespace rpie
