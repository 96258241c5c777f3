#pragma once

#include <Eigen/Core>

#include "rpie/gp_core.hpp"

namespace rpie {

/// Closed-form leave-one-out predictions of a fitted model.
struct LooDiagnostics {
  Eigen::VectorXd loo_mean;   // y~_i
  Eigen::VectorXd loo_var;    // 1 / Kbar_ii
  Eigen::VectorXd std_resid;  // (Kbar y)_i / sqrt(Kbar_ii)
  Eigen::VectorXd kbar_diag;
};

struct SmoothingParams {
  double delta = 1e-2;
};

/// Diagnostics from an explicit Kbar and responses.
LooDiagnostics loo_from_kbar(const Eigen::MatrixXd& kbar, const Eigen::VectorXd& y);

/// Virtual LOO from one Kbar assembly (no refits).
LooDiagnostics virtual_loo(const FittedGp& model);

/// (1/n) sum (y_i - y~_i)^2 from the virtual residuals.
double loo_mse(const FittedGp& model);

/// Same quantity through the quadratic form (1/n) y' Kbar Diag(Kbar)^-2 Kbar y.
double loo_mse_quadratic(const FittedGp& model);

/// Heaviside h(x) = 1{x >= 0}.
inline double step(double x) { return x >= 0.0 ? 1.0 : 0.0; }

/// Continuous ramp replacing h for upper quantiles: 0 below 0, x/delta on (0, delta], 1 above.
double ramp_upper(double x, double delta);

/// Continuous ramp for lower quantiles: 0 below -delta, 1 + x/delta on [-delta, 0), 1 above.
double ramp_lower(double x, double delta);

/// Fraction of standardized residuals with q_a - r_i >= 0. Requires a != 1/2.
double quasi_gaussian(const Eigen::VectorXd& std_resid, double a);

/// Smoothed proportion: ramp_upper when a > 1/2, ramp_lower when a < 1/2.
/// Throws InvalidParameter when delta >= |q_a|.
double quasi_gaussian_smoothed(const Eigen::VectorXd& std_resid, double a,
                               const SmoothingParams& params);

double quasi_gaussian(const FittedGp& model, double a);
double quasi_gaussian_smoothed(const FittedGp& model, double a, const SmoothingParams& params);

/// psi_{1-alpha/2} - psi_{alpha/2}.
double loo_coverage(const Eigen::VectorXd& std_resid, double alpha);
double loo_coverage(const FittedGp& model, double alpha);

/// Direct count of y_i in (y~_i + q_{alpha/2} s_i, y~_i + q_{1-alpha/2} s_i].
double loo_coverage_by_count(const Eigen::VectorXd& y, const LooDiagnostics& loo, double alpha);

/// Throws InvalidParameter unless delta is positive and below |q_a|.
void validate_smoothing(double a, const SmoothingParams& params);

}  // namespace rpie
