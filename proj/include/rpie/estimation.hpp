#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rpie/gp_core.hpp"
#include "rpie/kernels.hpp"
#include "rpie/mcmc.hpp"

namespace rpie {

enum class EstimationMethod { MLE, MSE_CV };

std::string_view to_string(EstimationMethod method);
EstimationMethod parse_estimation_method(std::string_view name);

/// Nugget handling during estimation: held at a user value, or estimated as
/// an extra log-parameter.
struct NuggetMode {
  bool joint = false;
  double value = 0.0;

  static NuggetMode fixed(double value) { return {false, value}; }
  static NuggetMode estimated() { return {true, 0.0}; }

  /// "fixed:<v>" or "joint".
  static NuggetMode parse(std::string_view text);
  std::string str() const;
};

struct EstimationOptions {
  int starts = 5;
  std::uint64_t seed = 0;
  int max_evals = 2000;  // per start
  double tolerance = 1e-8;
  // Search points whose covariance needs jitter or whose Cholesky diagonal implies a
  // condition number above this bound are treated as infeasible. 0 disables the guard.
  double max_condition = 1e12;
};

struct EstimationResult {
  KernelSpec kernel;
  double objective_value = 0.0;
  int n_evals = 0;
  EstimationMethod method = EstimationMethod::MLE;
  bool converged = false;
};

/// Unbiased sample variance of y; 1 when it is zero, undefined or n < 2.
double response_variance(const Eigen::VectorXd& y);

/// Input range max - min of column j; 1 when degenerate.
double column_range(const Eigen::MatrixXd& X, Eigen::Index j);

/// Log-space search box for (sigma2, theta_1..d[, nugget]):
/// theta_j in [1e-2, 1e2] x range_j, sigma2 in [1e-6, 1e4] x var(y),
/// nugget in [1e-10, 1] x var(y).
struct SearchBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::VectorXd scale;  // log of (var(y), range_1..d[, var(y)])
};

SearchBox search_box(const Dataset& data, bool with_nugget);

/// Profile objective y' Kbar y + log det K (beta profiled out).
double mle_objective(const Dataset& data, const TrendSpec& trend, const KernelSpec& kernel);

/// y' Kbar Diag(Kbar)^-2 Kbar y, i.e. n times the LOO mean squared error.
double msecv_objective(const Dataset& data, const TrendSpec& trend, const KernelSpec& kernel);

/// Nugget-free amplitude that normalizes the standardized LOO residuals:
/// (1/n) y' Rbar Diag(Rbar)^-1 Rbar y at unit amplitude.
double msecv_sigma2_closed_form(const Dataset& data, const TrendSpec& trend,
                                KernelFamily family, const Eigen::VectorXd& theta);

EstimationResult fit_mle(const Dataset& data, const TrendSpec& trend, KernelFamily family,
                         const NuggetMode& nugget, const EstimationOptions& options = {});

/// With a zero fixed nugget the length-scales are fitted on the amplitude-free
/// objective and sigma2 comes from msecv_sigma2_closed_form; otherwise all
/// parameters are searched jointly.
EstimationResult fit_msecv(const Dataset& data, const TrendSpec& trend, KernelFamily family,
                           const NuggetMode& nugget, const EstimationOptions& options = {});

EstimationResult fit(EstimationMethod method, const Dataset& data, const TrendSpec& trend,
                     KernelFamily family, const NuggetMode& nugget,
                     const EstimationOptions& options = {});

/// Hyperparameter posterior draws from random-walk Metropolis-Hastings on
/// log(sigma2), log(theta_j) with independent N(0,1) priors on the
/// standardized logs log(sigma2/var y), log(theta_j/range_j). The likelihood
/// is the profile likelihood exp(-mle_objective/2).
struct BayesPosterior {
  std::vector<KernelSpec> samples;
  double acceptance_rate = 0.0;
  bool acceptance_warning = false;  // rate outside [0.05, 0.7]
};

BayesPosterior sample_posterior(const Dataset& data, const TrendSpec& trend, KernelFamily family,
                                double nugget, const McmcConfig& config, std::uint64_t seed,
                                const std::optional<KernelSpec>& start = std::nullopt);

struct BayesPrediction {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::VectorXd mean;
  double acceptance_rate = 0.0;
  bool acceptance_warning = false;
};

/// Empirical alpha/2 and 1-alpha/2 quantiles of Y(x_new) drawn once per
/// posterior sample from the plug-in predictive distribution.
BayesPrediction predict_from_posterior(const BayesPosterior& posterior, const Dataset& data,
                                       const TrendSpec& trend, const Eigen::MatrixXd& X_new,
                                       double alpha, std::uint64_t seed);

BayesPrediction bayes_predictive(const Dataset& data, const TrendSpec& trend, KernelFamily family,
                                 double nugget, const McmcConfig& config,
                                 const Eigen::MatrixXd& X_new, double alpha, std::uint64_t seed,
                                 const std::optional<KernelSpec>& start = std::nullopt);

/// LOO coverage of the posterior predictive: for every retained sample the
/// virtual LOO distribution of each training response is sampled once, and
/// y_i is counted when it falls between the empirical alpha/2 and 1-alpha/2
/// quantiles.
double bayes_loo_coverage(const BayesPosterior& posterior, const Dataset& data,
                          const TrendSpec& trend, double alpha, std::uint64_t seed);

/// Type-7 (linear interpolation) empirical quantile of `values`.
double empirical_quantile(std::vector<double> values, double prob);

}  // namespace rpie
