#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rpie/estimation.hpp"
#include "rpie/gp_core.hpp"
#include "rpie/loo.hpp"

namespace rpie {

/// `count` log-spaced points on [lo, hi]; a single point requires lo == hi.
struct LogGrid {
  double lo = 1e-2;
  double hi = 1e2;
  int count = 60;

  void validate() const;
  std::vector<double> points() const;
  /// "lo,hi,count".
  static LogGrid parse(std::string_view text);
};

struct RpieConfig {
  double a = 0.95;
  SmoothingParams delta;
  LogGrid lambda_grid{1e-2, 1e2, 60};
  LogGrid sigma_scan{1e-8, 1e8, 200};  // multiples of var(y)
  int refine_iters = 60;               // bisection steps in log sigma2
  int golden_iters = 60;               // golden-section steps in log lambda

  void validate() const;
};

/// Standardized LOO residuals r(sigma2) = (Kbar y)_i / sqrt(Kbar_ii) for fixed
/// length-scales, reusable across many amplitudes. With a nugget the
/// correlation matrix is eigendecomposed once; without one the residuals at
/// unit amplitude are rescaled by 1/sigma.
class ResidualProfile {
 public:
  ResidualProfile(const Dataset& data, const TrendSpec& trend, KernelFamily family,
                  const Eigen::VectorXd& theta, double nugget);

  Eigen::VectorXd std_resid(double sigma2) const;
  /// GLS trend coefficients at (sigma2, theta).
  Eigen::VectorXd beta(double sigma2) const;
  /// Covariance sigma2 R + nugget I.
  Eigen::MatrixXd covariance(double sigma2) const;
  const Eigen::MatrixXd& regression_matrix() const { return F_; }

 private:
  bool spectral_;
  double nugget_;
  Eigen::MatrixXd F_;
  Eigen::MatrixXd R_;
  // spectral mode
  Eigen::MatrixXd U_, U2_, G_;
  Eigen::VectorXd lambda_, z_;
  // scaled mode
  Eigen::VectorXd unit_resid_, unit_beta_;
};

/// Smallest sigma2 on the ascending scan whose bracket contains a root of
/// psi_delta(sigma2, theta) - a, refined by bisection in log sigma2. Absent
/// when psi_delta - a never changes sign on the scan.
std::optional<double> sigma_opt(const Dataset& data, const TrendSpec& trend, KernelFamily family,
                                const Eigen::VectorXd& theta, double nugget, double a,
                                const RpieConfig& config);
std::optional<double> sigma_opt(const ResidualProfile& profile, double var_y, double a,
                                const RpieConfig& config);

/// Eigen-based square root with eigenvalues clipped at zero.
Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& K);

/// Squared 2-Wasserstein distance between N(m1, K1) and N(m2, K2). Throws
/// InvalidMatrix on asymmetric or indefinite covariances.
double wasserstein2_gaussians(const Eigen::VectorXd& m1, const Eigen::MatrixXd& K1,
                              const Eigen::VectorXd& m2, const Eigen::MatrixXd& K2);

/// L(lambda): squared W2 between the Gaussian at (sigma2_opt(lambda), lambda theta0)
/// and the reference one, both with GLS means F beta. Absent when sigma_opt is.
std::optional<double> relaxation_objective(const Dataset& data, const TrendSpec& trend,
                                           const KernelSpec& reference, double lambda,
                                           const RpieConfig& config);

struct LambdaTracePoint {
  double lambda = 0.0;
  std::optional<double> sigma2;
  std::optional<double> objective;
};

struct RpieSolution {
  double a = 0.0;
  double lambda_star = 1.0;
  double sigma2_opt = 0.0;
  Eigen::VectorXd theta_ref;
  Eigen::VectorXd beta_opt;
  double wasserstein2 = 0.0;  // L(lambda*), squared distance
  double psi_achieved = 0.0;
  KernelSpec kernel;          // (sigma2_opt, lambda* theta_ref, reference nugget)
  std::vector<LambdaTracePoint> trace;
};

/// Calibrates one quantile level: grid search of L over lambda, golden-section
/// refinement on the cell around the best grid point.
RpieSolution calibrate_quantile(const Dataset& data, const TrendSpec& trend,
                                const KernelSpec& reference, const RpieConfig& config);

struct CalibratedIntervalModel {
  double alpha = 0.1;
  RpieSolution upper;  // a = 1 - alpha/2
  RpieSolution lower;  // a = alpha/2
  EstimationResult reference;
  Dataset data;
  TrendSpec trend;
};

/// Upper and lower sides are run at 1 - alpha/2 and alpha/2; `config.a` is ignored.
CalibratedIntervalModel calibrate(const Dataset& data, const TrendSpec& trend,
                                  const EstimationResult& reference, double alpha,
                                  const RpieConfig& config = {});

struct CalibratedPrediction {
  double mean = 0.0;  // reference BLUP mean
  double lower = 0.0;
  double upper = 0.0;
  bool crossed = false;
};

std::vector<CalibratedPrediction> predict_calibrated(const CalibratedIntervalModel& model,
                                                     const Eigen::MatrixXd& X_new);

/// psi_{1-alpha/2}(upper side) - psi_{alpha/2}(lower side), unsmoothed.
double calibrated_loo_coverage(const CalibratedIntervalModel& model);

}  // namespace rpie
