#pragma once

#include <string>
#include <string_view>

#include <Eigen/Core>

namespace rpie {

/// Matérn smoothness classes with closed-form correlation functions.
enum class KernelFamily {
  Exponential,         // nu = 1/2
  Matern32,            // nu = 3/2
  Matern52,            // nu = 5/2
  SquaredExponential,  // nu -> infinity
};

/// Short CLI/JSON name: "exp", "m32", "m52", "sqexp".
std::string_view to_string(KernelFamily family);
KernelFamily parse_kernel_family(std::string_view name);

/// Smoothness nu of the family (infinity for the squared exponential).
double smoothness(KernelFamily family);

/// Amplitude, per-dimension length-scales and nugget of a stationary kernel.
struct KernelSpec {
  KernelFamily family = KernelFamily::Matern52;
  double sigma2 = 1.0;
  Eigen::VectorXd theta;
  double nugget = 0.0;

  Eigen::Index dim() const { return theta.size(); }

  /// Throws InvalidParameter unless sigma2 > 0, theta > 0 and nugget >= 0.
  void validate() const;
};

/// Unit-amplitude correlation at scaled distance r >= 0.
double correlation(KernelFamily family, double r);

/// One-dimensional Matérn kernel r(h) with amplitude sigma2 and length-scale theta.
double kernel_1d(KernelFamily family, double sigma2, double theta, double h);

/// sqrt(sum_j (x_j - x'_j)^2 / theta_j^2); distances below 1e-14 collapse to 0.
double scaled_distance(const Eigen::Ref<const Eigen::VectorXd>& theta,
                       const Eigen::Ref<const Eigen::VectorXd>& x,
                       const Eigen::Ref<const Eigen::VectorXd>& xp);

/// Anisotropic geometric (radial) kernel. Excludes the nugget.
double kernel_radial(const KernelSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& xp);

/// Gram matrix of the rows of X under the radial kernel, without nugget.
Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& X, const KernelSpec& spec);

/// Correlation matrix (unit amplitude, no nugget) of the rows of X.
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& X, KernelFamily family,
                                   const Eigen::VectorXd& theta);

/// Cross-covariance between rows of A (rows of the result) and rows of B.
Eigen::MatrixXd cross_covariance(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                 const KernelSpec& spec);

}  // namespace rpie
