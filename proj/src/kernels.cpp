#include "rpie/kernels.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "rpie/error.hpp"

namespace rpie {

namespace {

constexpr double kZeroDistance = 1e-14;

}  // namespace

std::string_view to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::Exponential:
      return "exp";
    case KernelFamily::Matern32:
      return "m32";
    case KernelFamily::Matern52:
      return "m52";
    case KernelFamily::SquaredExponential:
      return "sqexp";
  }
  return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "exp" || name == "exponential") return KernelFamily::Exponential;
  if (name == "m32" || name == "matern32") return KernelFamily::Matern32;
  if (name == "m52" || name == "matern52") return KernelFamily::Matern52;
  if (name == "sqexp" || name == "gaussian") return KernelFamily::SquaredExponential;
  throw InvalidParameter("unknown kernel family '" + std::string(name) +
                         "' (expected exp, m32, m52 or sqexp)");
}

double smoothness(KernelFamily family) {
  switch (family) {
    case KernelFamily::Exponential:
      return 0.5;
    case KernelFamily::Matern32:
      return 1.5;
    case KernelFamily::Matern52:
      return 2.5;
    case KernelFamily::SquaredExponential:
      return std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

void KernelSpec::validate() const {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw InvalidParameter("kernel amplitude sigma2 must be positive and finite");
  }
  if (theta.size() == 0) throw InvalidParameter("kernel needs at least one length-scale");
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    if (!(theta[j] > 0.0) || !std::isfinite(theta[j])) {
      throw InvalidParameter("length-scale theta[" + std::to_string(j) + "] must be positive");
    }
  }
  if (!(nugget >= 0.0) || !std::isfinite(nugget)) {
    throw InvalidParameter("nugget must be non-negative");
  }
}

double correlation(KernelFamily family, double r) {
  switch (family) {
    case KernelFamily::Exponential:
      return std::exp(-r);
    case KernelFamily::Matern32: {
      const double s = std::sqrt(3.0) * r;
      return (1.0 + s) * std::exp(-s);
    }
    case KernelFamily::Matern52: {
      const double s = std::sqrt(5.0) * r;
      return (1.0 + s + s * s / 3.0) * std::exp(-s);
    }
    case KernelFamily::SquaredExponential:
      return std::exp(-0.5 * r * r);
  }
  return 0.0;
}

double kernel_1d(KernelFamily family, double sigma2, double theta, double h) {
  if (!(theta > 0.0)) throw InvalidParameter("kernel_1d: theta must be positive");
  if (!(h >= 0.0)) throw InvalidParameter("kernel_1d: distance must be non-negative");
  return sigma2 * correlation(family, h / theta);
}

double scaled_distance(const Eigen::Ref<const Eigen::VectorXd>& theta,
                       const Eigen::Ref<const Eigen::VectorXd>& x,
                       const Eigen::Ref<const Eigen::VectorXd>& xp) {
  if (x.size() != theta.size() || xp.size() != theta.size()) {
    throw ShapeError("kernel inputs have dimension " + std::to_string(x.size()) + "/" +
                     std::to_string(xp.size()) + " but theta has " +
                     std::to_string(theta.size()));
  }
  double s = 0.0;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double u = (x[j] - xp[j]) / theta[j];
    s += u * u;
  }
  const double r = std::sqrt(s);
  return r < kZeroDistance ? 0.0 : r;
}

double kernel_radial(const KernelSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& xp) {
  return spec.sigma2 * correlation(spec.family, scaled_distance(spec.theta, x, xp));
}

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& X, KernelFamily family,
                                   const Eigen::VectorXd& theta) {
  if (X.cols() != theta.size()) {
    throw ShapeError("design has " + std::to_string(X.cols()) + " columns but theta has " +
                     std::to_string(theta.size()));
  }
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  // Row-major scaled copy keeps the inner distance loop contiguous.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Z(n, d);
  for (Eigen::Index j = 0; j < d; ++j) Z.col(j) = X.col(j) / theta[j];

  Eigen::MatrixXd R(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    R(i, i) = 1.0;
    const double* zi = Z.row(i).data();
    for (Eigen::Index k = i + 1; k < n; ++k) {
      const double* zk = Z.row(k).data();
      double s = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double u = zi[j] - zk[j];
        s += u * u;
      }
      double r = std::sqrt(s);
      if (r < kZeroDistance) r = 0.0;
      const double c = correlation(family, r);
      R(i, k) = c;
      R(k, i) = c;
    }
  }
  return R;
}

Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& X, const KernelSpec& spec) {
  return spec.sigma2 * correlation_matrix(X, spec.family, spec.theta);
}

Eigen::MatrixXd cross_covariance(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                 const KernelSpec& spec) {
  if (A.cols() != spec.dim() || B.cols() != spec.dim()) {
    throw ShapeError("cross_covariance: input dimension does not match theta");
  }
  Eigen::MatrixXd out(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index k = 0; k < B.rows(); ++k) {
      out(i, k) = kernel_radial(spec, A.row(i).transpose(), B.row(k).transpose());
    }
  }
  return out;
}

}  // namespace rpie
