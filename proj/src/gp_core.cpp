#include "rpie/gp_core.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <string>

#include <Eigen/Dense>

#include "rpie/error.hpp"
#include "rpie/normal.hpp"

namespace rpie {

std::string_view to_string(TrendKind kind) {
  switch (kind) {
    case TrendKind::Simple:
      return "simple";
    case TrendKind::Ordinary:
      return "ordinary";
    case TrendKind::Universal:
      return "universal";
  }
  return "unknown";
}

TrendKind parse_trend(std::string_view name) {
  if (name == "simple") return TrendKind::Simple;
  if (name == "ordinary") return TrendKind::Ordinary;
  if (name == "universal") return TrendKind::Universal;
  throw InvalidParameter("unknown trend '" + std::string(name) +
                         "' (expected simple, ordinary or universal)");
}

Eigen::Index TrendSpec::basis_size(Eigen::Index d) const {
  switch (kind) {
    case TrendKind::Simple:
      return 0;
    case TrendKind::Ordinary:
      return 1;
    case TrendKind::Universal:
      return d + 1;
  }
  return 0;
}

void Dataset::validate() const {
  if (X.rows() < 1 || X.cols() < 1) throw ShapeError("dataset needs n >= 1 and d >= 1");
  if (y.size() != X.rows()) {
    throw ShapeError("design has " + std::to_string(X.rows()) + " rows but y has " +
                     std::to_string(y.size()) + " entries");
  }
  if (!X.allFinite() || !y.allFinite()) throw DataError("dataset contains non-finite values");
}

Dataset subset(const Dataset& data, const std::vector<Eigen::Index>& rows) {
  Dataset out;
  out.columns = data.columns;
  out.target = data.target;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), data.d());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    out.X.row(static_cast<Eigen::Index>(i)) = data.X.row(r);
    out.y[static_cast<Eigen::Index>(i)] = data.y[r];
  }
  return out;
}

bool has_duplicate_rows(const Eigen::MatrixXd& X) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) order[static_cast<std::size_t>(i)] = i;
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (X(a, j) != X(b, j)) return X(a, j) < X(b, j);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), less);
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (!less(order[i - 1], order[i]) && !less(order[i], order[i - 1])) return true;
  }
  return false;
}

Eigen::VectorXd trend_basis(const Eigen::Ref<const Eigen::VectorXd>& x, const TrendSpec& trend) {
  const Eigen::Index p = trend.basis_size(x.size());
  Eigen::VectorXd f(p);
  if (p > 0) f[0] = 1.0;
  if (trend.kind == TrendKind::Universal) f.tail(x.size()) = x;
  return f;
}

Eigen::MatrixXd build_regression_matrix(const Eigen::MatrixXd& X, const TrendSpec& trend) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = trend.basis_size(X.cols());
  Eigen::MatrixXd F(n, p);
  if (p == 0) return F;
  if (n < p) {
    throw HypothesisViolation(Hypothesis::H1, "regression matrix needs n >= p (n=" +
                                                  std::to_string(n) + ", p=" + std::to_string(p) +
                                                  ")");
  }
  F.col(0).setOnes();
  if (trend.kind == TrendKind::Universal) F.rightCols(X.cols()) = X;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(F);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    throw HypothesisViolation(Hypothesis::H1, "regression matrix is rank deficient (rank " +
                                                  std::to_string(qr.rank()) + " < p=" +
                                                  std::to_string(p) + ")");
  }
  return F;
}

Eigen::MatrixXd build_covariance(const Eigen::MatrixXd& X, const KernelSpec& kernel) {
  kernel.validate();
  if (kernel.nugget == 0.0 && has_duplicate_rows(X)) {
    throw IllConditioned("duplicated design points with zero nugget make K singular");
  }
  Eigen::MatrixXd K = gram_matrix(X, kernel);
  K.diagonal().array() += kernel.nugget;
  return K;
}

double CovarianceFactor::log_det() const {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

CovarianceFactor factorize_covariance(const Eigen::MatrixXd& K, double scale) {
  CovarianceFactor out;
  out.llt.compute(K);
  if (out.llt.info() == Eigen::Success) return out;
  for (double rel = 1e-10; rel <= 1e-6 * (1.0 + 1e-9); rel *= 10.0) {
    Eigen::MatrixXd Kj = K;
    Kj.diagonal().array() += rel * scale;
    out.llt.compute(Kj);
    if (out.llt.info() == Eigen::Success) {
      out.jitter = rel * scale;
      return out;
    }
  }
  throw IllConditioned("covariance matrix is not positive definite even with ridge 1e-6*sigma2");
}

Eigen::VectorXd fit_beta(const Eigen::MatrixXd& F, const CovarianceFactor& factor,
                         const Eigen::VectorXd& y) {
  if (F.cols() == 0) return Eigen::VectorXd(0);
  const Eigen::MatrixXd kinv_f = factor.llt.solve(F);
  Eigen::MatrixXd info = F.transpose() * kinv_f;
  info = 0.5 * (info + info.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> info_llt(info);
  if (info_llt.info() != Eigen::Success) {
    throw HypothesisViolation(Hypothesis::H1, "F' K^-1 F is singular");
  }
  return info_llt.solve(kinv_f.transpose() * y);
}

double Prediction::sd() const { return std::sqrt(std::max(variance, 0.0)); }

struct FittedGp::KbarCache {
  std::once_flag once;
  Eigen::MatrixXd value;
};

FittedGp::FittedGp(Dataset data, KernelSpec kernel, TrendSpec trend)
    : data_(std::move(data)),
      kernel_(std::move(kernel)),
      trend_(trend),
      kbar_cache_(std::make_shared<KbarCache>()) {
  data_.validate();
  kernel_.validate();
  if (kernel_.dim() != data_.d()) {
    throw ShapeError("kernel has " + std::to_string(kernel_.dim()) +
                     " length-scales but the design has " + std::to_string(data_.d()) +
                     " columns");
  }
  F_ = build_regression_matrix(data_.X, trend_);
  factor_ = factorize_covariance(build_covariance(data_.X, kernel_), kernel_.sigma2);

  const Eigen::Index p = F_.cols();
  if (p > 0) {
    kinv_f_ = factor_.llt.solve(F_);
    Eigen::MatrixXd info = F_.transpose() * kinv_f_;
    info = 0.5 * (info + info.transpose()).eval();
    information_.compute(info);
    if (information_.info() != Eigen::Success) {
      throw HypothesisViolation(Hypothesis::H1, "F' K^-1 F is singular");
    }
    beta_ = information_.solve(kinv_f_.transpose() * data_.y);
    weights_ = factor_.llt.solve(data_.y - F_ * beta_);
  } else {
    kinv_f_.resize(data_.n(), 0);
    beta_.resize(0);
    weights_ = factor_.llt.solve(data_.y);
  }
}

double FittedGp::residual_quadratic_form() const {
  const Eigen::VectorXd r = F_.cols() > 0 ? Eigen::VectorXd(data_.y - F_ * beta_) : data_.y;
  return r.dot(weights_);
}

Prediction FittedGp::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != data_.d()) {
    throw ShapeError("prediction point has dimension " + std::to_string(x.size()) +
                     ", model expects " + std::to_string(data_.d()));
  }
  Eigen::VectorXd k(data_.n());
  for (Eigen::Index i = 0; i < data_.n(); ++i) {
    k[i] = kernel_radial(kernel_, x, data_.X.row(i).transpose());
  }
  Prediction out;
  out.mean = k.dot(weights_);
  const Eigen::VectorXd v = factor_.llt.matrixL().solve(k);
  double var = kernel_.sigma2 + kernel_.nugget - v.squaredNorm();
  if (F_.cols() > 0) {
    const Eigen::VectorXd f = trend_basis(x, trend_);
    out.mean += f.dot(beta_);
    // The trend correction uses F' K^-1 k (the dimensionally consistent form).
    const Eigen::VectorXd u = f - kinv_f_.transpose() * k;
    var += u.dot(information_.solve(u));
  }
  out.variance = std::max(var, 0.0);
  return out;
}

std::vector<Prediction> FittedGp::predict_rows(const Eigen::MatrixXd& X) const {
  std::vector<Prediction> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) out.push_back(predict(X.row(i).transpose()));
  return out;
}

const Eigen::MatrixXd& FittedGp::kbar() const {
  std::call_once(kbar_cache_->once, [this] { kbar_cache_->value = compute_kbar(*this); });
  return kbar_cache_->value;
}

Interval prediction_interval(const Prediction& prediction, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParameter("alpha must lie in (0,1)");
  const double q = normal_quantile(1.0 - alpha / 2.0);
  return {prediction.mean - q * prediction.sd(), prediction.mean + q * prediction.sd()};
}

Interval prediction_interval(const FittedGp& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                             double alpha) {
  return prediction_interval(model.predict(x), alpha);
}

Eigen::MatrixXd compute_kbar(const FittedGp& model) {
  const Eigen::Index n = model.n();
  Eigen::MatrixXd kbar = model.factor().llt.solve(Eigen::MatrixXd::Identity(n, n));
  const double scale = kbar.diagonal().maxCoeff();
  if (model.p() > 0) {
    const Eigen::MatrixXd& kf = model.kinv_f();
    kbar.noalias() -= kf * model.information().solve(kf.transpose());
  }
  kbar = 0.5 * (kbar + kbar.transpose()).eval();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(kbar(i, i) > 1e-12 * scale)) {
      throw HypothesisViolation(Hypothesis::H2, "Kbar diagonal entry " + std::to_string(i) +
                                                    " is not positive: e_i lies in Im F");
    }
  }
  return kbar;
}

Eigen::VectorXd kbar_diagonal(const FittedGp& model) {
  const Eigen::Index n = model.n();
  const Eigen::MatrixXd linv =
      model.factor().llt.matrixL().solve(Eigen::MatrixXd::Identity(n, n));
  Eigen::VectorXd diag = linv.colwise().squaredNorm().transpose();
  const double scale = diag.maxCoeff();
  if (model.p() > 0) {
    const Eigen::MatrixXd z =
        model.information().matrixL().solve(model.kinv_f().transpose());
    diag -= z.colwise().squaredNorm().transpose();
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(diag[i] > 1e-12 * scale)) {
      throw HypothesisViolation(Hypothesis::H2, "Kbar diagonal entry " + std::to_string(i) +
                                                    " is not positive: e_i lies in Im F");
    }
  }
  return diag;
}

ProjectionBasis projection_basis(const Eigen::MatrixXd& F) {
  const Eigen::Index n = F.rows();
  const Eigen::Index p = F.cols();
  ProjectionBasis out;
  if (p == 0) {
    out.W = Eigen::MatrixXd::Identity(n, n);
    out.Pi = Eigen::MatrixXd::Identity(n, n);
    return out;
  }
  if (p >= n) {
    throw HypothesisViolation(Hypothesis::H2,
                              "no residual space: (Im F)^perp is trivial when p >= n");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rank_check(F);
  rank_check.setThreshold(1e-10);
  if (rank_check.rank() < p) {
    throw HypothesisViolation(Hypothesis::H1, "regression matrix is rank deficient");
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(F);
  const Eigen::MatrixXd Q = qr.householderQ();
  out.W = Q.rightCols(n - p);
  out.Pi = out.W * out.W.transpose();
  return out;
}

HypothesisReport check_hypotheses(const Dataset& data, const TrendSpec& trend,
                                  const KernelSpec& kernel, double a) {
  if (!(a > 0.0 && a < 1.0) || a == 0.5) {
    throw InvalidParameter("quantile level a must lie in (0,1) and differ from 1/2");
  }
  HypothesisReport report;
  report.n_a = static_cast<double>(data.n()) * a;
  Eigen::MatrixXd F;
  try {
    F = build_regression_matrix(data.X, trend);
    report.h1 = true;
  } catch (const HypothesisViolation&) {
    return report;
  }
  ProjectionBasis basis;
  try {
    basis = projection_basis(F);
  } catch (const HypothesisViolation&) {
    return report;
  }
  const Eigen::VectorXd diag = basis.Pi.diagonal();
  report.h2 = (diag.array() > 1e-12).all();
  if (!report.h2) return report;

  const Eigen::VectorXd proj = basis.Pi * data.y;
  const double threshold = std::sqrt(kernel.nugget) * normal_quantile(a);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (proj[i] / std::sqrt(diag[i]) <= threshold) ++report.k_eps;
  }
  const double k = static_cast<double>(report.k_eps);
  report.h3 = a > 0.5 ? k < report.n_a : k > report.n_a;
  return report;
}

}  // namespace rpie
