#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "rpie/kernels.hpp"

namespace rpie {

enum class TrendKind {
  Simple,     // known zero mean
  Ordinary,   // unknown constant
  Universal,  // constant + first-degree monomials
};

std::string_view to_string(TrendKind kind);
TrendKind parse_trend(std::string_view name);

struct TrendSpec {
  TrendKind kind = TrendKind::Ordinary;

  /// Number of basis functions p for inputs of dimension d.
  Eigen::Index basis_size(Eigen::Index d) const;
};

/// Experimental design X (n x d) and responses y.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> columns;
  std::string target;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index d() const { return X.cols(); }

  /// Shape and finiteness checks; throws ShapeError / DataError.
  void validate() const;
};

/// Copy of the rows of `data` selected by `rows`.
Dataset subset(const Dataset& data, const std::vector<Eigen::Index>& rows);

bool has_duplicate_rows(const Eigen::MatrixXd& X);

/// F_ij = f_j(x_i). Throws HypothesisViolation(H1) when F is rank deficient
/// or n < p.
Eigen::MatrixXd build_regression_matrix(const Eigen::MatrixXd& X, const TrendSpec& trend);

/// (f_0(x), ..., f_{p-1}(x)).
Eigen::VectorXd trend_basis(const Eigen::Ref<const Eigen::VectorXd>& x, const TrendSpec& trend);

/// K = Gram(X) + nugget * I. Duplicated rows without nugget are rejected as
/// ill-conditioned up front since jitter would otherwise mask the singularity.
Eigen::MatrixXd build_covariance(const Eigen::MatrixXd& X, const KernelSpec& kernel);

struct CovarianceFactor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;  // absolute ridge that was added to the diagonal

  double log_det() const;
};

/// Cholesky of K with the ridge escalation 1e-10 * scale, x10 up to 1e-6 * scale.
/// Throws IllConditioned when every attempt fails.
CovarianceFactor factorize_covariance(const Eigen::MatrixXd& K, double scale);

/// Generalized least squares beta = (F' K^-1 F)^-1 F' K^-1 y via triangular solves.
Eigen::VectorXd fit_beta(const Eigen::MatrixXd& F, const CovarianceFactor& factor,
                         const Eigen::VectorXd& y);

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
  double sd() const;
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double width() const { return upper - lower; }
};

/// Kriging predictor: the dataset, hyperparameters and every factorization
/// needed for BLUP predictions. Immutable after construction.
class FittedGp {
 public:
  FittedGp(Dataset data, KernelSpec kernel, TrendSpec trend);

  const Dataset& dataset() const { return data_; }
  const KernelSpec& kernel() const { return kernel_; }
  const TrendSpec& trend() const { return trend_; }
  const Eigen::MatrixXd& regression_matrix() const { return F_; }
  const Eigen::VectorXd& beta_hat() const { return beta_; }
  const CovarianceFactor& factor() const { return factor_; }
  double jitter_used() const { return factor_.jitter; }
  Eigen::Index n() const { return data_.n(); }
  Eigen::Index p() const { return F_.cols(); }

  /// K^-1 (y - F beta).
  const Eigen::VectorXd& weights() const { return weights_; }
  /// K^-1 F.
  const Eigen::MatrixXd& kinv_f() const { return kinv_f_; }
  /// Cholesky factor of F' K^-1 F (empty for simple kriging).
  const Eigen::LLT<Eigen::MatrixXd>& information() const { return information_; }

  /// y' Kbar y = (y - F beta)' K^-1 (y - F beta).
  double residual_quadratic_form() const;

  /// BLUP mean and variance, the latter including nugget and trend uncertainty.
  Prediction predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  std::vector<Prediction> predict_rows(const Eigen::MatrixXd& X) const;

  /// Kbar, assembled once and cached.
  const Eigen::MatrixXd& kbar() const;

 private:
  Dataset data_;
  KernelSpec kernel_;
  TrendSpec trend_;
  Eigen::MatrixXd F_;
  CovarianceFactor factor_;
  Eigen::MatrixXd kinv_f_;
  Eigen::LLT<Eigen::MatrixXd> information_;
  Eigen::VectorXd beta_;
  Eigen::VectorXd weights_;

  struct KbarCache;
  std::shared_ptr<KbarCache> kbar_cache_;
};

/// Symmetric interval mean -/+ q_{1-alpha/2} * sd.
Interval prediction_interval(const Prediction& prediction, double alpha);
Interval prediction_interval(const FittedGp& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                             double alpha);

/// Kbar = K^-1 - K^-1 F (F' K^-1 F)^-1 F' K^-1. Throws HypothesisViolation(H2)
/// when a diagonal entry is not positive (relative tolerance 1e-12 against
/// the largest diagonal entry of K^-1).
Eigen::MatrixXd compute_kbar(const FittedGp& model);

/// diag(Kbar) without assembling Kbar, with the same H2 check.
Eigen::VectorXd kbar_diagonal(const FittedGp& model);

/// Orthonormal basis W of (Im F)^perp and the projector Pi = W W'.
struct ProjectionBasis {
  Eigen::MatrixXd W;
  Eigen::MatrixXd Pi;
};

ProjectionBasis projection_basis(const Eigen::MatrixXd& F);

struct HypothesisReport {
  bool h1 = false;
  bool h2 = false;
  bool h3 = false;
  Eigen::Index k_eps = 0;  // #{ (Pi y)_i / sqrt(Pi_ii) <= sigma_eps q_a }
  double n_a = 0.0;
};

HypothesisReport check_hypotheses(const Dataset& data, const TrendSpec& trend,
                                  const KernelSpec& kernel, double a);

}  // namespace rpie
