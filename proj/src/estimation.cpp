#include "rpie/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <string>

#include "rpie/error.hpp"
#include "rpie/loo.hpp"
#include "rpie/optimize.hpp"
#include "rpie/parallel.hpp"

namespace rpie {

std::string_view to_string(EstimationMethod method) {
  return method == EstimationMethod::MLE ? "mle" : "msecv";
}

EstimationMethod parse_estimation_method(std::string_view name) {
  if (name == "mle") return EstimationMethod::MLE;
  if (name == "msecv" || name == "mse-cv" || name == "mse_cv") return EstimationMethod::MSE_CV;
  throw InvalidParameter("unknown estimation method '" + std::string(name) + "'");
}

NuggetMode NuggetMode::parse(std::string_view text) {
  if (text == "joint") return estimated();
  constexpr std::string_view prefix = "fixed:";
  if (text.substr(0, prefix.size()) == prefix) {
    const std::string number(text.substr(prefix.size()));
    try {
      std::size_t used = 0;
      const double v = std::stod(number, &used);
      if (used == number.size() && std::isfinite(v) && v >= 0.0) return fixed(v);
    } catch (const std::exception&) {
    }
  }
  throw InvalidParameter("nugget must be 'joint' or 'fixed:<non-negative value>', got '" +
                         std::string(text) + "'");
}

std::string NuggetMode::str() const {
  if (joint) return "joint";
  char buf[64];
  std::snprintf(buf, sizeof buf, "fixed:%.17g", value);
  return buf;
}

namespace {

// Parameter vector u = (log sigma2, log theta_1..d[, log nugget]).
KernelSpec kernel_from_log(const Eigen::VectorXd& u, KernelFamily family, Eigen::Index d,
                           const NuggetMode& nugget) {
  KernelSpec k;
  k.family = family;
  k.sigma2 = std::exp(u[0]);
  k.theta = u.segment(1, d).array().exp();
  k.nugget = nugget.joint ? std::exp(u[d + 1]) : nugget.value;
  return k;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct StartOutcome {
  NelderMeadResult result;
  bool ok = false;
  std::string failure;
};

// Multi-start bounded Nelder-Mead over the coordinates selected by the box.
// Start 0 sits at the reference scales; the others draw log-uniform factors in
// [1e-2, 1e2] (nugget factors in [1e-8, 1e-1]).
NelderMeadResult multi_start(const std::function<double(const Eigen::VectorXd&)>& objective,
                             const SearchBox& box, Eigen::Index n_free_nugget,
                             const EstimationOptions& options, int* total_evals,
                             bool* any_converged, Eigen::Index theta_offset,
                             Eigen::Index theta_count) {
  if (options.starts < 1) throw InvalidParameter("need at least one optimizer start");
  const Eigen::Index dim = box.lower.size();
  std::vector<Eigen::VectorXd> starts(static_cast<std::size_t>(options.starts));
  std::mt19937_64 rng(mix_seed(options.seed, 0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double lf = std::log(1e-2), hf = std::log(1e2);
  const double ln_lo = std::log(1e-8), ln_hi = std::log(1e-1);
  for (int s = 0; s < options.starts; ++s) {
    Eigen::VectorXd x = box.scale;
    const Eigen::Index regular = dim - n_free_nugget;
    for (Eigen::Index j = 0; j < dim; ++j) {
      if (j < regular) {
        x[j] += s == 0 ? 0.0 : lf + (hf - lf) * unit(rng);
      } else {
        x[j] += s == 0 ? std::log(1e-3) : ln_lo + (ln_hi - ln_lo) * unit(rng);
      }
    }
    starts[static_cast<std::size_t>(s)] = x.cwiseMax(box.lower).cwiseMin(box.upper);
  }

  NelderMeadOptions nm;
  nm.max_evals = options.max_evals;
  nm.tolerance = options.tolerance;
  nm.initial_step = 1.0;

  std::vector<StartOutcome> outcomes(starts.size());
  parallel_for(starts.size(), [&](std::size_t s) {
    try {
      outcomes[s].result = nelder_mead(objective, starts[s], box.lower, box.upper, nm);
      outcomes[s].ok = std::isfinite(outcomes[s].result.value);
      if (!outcomes[s].ok) outcomes[s].failure = "objective infinite everywhere visited";
    } catch (const std::exception& e) {
      outcomes[s].failure = e.what();
    }
  });

  int best = -1;
  double best_norm = 0.0;
  *total_evals = 0;
  *any_converged = false;
  std::string diagnostics;
  for (std::size_t s = 0; s < outcomes.size(); ++s) {
    const StartOutcome& o = outcomes[s];
    *total_evals += o.result.evals;
    if (!o.ok) {
      diagnostics += " start " + std::to_string(s) + ": " + o.failure + ";";
      continue;
    }
    const double norm = o.result.x.segment(theta_offset, theta_count).norm();
    if (best < 0 || o.result.value < outcomes[best].result.value ||
        (o.result.value == outcomes[best].result.value && norm < best_norm)) {
      best = static_cast<int>(s);
      best_norm = norm;
    }
  }
  if (best < 0) throw EstimationFailure("every optimizer start failed:" + diagnostics);
  *any_converged = outcomes[best].result.converged;
  return outcomes[best].result;
}

double guarded(const std::function<double()>& f) {
  try {
    const double v = f();
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

// Throws IllConditioned when the factorization cannot be trusted for optimization.
void check_conditioning(const FittedGp& model, double max_condition) {
  if (max_condition <= 0.0) return;
  if (model.jitter_used() > 0.0) throw IllConditioned("covariance needed jitter");
  const auto diag = model.factor().llt.matrixLLT().diagonal();
  const double ratio = diag.maxCoeff() / diag.minCoeff();
  if (!(ratio * ratio <= max_condition)) throw IllConditioned("covariance too ill-conditioned");
}

double mle_value(const FittedGp& model) {
  return model.residual_quadratic_form() + model.factor().log_det();
}

double msecv_value(const FittedGp& model) {
  const Eigen::VectorXd diag = kbar_diagonal(model);
  return (model.weights().array() / diag.array()).square().sum();
}

// Objective evaluated at a candidate kernel, with the conditioning guard applied.
double search_value(const Dataset& data, const TrendSpec& trend, const KernelSpec& kernel,
                    EstimationMethod method, double max_condition) {
  return guarded([&] {
    const FittedGp model(data, kernel, trend);
    check_conditioning(model, max_condition);
    return method == EstimationMethod::MLE ? mle_value(model) : msecv_value(model);
  });
}

void check_estimable(const Dataset& data, const TrendSpec& trend) {
  data.validate();
  if (data.n() < 2) throw EstimationFailure("at least two observations are needed to estimate");
  build_regression_matrix(data.X, trend);
}

}  // namespace

double response_variance(const Eigen::VectorXd& y) {
  if (y.size() < 2) return 1.0;
  const double mean = y.mean();
  const double var = (y.array() - mean).square().sum() / static_cast<double>(y.size() - 1);
  return var > 0.0 && std::isfinite(var) ? var : 1.0;
}

double column_range(const Eigen::MatrixXd& X, Eigen::Index j) {
  if (X.rows() == 0) return 1.0;
  const double r = X.col(j).maxCoeff() - X.col(j).minCoeff();
  return r > 0.0 && std::isfinite(r) ? r : 1.0;
}

SearchBox search_box(const Dataset& data, bool with_nugget) {
  const Eigen::Index d = data.d();
  const Eigen::Index dim = 1 + d + (with_nugget ? 1 : 0);
  SearchBox box;
  box.lower.resize(dim);
  box.upper.resize(dim);
  box.scale.resize(dim);
  const double lv = std::log(response_variance(data.y));
  box.scale[0] = lv;
  box.lower[0] = lv + std::log(1e-6);
  box.upper[0] = lv + std::log(1e4);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double lr = std::log(column_range(data.X, j));
    box.scale[1 + j] = lr;
    box.lower[1 + j] = lr + std::log(1e-2);
    box.upper[1 + j] = lr + std::log(1e2);
  }
  if (with_nugget) {
    box.scale[d + 1] = lv;
    box.lower[d + 1] = lv + std::log(1e-10);
    box.upper[d + 1] = lv;
  }
  return box;
}

double mle_objective(const Dataset& data, const TrendSpec& trend, const KernelSpec& kernel) {
  return mle_value(FittedGp(data, kernel, trend));
}

double msecv_objective(const Dataset& data, const TrendSpec& trend, const KernelSpec& kernel) {
  return msecv_value(FittedGp(data, kernel, trend));
}

double msecv_sigma2_closed_form(const Dataset& data, const TrendSpec& trend,
                                KernelFamily family, const Eigen::VectorXd& theta) {
  KernelSpec unit{family, 1.0, theta, 0.0};
  const FittedGp model(data, unit, trend);
  const Eigen::VectorXd diag = kbar_diagonal(model);
  return (model.weights().array().square() / diag.array()).sum() /
         static_cast<double>(data.n());
}

EstimationResult fit_mle(const Dataset& data, const TrendSpec& trend, KernelFamily family,
                         const NuggetMode& nugget, const EstimationOptions& options) {
  check_estimable(data, trend);
  const Eigen::Index d = data.d();
  const SearchBox box = search_box(data, nugget.joint);
  auto objective = [&](const Eigen::VectorXd& u) {
    return search_value(data, trend, kernel_from_log(u, family, d, nugget), EstimationMethod::MLE,
                        options.max_condition);
  };
  EstimationResult out;
  out.method = EstimationMethod::MLE;
  const NelderMeadResult best = multi_start(objective, box, nugget.joint ? 1 : 0, options,
                                            &out.n_evals, &out.converged, 1, d);
  out.kernel = kernel_from_log(best.x, family, d, nugget);
  out.objective_value = mle_objective(data, trend, out.kernel);
  return out;
}

EstimationResult fit_msecv(const Dataset& data, const TrendSpec& trend, KernelFamily family,
                           const NuggetMode& nugget, const EstimationOptions& options) {
  check_estimable(data, trend);
  const Eigen::Index d = data.d();
  EstimationResult out;
  out.method = EstimationMethod::MSE_CV;

  if (!nugget.joint && nugget.value == 0.0) {
    // Amplitude-free search over theta only.
    const SearchBox full = search_box(data, false);
    SearchBox box{full.lower.tail(d), full.upper.tail(d), full.scale.tail(d)};
    auto objective = [&](const Eigen::VectorXd& v) {
      return search_value(data, trend, KernelSpec{family, 1.0, v.array().exp(), 0.0},
                          EstimationMethod::MSE_CV, options.max_condition);
    };
    const NelderMeadResult best =
        multi_start(objective, box, 0, options, &out.n_evals, &out.converged, 0, d);
    const Eigen::VectorXd theta = best.x.array().exp();
    out.kernel = KernelSpec{family, msecv_sigma2_closed_form(data, trend, family, theta), theta, 0.0};
    out.objective_value = msecv_objective(data, trend, out.kernel);
    return out;
  }

  const SearchBox box = search_box(data, nugget.joint);
  auto objective = [&](const Eigen::VectorXd& u) {
    return search_value(data, trend, kernel_from_log(u, family, d, nugget),
                        EstimationMethod::MSE_CV, options.max_condition);
  };
  const NelderMeadResult best = multi_start(objective, box, nugget.joint ? 1 : 0, options,
                                            &out.n_evals, &out.converged, 1, d);
  out.kernel = kernel_from_log(best.x, family, d, nugget);
  out.objective_value = msecv_objective(data, trend, out.kernel);
  return out;
}

EstimationResult fit(EstimationMethod method, const Dataset& data, const TrendSpec& trend,
                     KernelFamily family, const NuggetMode& nugget,
                     const EstimationOptions& options) {
  return method == EstimationMethod::MLE ? fit_mle(data, trend, family, nugget, options)
                                         : fit_msecv(data, trend, family, nugget, options);
}

BayesPosterior sample_posterior(const Dataset& data, const TrendSpec& trend, KernelFamily family,
                                double nugget, const McmcConfig& config, std::uint64_t seed,
                                const std::optional<KernelSpec>& start) {
  config.validate();
  data.validate();
  build_regression_matrix(data.X, trend);
  const Eigen::Index d = data.d();
  const SearchBox box = search_box(data, false);

  Eigen::VectorXd u0(1 + d);
  if (start) {
    if (start->dim() != d) throw ShapeError("MCMC start kernel has the wrong dimension");
    u0[0] = std::log(start->sigma2);
    u0.tail(d) = start->theta.array().log();
  } else {
    u0 = box.scale;
  }
  const NuggetMode fixed = NuggetMode::fixed(nugget);
  auto log_target = [&](const Eigen::VectorXd& u) {
    const double obj =
        guarded([&] { return mle_objective(data, trend, kernel_from_log(u, family, d, fixed)); });
    if (!std::isfinite(obj)) return -std::numeric_limits<double>::infinity();
    const Eigen::VectorXd z = u - box.scale;
    return -0.5 * obj - 0.5 * z.squaredNorm();
  };
  const McmcChain chain = random_walk_metropolis(log_target, u0, config, seed);

  BayesPosterior out;
  out.acceptance_rate = chain.acceptance_rate;
  out.acceptance_warning = chain.acceptance_rate < 0.05 || chain.acceptance_rate > 0.7;
  out.samples.reserve(chain.samples.size());
  for (const auto& u : chain.samples) out.samples.push_back(kernel_from_log(u, family, d, fixed));
  return out;
}

BayesPrediction predict_from_posterior(const BayesPosterior& posterior, const Dataset& data,
                                       const TrendSpec& trend, const Eigen::MatrixXd& X_new,
                                       double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParameter("alpha must lie in (0,1)");
  if (posterior.samples.empty()) throw InvalidParameter("posterior has no samples");
  if (X_new.cols() != data.d()) throw ShapeError("prediction inputs have the wrong dimension");
  const std::size_t S = posterior.samples.size();
  const Eigen::Index m = X_new.rows();
  Eigen::MatrixXd draws(static_cast<Eigen::Index>(S), m);
  parallel_for(S, [&](std::size_t s) {
    const FittedGp model(data, posterior.samples[s], trend);
    std::mt19937_64 rng(mix_seed(seed, s));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Prediction p = model.predict(X_new.row(i).transpose());
      draws(static_cast<Eigen::Index>(s), i) = p.mean + p.sd() * normal(rng);
    }
  });

  BayesPrediction out;
  out.lower.resize(m);
  out.upper.resize(m);
  out.mean.resize(m);
  std::vector<double> column(S);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (std::size_t s = 0; s < S; ++s) column[s] = draws(static_cast<Eigen::Index>(s), i);
    out.mean[i] = draws.col(i).mean();
    out.lower[i] = empirical_quantile(column, alpha / 2.0);
    out.upper[i] = empirical_quantile(column, 1.0 - alpha / 2.0);
  }
  out.acceptance_rate = posterior.acceptance_rate;
  out.acceptance_warning = posterior.acceptance_warning;
  return out;
}

BayesPrediction bayes_predictive(const Dataset& data, const TrendSpec& trend, KernelFamily family,
                                 double nugget, const McmcConfig& config,
                                 const Eigen::MatrixXd& X_new, double alpha, std::uint64_t seed,
                                 const std::optional<KernelSpec>& start) {
  const BayesPosterior posterior = sample_posterior(data, trend, family, nugget, config, seed, start);
  return predict_from_posterior(posterior, data, trend, X_new, alpha, mix_seed(seed, 1u << 20));
}

double bayes_loo_coverage(const BayesPosterior& posterior, const Dataset& data,
                          const TrendSpec& trend, double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParameter("alpha must lie in (0,1)");
  if (posterior.samples.empty()) throw InvalidParameter("posterior has no samples");
  const std::size_t S = posterior.samples.size();
  const Eigen::Index n = data.n();
  Eigen::MatrixXd draws(static_cast<Eigen::Index>(S), n);
  parallel_for(S, [&](std::size_t s) {
    const FittedGp model(data, posterior.samples[s], trend);
    const Eigen::VectorXd diag = kbar_diagonal(model);
    std::mt19937_64 rng(mix_seed(seed, s));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mean = data.y[i] - model.weights()[i] / diag[i];
      draws(static_cast<Eigen::Index>(s), i) = mean + normal(rng) / std::sqrt(diag[i]);
    }
  });
  std::vector<double> column(S);
  Eigen::Index inside = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < S; ++s) column[s] = draws(static_cast<Eigen::Index>(s), i);
    const double lo = empirical_quantile(column, alpha / 2.0);
    const double hi = empirical_quantile(column, 1.0 - alpha / 2.0);
    if (data.y[i] >= lo && data.y[i] <= hi) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(n);
}

double empirical_quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw InvalidParameter("quantile of an empty sample");
  if (!(prob >= 0.0 && prob <= 1.0)) throw InvalidParameter("quantile level must lie in [0,1]");
  std::sort(values.begin(), values.end());
  const double h = prob * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace rpie
