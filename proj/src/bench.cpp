#include "rpie/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "rpie/error.hpp"
#include "rpie/loo.hpp"
#include "rpie/normal.hpp"
#include "rpie/parallel.hpp"

namespace rpie {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void check_unit_box(const Eigen::Ref<const Eigen::VectorXd>& x, const char* name) {
  if (x.size() == 0) throw ShapeError(std::string(name) + " needs at least one input");
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(x[i] >= 0.0 && x[i] <= 1.0)) {
      throw DomainError(std::string(name) + " input " + std::to_string(i) +
                        " lies outside [0,1]");
    }
  }
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

// ---- test functions -------------------------------------------------------

Eigen::MatrixXd wing_weight_bounds() {
  Eigen::MatrixXd b(10, 2);
  b << 150, 200, 220, 300, 6, 10, -10, 10, 16, 45, 0.5, 1, 0.08, 0.18, 2.5, 6, 1700, 2500,
      0.025, 0.08;
  return b;
}

double wing_weight(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != 10) throw ShapeError("wing weight takes 10 inputs");
  const Eigen::MatrixXd b = wing_weight_bounds();
  for (Eigen::Index j = 0; j < 10; ++j) {
    if (!(x[j] >= b(j, 0) && x[j] <= b(j, 1))) {
      throw DomainError("wing weight input x" + std::to_string(j + 1) + " = " +
                        std::to_string(x[j]) + " is outside its range");
    }
  }
  const double c = std::cos(x[3] * kPi / 180.0);
  return 0.036 * std::pow(x[0], 0.758) * std::pow(x[1], 0.0035) *
             std::pow(x[2] / (c * c), 0.6) * std::pow(x[4], 0.006) * std::pow(x[5], 0.04) *
             std::pow(100.0 * x[6] / c, -0.3) * std::pow(x[7] * x[8], 0.49) +
         x[0] * x[9];
}

double morokoff_caflisch(const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_unit_box(x, "Morokoff-Caflisch");
  const double d = static_cast<double>(x.size());
  double prod = 1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) prod *= std::pow(x[i], 1.0 / d);
  return 0.5 * std::pow(1.0 + 1.0 / d, d) * prod;
}

double zhou_log(const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_unit_box(x, "Zhou");
  const double d = static_cast<double>(x.size());
  const double a = -0.5 * (10.0 * (x.array() - 1.0 / 3.0)).square().sum();
  const double b = -0.5 * (10.0 * (x.array() - 2.0 / 3.0)).square().sum();
  const double m = std::max(a, b);
  const double log_sum = m + std::log(std::exp(a - m) + std::exp(b - m));
  const double log_f = d * std::log(10.0) - std::log(2.0) - 0.5 * d * std::log(2.0 * kPi) + log_sum;
  return log_f / (d * std::log(10.0));
}

double TestFunction::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  switch (kind) {
    case TestFunctionKind::WingWeight: return wing_weight(x);
    case TestFunctionKind::MorokoffCaflisch: return morokoff_caflisch(x);
    case TestFunctionKind::ZhouLog: return zhou_log(x);
  }
  throw InvalidParameter("unknown test function");
}

Eigen::VectorXd TestFunction::sample(const Eigen::MatrixXd& X, std::uint64_t seed) const {
  if (!(noise_sd >= 0.0)) throw InvalidParameter("noise sd must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    y[i] = (*this)(X.row(i).transpose());
    if (noise_sd > 0.0) y[i] += noise_sd * normal(rng);
  }
  return y;
}

// ---- designs --------------------------------------------------------------

Eigen::MatrixXd example_correlation_matrix() {
  Eigen::MatrixXd C(10, 10);
  // clang-format off
  C <<  1.00, 0.90, 0.00, 0.00, 0.00, 0.05,-0.30, 0.00, 0.00, 0.00,
        0.90, 1.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.10, 0.00, 0.00,
        0.00, 0.00, 1.00, 0.00,-0.30, 0.10, 0.40, 0.00, 0.05, 0.00,
        0.00, 0.00, 0.00, 1.00, 0.40, 0.00, 0.00,-0.35, 0.00, 0.00,
        0.00, 0.00,-0.30, 0.40, 1.00, 0.00, 0.00, 0.00, 0.10, 0.00,
        0.05, 0.00, 0.10, 0.00, 0.00, 1.00, 0.00, 0.00, 0.00, 0.00,
       -0.30, 0.00, 0.40, 0.00, 0.00, 0.00, 1.00, 0.00, 0.00,-0.30,
        0.00, 0.10, 0.00,-0.35, 0.00, 0.00, 0.00, 1.00, 0.00, 0.00,
        0.00, 0.00, 0.05, 0.00, 0.10, 0.00, 0.00, 0.00, 1.00, 0.00,
        0.00, 0.00, 0.00, 0.00, 0.00, 0.00,-0.30, 0.00, 0.00, 1.00;
  // clang-format on
  return C;
}

void DesignSpec::validate() const {
  if (n < 1 || d < 1) throw InvalidParameter("design needs n >= 1 and d >= 1");
  if (bounds.size() > 0) {
    if (bounds.rows() != d || bounds.cols() != 2) throw ShapeError("bounds must be d x 2");
    if (!(bounds.col(0).array() < bounds.col(1).array()).all()) {
      throw InvalidParameter("each lower bound must be below its upper bound");
    }
  }
  if (sampling == Sampling::GaussianCopula) {
    if (correlation.rows() != d || correlation.cols() != d) {
      throw ShapeError("copula correlation must be d x d");
    }
    if ((correlation - correlation.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw InvalidMatrix("copula correlation is not symmetric");
    }
    if ((correlation.diagonal().array() - 1.0).abs().maxCoeff() > 1e-12) {
      throw InvalidMatrix("copula correlation needs a unit diagonal");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(correlation, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10) {
      throw InvalidMatrix("copula correlation is not positive semi-definite");
    }
  }
}

Eigen::MatrixXd sample_design(const DesignSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  Eigen::MatrixXd X(spec.n, spec.d);
  if (spec.sampling == DesignSpec::Sampling::UniformBox) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index i = 0; i < spec.n; ++i)
      for (Eigen::Index j = 0; j < spec.d; ++j) X(i, j) = unit(rng);
  } else {
    Eigen::MatrixXd root;
    Eigen::LLT<Eigen::MatrixXd> llt(spec.correlation);
    if (llt.info() == Eigen::Success) {
      root = llt.matrixL();
    } else {
      root = symmetric_sqrt(spec.correlation);
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd w(spec.d);
    for (Eigen::Index i = 0; i < spec.n; ++i) {
      for (Eigen::Index j = 0; j < spec.d; ++j) w[j] = normal(rng);
      const Eigen::VectorXd z = root * w;
      for (Eigen::Index j = 0; j < spec.d; ++j) X(i, j) = normal_cdf(z[j]);
    }
  }
  if (spec.bounds.size() > 0) {
    for (Eigen::Index j = 0; j < spec.d; ++j) {
      const double lo = spec.bounds(j, 0), hi = spec.bounds(j, 1);
      X.col(j) = (lo + (hi - lo) * X.col(j).array()).matrix();
    }
  }
  return X;
}

Eigen::VectorXd simulate_gp(const Eigen::MatrixXd& X, const KernelSpec& kernel,
                            std::uint64_t seed) {
  const Eigen::MatrixXd K = build_covariance(X, kernel);
  const CovarianceFactor factor = factorize_covariance(K, kernel.sigma2);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(X.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  return factor.llt.matrixL() * z;
}

// ---- metrics --------------------------------------------------------------

IntervalMetrics compute_metrics(const Eigen::VectorXd& y_test,
                                const std::vector<PredictionBand>& predictions,
                                std::optional<double> y_bar) {
  const auto n = static_cast<std::size_t>(y_test.size());
  if (n == 0) throw DataError("metrics need at least one test point");
  if (predictions.size() != n) throw ShapeError("one prediction per test response is required");
  const double mean = y_bar ? *y_bar : y_test.mean();
  double sse = 0.0, sst = 0.0, width_sum = 0.0;
  std::size_t inside = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = y_test[static_cast<Eigen::Index>(i)];
    const PredictionBand& p = predictions[i];
    sse += (y - p.mean) * (y - p.mean);
    sst += (y - mean) * (y - mean);
    if (y >= p.lower && y <= p.upper) ++inside;
    width_sum += p.upper - p.lower;
  }
  IntervalMetrics m;
  m.q2 = sst > 0.0 ? 1.0 - sse / sst : (sse == 0.0 ? 1.0 : std::nan(""));
  m.loo_cp = std::nan("");
  m.cp = static_cast<double>(inside) / static_cast<double>(n);
  m.mpiw = width_sum / static_cast<double>(n);
  double var = 0.0;
  for (const auto& p : predictions) {
    const double w = p.upper - p.lower - m.mpiw;
    var += w * w;
  }
  m.sdpiw = std::sqrt(var / static_cast<double>(n));
  return m;
}

// ---- experiments ----------------------------------------------------------

std::string_view to_string(ExperimentName name) {
  switch (name) {
    case ExperimentName::WingWeight: return "wingweight";
    case ExperimentName::Morokoff: return "morokoff";
    case ExperimentName::ZhouNoNugget: return "zhou-nonugget";
    case ExperimentName::ZhouNugget: return "zhou-nugget";
  }
  return "?";
}

std::string experiment_names() { return "wingweight, morokoff, zhou-nonugget, zhou-nugget"; }

ExperimentName parse_experiment(std::string_view name) {
  for (auto e : {ExperimentName::WingWeight, ExperimentName::Morokoff,
                 ExperimentName::ZhouNoNugget, ExperimentName::ZhouNugget}) {
    if (name == to_string(e)) return e;
  }
  throw InvalidParameter("unknown experiment '" + std::string(name) +
                         "'; valid experiments: " + experiment_names());
}

std::string_view to_string(BenchMethod method) {
  switch (method) {
    case BenchMethod::MLE: return "mle";
    case BenchMethod::MSECV: return "msecv";
    case BenchMethod::RpieMLE: return "rpie_mle";
    case BenchMethod::RpieMSECV: return "rpie_msecv";
    case BenchMethod::Bayes: return "bayes";
  }
  return "?";
}

BenchMethod parse_bench_method(std::string_view name) {
  for (auto m : {BenchMethod::MLE, BenchMethod::MSECV, BenchMethod::RpieMLE,
                 BenchMethod::RpieMSECV, BenchMethod::Bayes}) {
    if (name == to_string(m)) return m;
  }
  throw InvalidParameter("unknown method '" + std::string(name) +
                         "'; valid methods: mle, msecv, rpie_mle, rpie_msecv, bayes");
}

ExperimentSetup experiment_setup(ExperimentName name, Eigen::Index d) {
  ExperimentSetup s;
  s.name = name;
  s.trend = TrendSpec{TrendKind::Ordinary};
  s.design.d = d;
  switch (name) {
    case ExperimentName::WingWeight:
      if (d != 10) throw InvalidParameter("the wing weight experiment has d = 10");
      s.function = {TestFunctionKind::WingWeight, 5.0};
      s.design.bounds = wing_weight_bounds();
      s.family = KernelFamily::Matern32;
      s.nugget = NuggetMode::estimated();
      break;
    case ExperimentName::Morokoff: {
      s.function = {TestFunctionKind::MorokoffCaflisch, 1e-2};
      s.design.sampling = DesignSpec::Sampling::GaussianCopula;
      Eigen::MatrixXd C = Eigen::MatrixXd::Identity(d, d);
      const Eigen::Index k = std::min<Eigen::Index>(d, 10);
      C.topLeftCorner(k, k) = example_correlation_matrix().topLeftCorner(k, k);
      s.design.correlation = C;
      s.family = KernelFamily::Matern52;
      s.nugget = NuggetMode::estimated();
      break;
    }
    case ExperimentName::ZhouNoNugget:
      s.function = {TestFunctionKind::ZhouLog, 0.0};
      s.family = KernelFamily::Exponential;
      s.nugget = NuggetMode::fixed(0.0);
      break;
    case ExperimentName::ZhouNugget:
      s.function = {TestFunctionKind::ZhouLog, 0.0};
      s.family = KernelFamily::Matern32;
      s.nugget = NuggetMode::fixed(1.71e-2);
      break;
  }
  return s;
}

namespace {

bool wants(const ExperimentOptions& o, BenchMethod m) {
  return std::find(o.methods.begin(), o.methods.end(), m) != o.methods.end();
}

std::vector<PredictionBand> plug_in_bands(const FittedGp& model, const Eigen::MatrixXd& X,
                                          double alpha) {
  std::vector<PredictionBand> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (const Prediction& p : model.predict_rows(X)) {
    const Interval iv = prediction_interval(p, alpha);
    out.push_back({p.mean, iv.lower, iv.upper});
  }
  return out;
}

ReportRow plug_in_row(const ExperimentSetup& setup, std::uint64_t seed, BenchMethod method,
                      const Dataset& train, const Dataset& test, const EstimationResult& fit,
                      double fit_seconds, double alpha) {
  ReportRow row;
  row.experiment = std::string(to_string(setup.name));
  row.seed = seed;
  row.method = std::string(to_string(method));
  row.kernel = fit.kernel;
  const FittedGp model(train, fit.kernel, setup.trend);
  row.metrics = compute_metrics(test.y, plug_in_bands(model, test.X, alpha));
  row.metrics.loo_cp = loo_coverage(virtual_loo(model).std_resid, alpha);
  row.fit_seconds = fit_seconds;
  return row;
}

ReportRow rpie_row(const ExperimentSetup& setup, std::uint64_t seed, BenchMethod method,
                   const Dataset& train, const Dataset& test, const EstimationResult& reference,
                   double fit_seconds, const ExperimentOptions& options) {
  ReportRow row;
  row.experiment = std::string(to_string(setup.name));
  row.seed = seed;
  row.method = std::string(to_string(method));
  row.kernel = reference.kernel;
  const auto start = std::chrono::steady_clock::now();
  const CalibratedIntervalModel model =
      calibrate(train, setup.trend, reference, options.alpha, options.rpie);
  row.calibrate_seconds = seconds_since(start);
  row.fit_seconds = fit_seconds;
  std::vector<PredictionBand> bands;
  for (const CalibratedPrediction& p : predict_calibrated(model, test.X)) {
    bands.push_back({p.mean, p.lower, p.upper});
    if (p.crossed) ++row.crossed;
  }
  row.metrics = compute_metrics(test.y, bands);
  row.metrics.loo_cp = calibrated_loo_coverage(model);
  row.upper = model.upper;
  row.lower = model.lower;
  return row;
}

std::vector<ReportRow> run_seed(const ExperimentSetup& base, std::uint64_t seed,
                                const ExperimentOptions& options) {
  ExperimentSetup setup = base;
  const std::uint64_t stream = options.base_seed + seed;
  setup.design.n = options.n;
  setup.design.seed = mix(stream, 1);
  const Eigen::MatrixXd X = sample_design(setup.design);
  const Eigen::VectorXd y = setup.function.sample(X, mix(stream, 2));

  Dataset all{X, y, {}, "y"};
  std::vector<Eigen::Index> order(static_cast<std::size_t>(options.n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(mix(stream, 3));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const auto n_train = static_cast<std::size_t>(
      std::llround(options.train_fraction * static_cast<double>(options.n)));
  if (n_train < 2 || n_train >= order.size()) {
    throw InvalidParameter("train fraction leaves an empty training or test set");
  }
  const Dataset train =
      subset(all, std::vector<Eigen::Index>(order.begin(), order.begin() + n_train));
  const Dataset test =
      subset(all, std::vector<Eigen::Index>(order.begin() + n_train, order.end()));

  EstimationOptions est = options.estimation;
  est.seed = mix(stream, 4);
  auto time_fit = [&](auto&& f, double* seconds) {
    const auto start = std::chrono::steady_clock::now();
    auto result = f();
    *seconds = seconds_since(start);
    return result;
  };

  std::vector<ReportRow> rows;
  const bool need_mle = setup.nugget.joint || wants(options, BenchMethod::MLE) ||
                        wants(options, BenchMethod::RpieMLE) || wants(options, BenchMethod::Bayes);
  std::optional<EstimationResult> mle;
  double mle_seconds = 0.0;
  if (need_mle) {
    mle = time_fit([&] { return fit_mle(train, setup.trend, setup.family, setup.nugget, est); },
                   &mle_seconds);
  }
  // The nugget is settled once (by MLE when estimated) and shared by every method.
  const double nugget = mle ? mle->kernel.nugget : setup.nugget.value;

  std::optional<EstimationResult> msecv;
  double msecv_seconds = 0.0;
  if (wants(options, BenchMethod::MSECV) || wants(options, BenchMethod::RpieMSECV)) {
    msecv = time_fit(
        [&] {
          return fit_msecv(train, setup.trend, setup.family, NuggetMode::fixed(nugget), est);
        },
        &msecv_seconds);
  }

  for (BenchMethod m : options.methods) {
    switch (m) {
      case BenchMethod::MLE:
        rows.push_back(plug_in_row(setup, seed, m, train, test, *mle, mle_seconds, options.alpha));
        break;
      case BenchMethod::MSECV:
        rows.push_back(
            plug_in_row(setup, seed, m, train, test, *msecv, msecv_seconds, options.alpha));
        break;
      case BenchMethod::RpieMLE:
        rows.push_back(rpie_row(setup, seed, m, train, test, *mle, mle_seconds, options));
        break;
      case BenchMethod::RpieMSECV:
        rows.push_back(rpie_row(setup, seed, m, train, test, *msecv, msecv_seconds, options));
        break;
      case BenchMethod::Bayes: {
        ReportRow row;
        row.experiment = std::string(to_string(setup.name));
        row.seed = seed;
        row.method = "bayes";
        row.kernel = mle->kernel;
        const auto start = std::chrono::steady_clock::now();
        const BayesPosterior post = sample_posterior(train, setup.trend, setup.family, nugget,
                                                     options.mcmc, mix(stream, 5), mle->kernel);
        const BayesPrediction pred =
            predict_from_posterior(post, train, setup.trend, test.X, options.alpha, mix(stream, 6));
        std::vector<PredictionBand> bands;
        for (Eigen::Index i = 0; i < test.X.rows(); ++i) {
          bands.push_back({pred.mean[i], pred.lower[i], pred.upper[i]});
        }
        row.metrics = compute_metrics(test.y, bands);
        row.metrics.loo_cp =
            bayes_loo_coverage(post, train, setup.trend, options.alpha, mix(stream, 7));
        row.fit_seconds = seconds_since(start);
        row.acceptance_rate = post.acceptance_rate;
        rows.push_back(std::move(row));
        break;
      }
    }
  }
  if (!options.record_timings) {
    for (auto& r : rows) r.fit_seconds = r.calibrate_seconds = 0.0;
  }
  return rows;
}

}  // namespace

ExperimentReport run_experiment(ExperimentName name, const ExperimentOptions& options) {
  if (options.seeds < 1) throw InvalidParameter("need at least one seed");
  if (options.n < 4) throw InvalidParameter("need at least four observations");
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw InvalidParameter("alpha must lie in (0,1)");
  if (options.methods.empty()) throw InvalidParameter("no methods requested");
  const ExperimentSetup setup = experiment_setup(name, options.d);

  std::vector<std::vector<ReportRow>> per_seed(static_cast<std::size_t>(options.seeds));
  parallel_for(per_seed.size(), [&](std::size_t s) {
    per_seed[s] = run_seed(setup, static_cast<std::uint64_t>(s), options);
  });
  ExperimentReport report;
  report.experiment = std::string(to_string(name));
  for (auto& rows : per_seed)
    for (auto& r : rows) report.rows.push_back(std::move(r));
  return report;
}

// ---- report writers -------------------------------------------------------

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "experiment,seed,method,q2,loo_cp,cp,mpiw,sdpiw,fit_seconds,calibrate_seconds\n";
  for (const auto& r : rows) {
    out << r.experiment << ',' << r.seed << ',' << r.method << ',' << format_double(r.metrics.q2)
        << ',' << format_double(r.metrics.loo_cp) << ',' << format_double(r.metrics.cp) << ','
        << format_double(r.metrics.mpiw) << ',' << format_double(r.metrics.sdpiw) << ','
        << format_double(r.fit_seconds) << ',' << format_double(r.calibrate_seconds) << '\n';
  }
  return out.str();
}

void write_report_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << report_csv(rows);
}

namespace {

nlohmann::json optional_number(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

nlohmann::json solution_json(const RpieSolution& s) {
  return {{"a", s.a},
          {"lambda_star", s.lambda_star},
          {"sigma2_opt", s.sigma2_opt},
          {"wasserstein2", s.wasserstein2},
          {"psi_achieved", s.psi_achieved}};
}

}  // namespace

void write_summary_json(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
  using nlohmann::json;
  std::map<std::pair<std::string, std::string>, std::vector<const ReportRow*>> groups;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.experiment, r.method);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  json summary = json::array();
  for (const auto& key : order) {
    const auto& g = groups[key];
    json stats = json::object();
    auto add = [&](const char* name, auto get) {
      double sum = 0.0, sq = 0.0;
      for (const ReportRow* r : g) sum += get(*r);
      const double mean = sum / static_cast<double>(g.size());
      for (const ReportRow* r : g) sq += (get(*r) - mean) * (get(*r) - mean);
      const double sd = g.size() > 1 ? std::sqrt(sq / static_cast<double>(g.size() - 1)) : 0.0;
      stats[name] = {{"mean", optional_number(mean)}, {"sd", optional_number(sd)}};
    };
    add("q2", [](const ReportRow& r) { return r.metrics.q2; });
    add("loo_cp", [](const ReportRow& r) { return r.metrics.loo_cp; });
    add("cp", [](const ReportRow& r) { return r.metrics.cp; });
    add("mpiw", [](const ReportRow& r) { return r.metrics.mpiw; });
    add("sdpiw", [](const ReportRow& r) { return r.metrics.sdpiw; });
    add("fit_seconds", [](const ReportRow& r) { return r.fit_seconds; });
    add("calibrate_seconds", [](const ReportRow& r) { return r.calibrate_seconds; });
    json runs = json::array();
    for (const ReportRow* r : g) {
      json run = {{"seed", r->seed},
                  {"sigma2", r->kernel.sigma2},
                  {"theta", std::vector<double>(r->kernel.theta.data(),
                                                r->kernel.theta.data() + r->kernel.theta.size())},
                  {"nugget", r->kernel.nugget}};
      if (r->upper) run["upper"] = solution_json(*r->upper);
      if (r->lower) run["lower"] = solution_json(*r->lower);
      if (r->upper) run["crossed"] = r->crossed;
      if (r->acceptance_rate) run["acceptance_rate"] = *r->acceptance_rate;
      runs.push_back(run);
    }
    summary.push_back({{"experiment", key.first},
                       {"method", key.second},
                       {"seeds", g.size()},
                       {"metrics", stats},
                       {"runs", runs}});
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << summary.dump(2) << '\n';
}

void write_lambda_trace(const RpieSolution& solution, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << "lambda,sigma2_opt,objective\n";
  for (const auto& p : solution.trace) {
    f << format_double(p.lambda) << ',' << (p.sigma2 ? format_double(*p.sigma2) : "") << ','
      << (p.objective ? format_double(*p.objective) : "") << '\n';
  }
}

std::vector<std::filesystem::path> write_lambda_traces(const std::vector<ReportRow>& rows,
                                                       const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& r : rows) {
    for (const auto* side : {&r.upper, &r.lower}) {
      if (!*side) continue;
      const std::string tag = side == &r.upper ? "upper" : "lower";
      const auto path = dir / ("trace_" + r.experiment + "_seed" + std::to_string(r.seed) + "_" +
                               r.method + "_" + tag + ".csv");
      write_lambda_trace(**side, path);
      out.push_back(path);
    }
  }
  return out;
}

}  // namespace rpie
