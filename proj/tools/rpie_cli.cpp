// rpie: command-line front end for fitting, calibrating and evaluating
// kriging prediction intervals.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include "rpie/bench.hpp"
#include "rpie/calibration.hpp"
#include "rpie/csv.hpp"
#include "rpie/error.hpp"
#include "rpie/estimation.hpp"
#include "rpie/gp_core.hpp"
#include "rpie/loo.hpp"
#include "rpie/model_io.hpp"
#include "rpie/normal.hpp"
#include "rpie/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

std::uint64_t fnv1a(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::uint64_t h = 1469598103934665603ULL;
  char c;
  while (f.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

json file_entry(const fs::path& path) {
  std::ostringstream hash;
  hash << std::hex << fnv1a(path);
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  return {{"path", path.string()}, {"bytes", ec ? 0 : size}, {"fnv1a64", hash.str()}};
}

struct Manifest {
  std::string subcommand;
  std::vector<std::string> args;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  std::uint64_t seed = 0;

  void write(const fs::path& path) const {
    json j;
    j["tool"] = "rpie";
    j["version"] = kVersion;
    j["subcommand"] = subcommand;
    j["args"] = args;
    j["seed"] = seed;
    j["inputs"] = json::array();
    for (const auto& p : inputs) j["inputs"].push_back(file_entry(p));
    j["outputs"] = json::array();
    for (const auto& p : outputs) j["outputs"].push_back(file_entry(p));
    j["versions"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                   std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"cli11", CLI11_VERSION},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    std::ofstream f(path, std::ios::binary);
    if (!f) throw rpie::DataError("cannot write " + path.string());
    f << j.dump(2) << '\n';
  }
};

fs::path manifest_path(const std::string& override_path, const fs::path& output) {
  if (!override_path.empty()) return override_path;
  const fs::path dir = output.parent_path();
  return (dir.empty() ? fs::path(".") : dir) / "manifest.json";
}

void ensure_parent(const fs::path& path) {
  const fs::path dir = path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
}

// ---- fit -----------------------------------------------------------------

struct FitArgs {
  std::string data, target = "y", method = "mle", kernel = "m52", trend = "ordinary";
  std::string nugget = "fixed:0", out = "model.json", manifest;
  std::uint64_t seed = 0;
  int starts = 5, max_evals = 2000;
  bool no_standardize = false;
  int mcmc_samples = 2000, burn_in = 500;
  double proposal_scale = 0.1;
};

void run_fit(const FitArgs& a, Manifest& manifest) {
  const rpie::Dataset raw = rpie::read_dataset(a.data, a.target);
  const rpie::Standardization st = a.no_standardize ? rpie::Standardization::identity(raw.d())
                                                    : rpie::Standardization::fit(raw);
  rpie::StoredModel model;
  model.data = st.apply(raw);
  model.standardization = st;
  model.trend.kind = rpie::parse_trend(a.trend);
  const rpie::KernelFamily family = rpie::parse_kernel_family(a.kernel);
  const rpie::NuggetMode nugget = rpie::NuggetMode::parse(a.nugget);
  rpie::EstimationOptions opts;
  opts.seed = a.seed;
  opts.starts = a.starts;
  opts.max_evals = a.max_evals;

  const bool bayes = a.method == "bayes";
  const rpie::EstimationMethod method =
      bayes ? rpie::EstimationMethod::MLE : rpie::parse_estimation_method(a.method);
  model.estimation = rpie::fit(method, model.data, model.trend, family, nugget, opts);
  model.type = rpie::ModelType::Gp;
  if (bayes) {
    model.type = rpie::ModelType::Bayes;
    model.mcmc.n_samples = a.mcmc_samples;
    model.mcmc.burn_in = a.burn_in;
    model.mcmc.proposal_scale = a.proposal_scale;
    model.seed = a.seed;
    model.posterior =
        rpie::sample_posterior(model.data, model.trend, family, model.estimation.kernel.nugget,
                               model.mcmc, a.seed, model.estimation.kernel);
    if (model.posterior->acceptance_warning) {
      std::cerr << "warning: MH acceptance rate " << model.posterior->acceptance_rate
                << " is outside [0.05, 0.7]\n";
    }
  }
  const fs::path out(a.out);
  ensure_parent(out);
  rpie::save_model(model, out);
  manifest.inputs.push_back(a.data);
  manifest.outputs.push_back(out);
  manifest.seed = a.seed;

  const auto& k = model.estimation.kernel;
  json summary = {{"method", a.method},
                  {"kernel", std::string(rpie::to_string(k.family))},
                  {"sigma2", k.sigma2},
                  {"theta", std::vector<double>(k.theta.data(), k.theta.data() + k.dim())},
                  {"nugget", k.nugget},
                  {"objective_value", model.estimation.objective_value},
                  {"n_evals", model.estimation.n_evals},
                  {"converged", model.estimation.converged},
                  {"standardized", st.enabled}};
  if (model.posterior) summary["acceptance_rate"] = model.posterior->acceptance_rate;
  std::cout << summary.dump(2) << '\n';
}

// ---- calibrate -------------------------------------------------------------

struct CalibrateArgs {
  std::string reference, out = "calibrated.json", trace_prefix, lambda_grid = "0.01,100,60";
  std::string manifest;
  double alpha = 0.1, delta = 0.01;
};

void run_calibrate(const CalibrateArgs& a, Manifest& manifest) {
  const rpie::StoredModel ref = rpie::load_model(a.reference);
  if (ref.type != rpie::ModelType::Gp) {
    throw rpie::InvalidParameter("--reference must be a fitted GP model (type \"gp\")");
  }
  rpie::RpieConfig config;
  config.delta.delta = a.delta;
  config.lambda_grid = rpie::LogGrid::parse(a.lambda_grid);
  const rpie::CalibratedIntervalModel cal =
      rpie::calibrate(ref.data, ref.trend, ref.estimation, a.alpha, config);

  rpie::StoredModel out = ref;
  out.type = rpie::ModelType::Calibrated;
  out.alpha = a.alpha;
  out.upper = cal.upper;
  out.lower = cal.lower;
  const fs::path out_path(a.out);
  ensure_parent(out_path);
  rpie::save_model(out, out_path);

  const std::string prefix =
      a.trace_prefix.empty() ? (out_path.parent_path() / "lambda_trace").string() : a.trace_prefix;
  const fs::path up = prefix + "_upper.csv", lo = prefix + "_lower.csv";
  ensure_parent(up);
  rpie::write_lambda_trace(cal.upper, up);
  rpie::write_lambda_trace(cal.lower, lo);
  manifest.inputs.push_back(a.reference);
  manifest.outputs = {out_path, up, lo};

  auto side = [](const rpie::RpieSolution& s) {
    return json{{"a", s.a},
                {"lambda_star", s.lambda_star},
                {"sigma2_opt", s.sigma2_opt},
                {"wasserstein2", s.wasserstein2},
                {"psi_achieved", s.psi_achieved}};
  };
  std::cout << json{{"alpha", a.alpha},
                    {"upper", side(cal.upper)},
                    {"lower", side(cal.lower)},
                    {"loo_coverage", rpie::calibrated_loo_coverage(cal)}}
                   .dump(2)
            << '\n';
}

// ---- predict ---------------------------------------------------------------

struct PredictArgs {
  std::string model, input, out = "predictions.csv", manifest;
  double alpha = 0.1;
};

void run_predict(const PredictArgs& a, const CLI::Option* alpha_opt, Manifest& manifest) {
  const rpie::StoredModel m = rpie::load_model(a.model);
  const rpie::CsvTable table = rpie::read_csv(a.input);
  const Eigen::MatrixXd X_raw = rpie::select_inputs(table, m.data.columns);
  if (X_raw.cols() != m.data.d()) {
    throw rpie::ShapeError("input has " + std::to_string(X_raw.cols()) +
                           " columns, model expects " + std::to_string(m.data.d()));
  }
  const Eigen::MatrixXd X = m.standardization.transform_inputs(X_raw);
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd out(n, 4);

  double alpha = a.alpha;
  if (m.type == rpie::ModelType::Calibrated) {
    if (alpha_opt->count() > 0 && a.alpha != m.alpha) {
      std::cerr << "note: calibrated model was built for alpha = " << m.alpha
                << "; --alpha is ignored\n";
    }
    alpha = m.alpha;
    const auto preds = rpie::predict_calibrated(rpie::calibrated_model(m), X);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& p = preds[static_cast<std::size_t>(i)];
      out.row(i) << p.mean, p.lower, p.upper, p.crossed ? 1.0 : 0.0;
    }
  } else if (m.type == rpie::ModelType::Bayes) {
    const auto pred = rpie::predict_from_posterior(*m.posterior, m.data, m.trend, X, alpha, m.seed);
    for (Eigen::Index i = 0; i < n; ++i) out.row(i) << pred.mean[i], pred.lower[i], pred.upper[i], 0.0;
  } else {
    const rpie::FittedGp gp(m.data, m.estimation.kernel, m.trend);
    for (Eigen::Index i = 0; i < n; ++i) {
      const rpie::Prediction p = gp.predict(X.row(i).transpose());
      const rpie::Interval iv = rpie::prediction_interval(p, alpha);
      out.row(i) << p.mean, iv.lower, iv.upper, 0.0;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) out(i, c) = m.standardization.response_to_original(out(i, c));
  }
  const fs::path out_path(a.out);
  ensure_parent(out_path);
  rpie::write_csv(out_path, {"mean", "lower", "upper", "crossed"}, out);
  manifest.inputs = {a.model, a.input};
  manifest.outputs = {out_path};
  manifest.seed = m.seed;

  // With responses present, report the empirical coverage of the intervals.
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (table.header[j] != m.data.target) continue;
    Eigen::Index inside = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double y = table.values(i, static_cast<Eigen::Index>(j));
      if (y >= out(i, 1) && y <= out(i, 2)) ++inside;
    }
    std::cout << "coverage of '" << m.data.target << "': " << inside << "/" << n << " = "
              << static_cast<double>(inside) / static_cast<double>(n) << " (nominal "
              << 1.0 - alpha << ")\n";
  }
  std::cout << "wrote " << n << " predictions to " << out_path.string() << '\n';
}

// ---- diagnose ---------------------------------------------------------------

struct DiagnoseArgs {
  std::string model, out = "diagnostics.csv", manifest;
  double alpha = 0.1;
};

void run_diagnose(const DiagnoseArgs& a, Manifest& manifest) {
  const rpie::StoredModel m = rpie::load_model(a.model);
  const rpie::FittedGp gp(m.data, m.estimation.kernel, m.trend);
  const rpie::LooDiagnostics loo = rpie::virtual_loo(gp);
  const auto& st = m.standardization;
  const Eigen::Index n = gp.n();
  Eigen::MatrixXd out(n, 5);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row(i) << static_cast<double>(i), st.response_to_original(m.data.y[i]),
        st.response_to_original(loo.loo_mean[i]), st.y_scale * std::sqrt(loo.loo_var[i]),
        loo.std_resid[i];
  }
  const fs::path out_path(a.out);
  ensure_parent(out_path);
  rpie::write_csv(out_path, {"index", "y", "loo_mean", "loo_sd", "std_resid"}, out);
  manifest.inputs = {a.model};
  manifest.outputs = {out_path};

  const double a_hi = 1.0 - a.alpha / 2.0;
  const rpie::HypothesisReport h_hi =
      rpie::check_hypotheses(m.data, m.trend, m.estimation.kernel, a_hi);
  const rpie::HypothesisReport h_lo =
      rpie::check_hypotheses(m.data, m.trend, m.estimation.kernel, a.alpha / 2.0);
  json report = {{"n", n},
                 {"loo_mse", rpie::loo_mse(gp) * st.y_scale * st.y_scale},
                 {"loo_coverage", rpie::loo_coverage(loo.std_resid, a.alpha)},
                 {"nominal", 1.0 - a.alpha},
                 {"psi_upper", rpie::quasi_gaussian(loo.std_resid, a_hi)},
                 {"psi_lower", rpie::quasi_gaussian(loo.std_resid, a.alpha / 2.0)},
                 {"H1", h_hi.h1},
                 {"H2", h_hi.h2},
                 {"H3_upper", {{"holds", h_hi.h3}, {"k_eps", h_hi.k_eps}, {"n_a", h_hi.n_a}}},
                 {"H3_lower", {{"holds", h_lo.h3}, {"k_eps", h_lo.k_eps}, {"n_a", h_lo.n_a}}}};
  if (m.type == rpie::ModelType::Calibrated) {
    report["calibrated_loo_coverage"] = rpie::calibrated_loo_coverage(rpie::calibrated_model(m));
  }
  std::cout << report.dump(2) << '\n';
}

// ---- benchmark --------------------------------------------------------------

struct BenchArgs {
  std::string name, out_dir = "bench_out", methods = "mle,msecv,rpie_mle,rpie_msecv", manifest;
  long n = 200, d = 10;
  int seeds = 5, starts = 5;
  std::uint64_t seed = 0;
  double alpha = 0.1;
  bool no_timings = false;
};

void run_benchmark(const BenchArgs& a, Manifest& manifest) {
  const rpie::ExperimentName name = rpie::parse_experiment(a.name);
  rpie::ExperimentOptions opts;
  opts.n = a.n;
  opts.d = a.d;
  opts.seeds = a.seeds;
  opts.base_seed = a.seed;
  opts.alpha = a.alpha;
  opts.estimation.starts = a.starts;
  opts.record_timings = !a.no_timings;
  opts.methods.clear();
  std::stringstream list(a.methods);
  std::string item;
  while (std::getline(list, item, ',')) {
    if (!item.empty()) opts.methods.push_back(rpie::parse_bench_method(item));
  }
  const rpie::ExperimentReport report = rpie::run_experiment(name, opts);

  const fs::path dir(a.out_dir);
  fs::create_directories(dir / "traces");
  const fs::path csv = dir / "report.csv", summary = dir / "summary.json";
  rpie::write_report_csv(report.rows, csv);
  rpie::write_summary_json(report.rows, summary);
  manifest.outputs = {csv, summary};
  for (const auto& p : rpie::write_lambda_traces(report.rows, dir / "traces")) {
    manifest.outputs.push_back(p);
  }
  manifest.seed = a.seed;
  std::cout << rpie::report_csv(report.rows);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const rpie::InvalidParameter*>(&e)) return kUsage;
  if (dynamic_cast<const rpie::DataError*>(&e) || dynamic_cast<const rpie::ShapeError*>(&e)) {
    return kData;
  }
  if (dynamic_cast<const rpie::Error*>(&e)) return kNumerical;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kData;
  return kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kriging prediction intervals with robust calibration (RPIE).\n"
               "RPIE_THREADS caps the number of worker threads."};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Estimate GP hyperparameters from a CSV dataset");
  fit->add_option("--data", fa.data, "Training CSV with a header row")->required()->check(CLI::ExistingFile);
  fit->add_option("--target", fa.target, "Response column")->capture_default_str();
  fit->add_option("--method", fa.method, "Estimator")
      ->check(CLI::IsMember({"mle", "msecv", "bayes"}))
      ->capture_default_str();
  fit->add_option("--kernel", fa.kernel, "Correlation family")
      ->check(CLI::IsMember({"exp", "m32", "m52", "sqexp"}))
      ->capture_default_str();
  fit->add_option("--trend", fa.trend, "Trend basis")
      ->check(CLI::IsMember({"simple", "ordinary", "universal"}))
      ->capture_default_str();
  fit->add_option("--nugget", fa.nugget,
                  "fixed:<v> (variance in model units) or joint (estimated)")
      ->capture_default_str();
  fit->add_option("--seed", fa.seed, "Seed for optimizer starts and MCMC")->capture_default_str();
  fit->add_option("--starts", fa.starts, "Optimizer starts")->check(CLI::PositiveNumber)->capture_default_str();
  fit->add_option("--max-evals", fa.max_evals, "Objective evaluations per start")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  fit->add_flag("--no-standardize", fa.no_standardize, "Fit on raw units instead of z-scores");
  fit->add_option("--mcmc-samples", fa.mcmc_samples, "Bayes: chain length incl. burn-in")->capture_default_str();
  fit->add_option("--burn-in", fa.burn_in, "Bayes: discarded initial states")->capture_default_str();
  fit->add_option("--proposal-scale", fa.proposal_scale, "Bayes: random-walk sd in log space")
      ->capture_default_str();
  fit->add_option("--out", fa.out, "Model JSON to write")->capture_default_str();
  fit->add_option("--manifest", fa.manifest, "Manifest path (default: manifest.json next to --out)");

  CalibrateArgs ca;
  auto* cal = app.add_subcommand("calibrate", "Calibrate two-sided prediction intervals (RPIE)");
  cal->add_option("--reference", ca.reference, "Fitted GP model JSON")->required()->check(CLI::ExistingFile);
  cal->add_option("--alpha", ca.alpha, "Miscoverage level; intervals target 1 - alpha")
      ->check(CLI::Range(1e-6, 1.0 - 1e-6))
      ->capture_default_str();
  cal->add_option("--delta", ca.delta, "Ramp width of the smoothed proportion")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cal->add_option("--lambda-grid", ca.lambda_grid, "Length-scale multipliers lo,hi,count")
      ->capture_default_str();
  cal->add_option("--out", ca.out, "Calibrated model JSON to write")->capture_default_str();
  cal->add_option("--trace-prefix", ca.trace_prefix,
                  "Prefix for <prefix>_upper.csv / <prefix>_lower.csv lambda traces");
  cal->add_option("--manifest", ca.manifest, "Manifest path (default: manifest.json next to --out)");

  PredictArgs pa;
  auto* pred = app.add_subcommand("predict", "Predict means and intervals for new inputs");
  pred->add_option("--model", pa.model, "Model JSON (gp, calibrated or bayes)")->required()->check(CLI::ExistingFile);
  pred->add_option("--input", pa.input, "CSV with the model's input columns")->required()->check(CLI::ExistingFile);
  auto* alpha_opt = pred->add_option("--alpha", pa.alpha, "Miscoverage level (gp and bayes models)")
                        ->check(CLI::Range(1e-6, 1.0 - 1e-6))
                        ->capture_default_str();
  pred->add_option("--out", pa.out, "Predictions CSV (mean, lower, upper, crossed)")->capture_default_str();
  pred->add_option("--manifest", pa.manifest, "Manifest path (default: manifest.json next to --out)");

  DiagnoseArgs da;
  auto* diag = app.add_subcommand("diagnose", "Virtual leave-one-out diagnostics and hypothesis checks");
  diag->add_option("--model", da.model, "Model JSON")->required()->check(CLI::ExistingFile);
  diag->add_option("--alpha", da.alpha, "Miscoverage level for the LOO coverage")
      ->check(CLI::Range(1e-6, 1.0 - 1e-6))
      ->capture_default_str();
  diag->add_option("--out", da.out, "Diagnostics CSV")->capture_default_str();
  diag->add_option("--manifest", da.manifest, "Manifest path (default: manifest.json next to --out)");

  BenchArgs ba;
  auto* bench = app.add_subcommand("benchmark", "Run a synthetic benchmark experiment");
  bench->add_option("name", ba.name, "Experiment: " + rpie::experiment_names())->required();
  bench->add_option("--n", ba.n, "Design size (75% train / 25% test)")->check(CLI::Range(4L, 100000L))->capture_default_str();
  bench->add_option("--d", ba.d, "Input dimension (wingweight requires 10)")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--seeds", ba.seeds, "Number of replications")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--seed", ba.seed, "Base seed")->capture_default_str();
  bench->add_option("--alpha", ba.alpha, "Miscoverage level")->check(CLI::Range(1e-6, 1.0 - 1e-6))->capture_default_str();
  bench->add_option("--methods", ba.methods, "Comma list of mle,msecv,rpie_mle,rpie_msecv,bayes")
      ->capture_default_str();
  bench->add_option("--starts", ba.starts, "Optimizer starts")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_flag("--no-timings", ba.no_timings, "Write 0 for timing columns (bit-reproducible reports)");
  bench->add_option("--out-dir", ba.out_dir, "Output directory")->capture_default_str();
  bench->add_option("--manifest", ba.manifest, "Manifest path (default: <out-dir>/manifest.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  Manifest manifest;
  manifest.args.assign(argv + 1, argv + argc);
  try {
    fs::path mpath;
    if (*fit) {
      manifest.subcommand = "fit";
      run_fit(fa, manifest);
      mpath = manifest_path(fa.manifest, fa.out);
    } else if (*cal) {
      manifest.subcommand = "calibrate";
      run_calibrate(ca, manifest);
      mpath = manifest_path(ca.manifest, ca.out);
    } else if (*pred) {
      manifest.subcommand = "predict";
      run_predict(pa, alpha_opt, manifest);
      mpath = manifest_path(pa.manifest, pa.out);
    } else if (*diag) {
      manifest.subcommand = "diagnose";
      run_diagnose(da, manifest);
      mpath = manifest_path(da.manifest, da.out);
    } else if (*bench) {
      manifest.subcommand = "benchmark";
      run_benchmark(ba, manifest);
      mpath = ba.manifest.empty() ? fs::path(ba.out_dir) / "manifest.json" : fs::path(ba.manifest);
    }
    ensure_parent(mpath);
    manifest.write(mpath);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kOk;
}
