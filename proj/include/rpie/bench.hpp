#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rpie/calibration.hpp"
#include "rpie/estimation.hpp"
#include "rpie/gp_core.hpp"
#include "rpie/mcmc.hpp"

namespace rpie {

// ---- analytical test functions -------------------------------------------

/// Light-aircraft wing weight, d = 10. x4 (sweep angle) is in degrees.
/// Throws DomainError outside the input ranges of wing_weight_bounds().
double wing_weight(const Eigen::Ref<const Eigen::VectorXd>& x);
/// Lower (column 0) and upper (column 1) bounds of the wing-weight inputs.
Eigen::MatrixXd wing_weight_bounds();

/// 1/2 (1 + 1/d)^d prod x_i^(1/d) on [0,1]^d.
double morokoff_caflisch(const Eigen::Ref<const Eigen::VectorXd>& x);

/// log f(x) / (d log 10) for the two-spike Zhou function, evaluated in log space.
double zhou_log(const Eigen::Ref<const Eigen::VectorXd>& x);

enum class TestFunctionKind { WingWeight, MorokoffCaflisch, ZhouLog };

struct TestFunction {
  TestFunctionKind kind = TestFunctionKind::MorokoffCaflisch;
  double noise_sd = 0.0;

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// f(x_i) + noise_sd * N(0,1) for every row.
  Eigen::VectorXd sample(const Eigen::MatrixXd& X, std::uint64_t seed) const;
};

// ---- designs -------------------------------------------------------------

/// The 10 x 10 input correlation matrix of the correlated-design example.
Eigen::MatrixXd example_correlation_matrix();

struct DesignSpec {
  enum class Sampling { UniformBox, GaussianCopula };
  Eigen::Index n = 0;
  Eigen::Index d = 0;
  Sampling sampling = Sampling::UniformBox;
  Eigen::MatrixXd bounds;       // d x 2 (lower, upper); empty means [0,1]^d
  Eigen::MatrixXd correlation;  // d x d, copula only
  std::uint64_t seed = 0;

  /// Throws InvalidParameter / InvalidMatrix (non-PSD correlation).
  void validate() const;
};

Eigen::MatrixXd sample_design(const DesignSpec& spec);

/// One draw of a zero-mean Gaussian process with the given kernel (nugget
/// included) at the rows of X.
Eigen::VectorXd simulate_gp(const Eigen::MatrixXd& X, const KernelSpec& kernel,
                            std::uint64_t seed);

// ---- metrics -------------------------------------------------------------

struct PredictionBand {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct IntervalMetrics {
  double q2 = 0.0;
  double loo_cp = 0.0;
  double cp = 0.0;
  double mpiw = 0.0;
  double sdpiw = 0.0;
};

/// Q2 = 1 - SSE/SST around `y_bar` (the test mean when absent); CP counts
/// y in [lower, upper]; SdPIW uses divisor n_test. loo_cp is left at NaN.
IntervalMetrics compute_metrics(const Eigen::VectorXd& y_test,
                                const std::vector<PredictionBand>& predictions,
                                std::optional<double> y_bar = std::nullopt);

// ---- experiments ---------------------------------------------------------

enum class ExperimentName { WingWeight, Morokoff, ZhouNoNugget, ZhouNugget };

std::string_view to_string(ExperimentName name);
ExperimentName parse_experiment(std::string_view name);
/// Comma-separated list of valid experiment names.
std::string experiment_names();

enum class BenchMethod { MLE, MSECV, RpieMLE, RpieMSECV, Bayes };

std::string_view to_string(BenchMethod method);
BenchMethod parse_bench_method(std::string_view name);

/// Fixed ingredients of each experiment (function, design, kernel, nugget).
struct ExperimentSetup {
  ExperimentName name;
  TestFunction function;
  DesignSpec design;  // n, d and seed are filled per run
  KernelFamily family;
  NuggetMode nugget;
  TrendSpec trend;
};

ExperimentSetup experiment_setup(ExperimentName name, Eigen::Index d);

struct ExperimentOptions {
  Eigen::Index n = 200;
  Eigen::Index d = 10;
  int seeds = 5;
  std::uint64_t base_seed = 0;
  double alpha = 0.1;
  double train_fraction = 0.75;
  std::vector<BenchMethod> methods{BenchMethod::MLE, BenchMethod::MSECV, BenchMethod::RpieMLE,
                                   BenchMethod::RpieMSECV};
  EstimationOptions estimation;
  RpieConfig rpie;
  McmcConfig mcmc;
  bool record_timings = true;  // false writes 0 so reports are bit-reproducible
};

struct ReportRow {
  std::string experiment;
  std::uint64_t seed = 0;
  std::string method;
  IntervalMetrics metrics;
  double fit_seconds = 0.0;
  double calibrate_seconds = 0.0;
  // Fitted hyperparameters of the (reference) model.
  KernelSpec kernel;
  // RPIE only.
  std::optional<RpieSolution> upper;
  std::optional<RpieSolution> lower;
  long crossed = 0;
  // Bayes only.
  std::optional<double> acceptance_rate;
};

struct ExperimentReport {
  std::string experiment;
  std::vector<ReportRow> rows;  // ordered by (seed, method)
};

ExperimentReport run_experiment(ExperimentName name, const ExperimentOptions& options);

/// Report CSV: experiment, seed, method, q2, loo_cp, cp, mpiw, sdpiw,
/// fit_seconds, calibrate_seconds.
void write_report_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path);
std::string report_csv(const std::vector<ReportRow>& rows);

/// Per-method means and standard deviations across seeds, plus per-run
/// calibration details.
void write_summary_json(const std::vector<ReportRow>& rows, const std::filesystem::path& path);

/// One lambda / sigma2_opt / L(lambda) CSV per calibrated side; returns the
/// written paths.
std::vector<std::filesystem::path> write_lambda_traces(const std::vector<ReportRow>& rows,
                                                       const std::filesystem::path& dir);
void write_lambda_trace(const RpieSolution& solution, const std::filesystem::path& path);

}  // namespace rpie
