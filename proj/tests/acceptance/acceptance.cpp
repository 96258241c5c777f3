// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
// Exits non-zero when a criterion fails that is not listed in
// --known-failures (comma-separated criterion numbers).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oracles.hpp"
#include "rpie/bench.hpp"
#include "rpie/calibration.hpp"
#include "rpie/estimation.hpp"
#include "rpie/gp_core.hpp"
#include "rpie/loo.hpp"

using namespace rpie;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;
int unexpected_failures = 0;
std::vector<int> known_failures;

void report(int id, const std::string& title, const Outcome& o, double seconds) {
  if (!o.pass) {
    ++failures;
    if (std::find(known_failures.begin(), known_failures.end(), id) == known_failures.end()) {
      ++unexpected_failures;
    }
  }
  std::printf("%s [%d] %s (%s; %.1f s)\n", o.pass ? "PASS" : "FAIL", id, title.c_str(),
              o.detail.c_str(), seconds);
  std::fflush(stdout);
}

template <class F>
void run_criterion(int id, const std::string& title, F&& f) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = f();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(id, title, o, s);
}

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

double vec_rel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), 1e-300);
}

double mat_rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

// Random well-conditioned instance for the identity checks.
struct Instance {
  Dataset data;
  KernelSpec kernel;
  TrendSpec trend;
};

Instance draw_instance(int i, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_pick(8, 30), d_pick(1, 3);
  std::uniform_real_distribution<double> theta(0.15, 0.6), amp(0.5, 2.0);
  Instance out;
  const Eigen::Index n = n_pick(rng), d = d_pick(rng);
  out.data.X = oracle::uniform(n, d, rng);
  out.data.y = oracle::normal(n, rng) + 3.0 * out.data.X.col(0);
  out.kernel.family = static_cast<KernelFamily>(i % 4);
  out.kernel.sigma2 = amp(rng);
  out.kernel.theta = Eigen::VectorXd(d);
  for (Eigen::Index j = 0; j < d; ++j) out.kernel.theta[j] = theta(rng);
  out.kernel.nugget = (i / 4) % 2 == 0 ? 0.0 : 0.1;
  out.trend.kind = (i / 8) % 2 == 0 ? TrendKind::Ordinary : TrendKind::Universal;
  return out;
}

// Redraws until cond(K) < 1e8 so that a dense oracle is accurate to well below 1e-6.
int redraws = 0;

Instance random_instance(int i, std::mt19937_64& rng) {
  for (;;) {
    Instance inst = draw_instance(i, rng);
    const Eigen::VectorXd ev =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(oracle::covariance(inst.data.X, inst.kernel))
            .eigenvalues();
    if (ev.minCoeff() > 0.0 && ev.maxCoeff() / ev.minCoeff() < 1e8) return inst;
    ++redraws;
  }
}

Outcome criterion_loo_oracle() {
  std::mt19937_64 rng(1001);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const Instance inst = random_instance(i, rng);
    const FittedGp gp(inst.data, inst.kernel, inst.trend);
    const LooDiagnostics loo = virtual_loo(gp);
    const auto brute = oracle::brute_loo(inst.data.X, inst.data.y, inst.kernel, inst.trend.kind);
    Eigen::VectorXd mean(inst.data.n()), var(inst.data.n());
    for (Eigen::Index k = 0; k < inst.data.n(); ++k) {
      mean[k] = brute[static_cast<std::size_t>(k)].mean;
      var[k] = brute[static_cast<std::size_t>(k)].var;
    }
    worst = std::max({worst, vec_rel(loo.loo_mean, mean), vec_rel(loo.loo_var, var)});
  }
  return {worst <= 1e-6, fmt("50 datasets (%.0f ill-conditioned draws replaced), worst relative error %.2e",
                             redraws, worst)};
}

Outcome criterion_kbar_identities() {
  std::mt19937_64 rng(1002);
  double l1 = 0.0, l2 = 0.0, l4 = 0.0, min_diag = INFINITY;
  for (int i = 0; i < 50; ++i) {
    const Instance inst = random_instance(i, rng);
    const FittedGp gp(inst.data, inst.kernel, inst.trend);
    const Eigen::MatrixXd& F = gp.regression_matrix();
    const Eigen::MatrixXd Kb = compute_kbar(gp);
    const Eigen::MatrixXd K = oracle::covariance(inst.data.X, inst.kernel);
    l1 = std::max(l1, (Kb * F).norm() / (Kb.norm() * F.norm()));
    const ProjectionBasis pb = projection_basis(F);
    const Eigen::MatrixXd& W = pb.W;
    const Eigen::MatrixXd projected = W * (W.transpose() * K * W).inverse() * W.transpose();
    l2 = std::max(l2, mat_rel(Kb, projected));
    min_diag = std::min(min_diag, Kb.diagonal().minCoeff());
    const Eigen::Index n = F.rows();
    const Eigen::MatrixXd hat =
        Eigen::MatrixXd::Identity(n, n) - F * (F.transpose() * F).inverse() * F.transpose();
    l4 = std::max({l4, (pb.Pi - W * W.transpose()).cwiseAbs().maxCoeff(),
                   (pb.Pi - hat).cwiseAbs().maxCoeff()});
  }
  const bool ok = l1 <= 1e-8 && l2 <= 1e-8 && min_diag > 0.0 && l4 <= 1e-10;
  std::ostringstream s;
  s.precision(3);
  s << "|KbarF| rel " << l1 << ", projected-inverse rel " << l2 << ", min Kbar_ii " << min_diag
    << ", projector " << l4;
  return {ok, s.str()};
}

Outcome criterion_wasserstein() {
  std::mt19937_64 rng(1003);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> sd(0.1, 3.0);
  double scalar_err = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double m1 = g(rng), m2 = g(rng), s1 = sd(rng), s2 = sd(rng);
    const double w = wasserstein2_gaussians(Eigen::VectorXd::Constant(1, m1),
                                            Eigen::MatrixXd::Constant(1, 1, s1 * s1),
                                            Eigen::VectorXd::Constant(1, m2),
                                            Eigen::MatrixXd::Constant(1, 1, s2 * s2));
    scalar_err = std::max(scalar_err, std::abs(w - ((s1 - s2) * (s1 - s2) + (m1 - m2) * (m1 - m2))));
  }
  std::uniform_int_distribution<int> n_pick(1, 20);
  double sym = 0.0, ident = 0.0, tri = 0.0;
  bool nonneg = true;
  for (int t = 0; t < 50; ++t) {
    const Eigen::Index n = n_pick(rng);
    Eigen::VectorXd m[3];
    Eigen::MatrixXd K[3];
    for (int k = 0; k < 3; ++k) {
      m[k] = oracle::normal(n, rng);
      K[k] = oracle::random_spd(n, rng);
    }
    auto d = [&](int i, int j) {
      const double w = wasserstein2_gaussians(m[i], K[i], m[j], K[j]);
      nonneg = nonneg && w >= -1e-10;
      return std::sqrt(std::max(w, 0.0));
    };
    for (int i = 0; i < 3; ++i) {
      ident = std::max(ident, d(i, i));
      for (int j = 0; j < 3; ++j) {
        sym = std::max(sym, std::abs(d(i, j) - d(j, i)));
        for (int k = 0; k < 3; ++k) tri = std::max(tri, d(i, k) - d(i, j) - d(j, k));
      }
    }
  }
  const bool ok = scalar_err <= 1e-10 && nonneg && sym <= 1e-8 && ident <= 1e-6 && tri <= 1e-6;
  std::ostringstream s;
  s.precision(3);
  s << "scalar err " << scalar_err << ", asymmetry " << sym << ", d(x,x) " << ident
    << ", triangle excess " << tri << (nonneg ? "" : ", negative distance");
  return {ok, s.str()};
}

// ---- benchmark runs shared by criteria 4, 6, 7, 8 and 10 -------------------

const ExperimentName kExperiments[] = {ExperimentName::Morokoff, ExperimentName::ZhouNoNugget,
                                       ExperimentName::ZhouNugget, ExperimentName::WingWeight};

ExperimentOptions bench_options() {
  ExperimentOptions o;
  o.n = 200;
  o.d = 10;
  o.seeds = 5;
  o.alpha = 0.1;
  o.methods = {BenchMethod::MLE, BenchMethod::RpieMLE};
  o.record_timings = false;
  return o;
}

std::map<ExperimentName, ExperimentReport> run_benchmarks() {
  std::map<ExperimentName, ExperimentReport> out;
  for (ExperimentName name : kExperiments) out[name] = run_experiment(name, bench_options());
  return out;
}

const ReportRow* find_row(const ExperimentReport& r, std::uint64_t seed, const std::string& method) {
  for (const auto& row : r.rows)
    if (row.seed == seed && row.method == method) return &row;
  return nullptr;
}

Outcome criterion_rpie_exactness(const std::map<ExperimentName, ExperimentReport>& reports) {
  const ExperimentOptions o = bench_options();
  const double n_train = std::llround(o.train_fraction * static_cast<double>(o.n));
  const double tol_cp = 1.0 / n_train + 1e-6;
  int runs = 0, ok_runs = 0;
  double worst_psi = 0.0, worst_cp = 0.0;
  std::string misses;
  for (const auto& [name, rep] : reports) {
    for (const auto& row : rep.rows) {
      if (row.method != "rpie_mle") continue;
      ++runs;
      const double psi = std::max(std::abs(row.upper->psi_achieved - row.upper->a),
                                  std::abs(row.lower->psi_achieved - row.lower->a));
      const double cp = std::abs(row.metrics.loo_cp - (1.0 - o.alpha));
      worst_psi = std::max(worst_psi, psi);
      worst_cp = std::max(worst_cp, cp);
      if (psi <= 1e-6 && cp <= tol_cp) {
        ++ok_runs;
      } else {
        misses += " " + rep.experiment + "/seed" + std::to_string(row.seed) +
                  fmt("(psi %.1e, cp %.4f)", psi, row.metrics.loo_cp);
      }
    }
  }
  std::string detail = std::to_string(ok_runs) + "/" + std::to_string(runs) +
                       " runs exact; worst |psi-a| " + fmt("%.2e", worst_psi) +
                       ", worst |LOO-CP-0.9| " + fmt("%.4f vs tol %.4f", worst_cp, tol_cp);
  if (!misses.empty()) detail += ";" + misses;
  return {runs > 0 && ok_runs == runs, detail};
}

Outcome criterion_width_reduction(const ExperimentReport& rep) {
  int over = 0, good = 0;
  std::string seeds;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const ReportRow* mle = find_row(rep, s, "mle");
    const ReportRow* cal = find_row(rep, s, "rpie_mle");
    seeds += fmt(" s%.0f: ref CP %.2f MPIW %.4f", static_cast<double>(s), mle->metrics.cp,
                 mle->metrics.mpiw) +
             fmt(" -> CP %.2f MPIW %.4f;", cal->metrics.cp, cal->metrics.mpiw);
    if (mle->metrics.cp <= 0.90) continue;
    ++over;
    if (cal->metrics.mpiw <= mle->metrics.mpiw && cal->metrics.cp >= 0.86 && cal->metrics.cp <= 0.94) {
      ++good;
    }
  }
  const bool ok = over > 0 && good >= 0.8 * over;
  return {ok, std::to_string(good) + "/" + std::to_string(over) + " over-covering seeds narrowed;" + seeds};
}

Outcome criterion_zhou_nugget(const ExperimentReport& rep) {
  int good = 0;
  std::string seeds;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const ReportRow* mle = find_row(rep, s, "mle");
    const ReportRow* cal = find_row(rep, s, "rpie_mle");
    seeds += fmt(" s%.0f: %.2f -> %.2f;", static_cast<double>(s), mle->metrics.cp, cal->metrics.cp);
    if (mle->metrics.cp >= 0.97 && cal->metrics.cp >= 0.85 && cal->metrics.cp <= 0.95) ++good;
  }
  return {good >= 3, std::to_string(good) + "/5 seeds; reference CP -> calibrated CP" + seeds};
}

// Value used for a grid endpoint. An endpoint where sigma_opt has no root inside the scan range
// counts as exceeding the minimum only when the infeasible points form a contiguous run at that
// end and the nearest feasible point already exceeds the minimum by 10%.
std::optional<double> endpoint_ratio(const std::vector<LambdaTracePoint>& tr, bool right, double best,
                                     bool* infeasible) {
  const std::size_t n = tr.size();
  *infeasible = false;
  for (std::size_t k = 0; k < n; ++k) {
    const LambdaTracePoint& p = tr[right ? n - 1 - k : k];
    if (p.objective) {
      const double ratio = *p.objective / best;
      if (k == 0) return ratio;
      *infeasible = true;
      return ratio >= 1.1 ? std::optional<double>(INFINITY) : std::nullopt;
    }
  }
  return std::nullopt;
}

// Minimum of L on the grid strictly inside with both endpoints at least 10% above it.
bool interior_minimum(const RpieSolution& sol, std::string* why) {
  const auto& tr = sol.trace;
  double best = INFINITY;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    if (tr[i].objective && *tr[i].objective < best) {
      best = *tr[i].objective;
      arg = i;
    }
  }
  if (tr.empty() || !std::isfinite(best)) {
    *why = "no feasible lambda";
    return false;
  }
  bool left_gap = false, right_gap = false;
  const auto lo = endpoint_ratio(tr, false, best, &left_gap);
  const auto hi = endpoint_ratio(tr, true, best, &right_gap);
  auto show = [](const std::optional<double>& r, bool gap) {
    if (!r) return std::string("unbounded check failed");
    return gap ? std::string("no root in scan range") : fmt("%.3gx", *r);
  };
  *why = fmt("argmin %.0f of %.0f, ", static_cast<double>(arg), static_cast<double>(tr.size())) +
         "left " + show(lo, left_gap) + ", right " + show(hi, right_gap);
  return arg > 0 && arg + 1 < tr.size() && lo && hi && *lo >= 1.1 && *hi >= 1.1;
}

Outcome criterion_lambda_shape(const ExperimentReport& rep) {
  int good = 0, lower_good = 0;
  std::string seeds;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const ReportRow* cal = find_row(rep, s, "rpie_mle");
    std::string why, why_lower;
    if (interior_minimum(*cal->upper, &why)) ++good;
    if (interior_minimum(*cal->lower, &why_lower)) ++lower_good;
    seeds += " s" + std::to_string(s) + ": " + why + ";";
  }
  return {good == 5, "upper bound interior in " + std::to_string(good) + "/5 seeds (lower bound " +
                         std::to_string(lower_good) + "/5);" + seeds};
}

// ---- well-specified simulation shared by criteria 5, 9 and 10 ---------------

const KernelSpec kTruth{KernelFamily::Matern32, 1.0, Eigen::Vector3d(0.4, 0.6, 0.8), 0.05};

std::string well_specified_coverage(Outcome* out) {
  std::ostringstream csv;
  csv.precision(17);
  int good = 0;
  std::string seeds;
  for (std::uint64_t s = 0; s < 5; ++s) {
    std::mt19937_64 rng(2000 + s);
    Dataset data;
    data.X = oracle::uniform(200, 3, rng);
    data.y = simulate_gp(data.X, kTruth, 3000 + s);
    EstimationOptions opt;
    opt.seed = s;
    const auto fit = fit_mle(data, {TrendKind::Ordinary}, kTruth.family, NuggetMode::estimated(), opt);
    const double cp = loo_coverage(FittedGp(data, fit.kernel, {TrendKind::Ordinary}), 0.1);
    if (cp >= 0.84 && cp <= 0.96) ++good;
    seeds += fmt(" %.3f", cp);
    csv << "well_specified," << s << ",mle," << cp << ',' << fit.kernel.sigma2 << ','
        << fit.kernel.nugget << '\n';
  }
  *out = {good >= 4, std::to_string(good) + "/5 seeds in [0.84, 0.96]; LOO-CP" + seeds};
  return csv.str();
}

std::string bayes_concentration(Outcome* out) {
  std::ostringstream csv;
  csv.precision(17);
  int good = 0;
  std::string seeds;
  for (std::uint64_t s = 0; s < 3; ++s) {
    std::mt19937_64 rng(4000 + s);
    const Eigen::MatrixXd X = oracle::uniform(200, 3, rng);
    const Eigen::VectorXd y = simulate_gp(X, kTruth, 5000 + s);
    const Dataset train{X.topRows(150), y.head(150), {}, "y"};
    const Eigen::MatrixXd X_test = X.bottomRows(50);
    EstimationOptions opt;
    opt.seed = s;
    const auto fit = fit_mle(train, {TrendKind::Ordinary}, kTruth.family, NuggetMode::estimated(), opt);
    const FittedGp gp(train, fit.kernel, {TrendKind::Ordinary});
    double mle_width = 0.0;
    for (const Prediction& p : gp.predict_rows(X_test)) {
      const Interval iv = prediction_interval(p, 0.1);
      mle_width += (iv.upper - iv.lower) / 50.0;
    }
    McmcConfig mcmc;
    mcmc.n_samples = 2000;
    mcmc.burn_in = 500;
    const BayesPosterior post = sample_posterior(train, {TrendKind::Ordinary}, kTruth.family,
                                                 fit.kernel.nugget, mcmc, 6000 + s, fit.kernel);
    const BayesPrediction pred = predict_from_posterior(post, train, {TrendKind::Ordinary}, X_test, 0.1, 7000 + s);
    const double bayes_width = (pred.upper - pred.lower).mean();
    const double ratio = bayes_width / mle_width;
    if (std::abs(ratio - 1.0) <= 0.25) ++good;
    seeds += fmt(" %.3f (accept %.2f)", ratio, post.acceptance_rate);
    csv << "bayes," << s << ",ratio," << ratio << ',' << bayes_width << ',' << mle_width << '\n';
  }
  *out = {good == 3, std::to_string(good) + "/3 seeds within 25%; Bayes/MLE width" + seeds};
  return csv.str();
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--known-failures" && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      for (std::string item; std::getline(list, item, ',');) known_failures.push_back(std::stoi(item));
    } else {
      std::fprintf(stderr, "usage: %s [--known-failures N,M,...]\n", argv[0]);
      return 2;
    }
  }

  run_criterion(1, "virtual LOO matches brute-force refits", criterion_loo_oracle);
  run_criterion(2, "Kbar and projector identities", criterion_kbar_identities);
  run_criterion(3, "W2 closed form and metric axioms", criterion_wasserstein);

  const auto t0 = std::chrono::steady_clock::now();
  std::map<ExperimentName, ExperimentReport> reports;
  std::string bench_error;
  try {
    reports = run_benchmarks();
  } catch (const std::exception& e) {
    bench_error = e.what();
  }
  const double bench_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("# benchmark runs: %.1f s\n", bench_seconds);
  auto need_bench = [&](auto&& f) {
    return [&, f]() -> Outcome {
      if (!bench_error.empty()) return {false, "benchmark failed: " + bench_error};
      return f();
    };
  };

  run_criterion(4, "RPIE hits the training coverage on every benchmark run", need_bench([&] {
                  Outcome o = criterion_rpie_exactness(reports);
                  o.detail += fmt("; benchmark time %.0f s", bench_seconds);
                  return o;
                }));
  Outcome c5, c9;
  std::string sim_csv;
  run_criterion(5, "well-specified MLE LOO coverage near nominal", [&] {
    sim_csv += well_specified_coverage(&c5);
    return c5;
  });
  run_criterion(6, "RPIE narrows over-covering Morokoff intervals",
                need_bench([&] { return criterion_width_reduction(reports.at(ExperimentName::Morokoff)); }));
  run_criterion(7, "Zhou nugget setting: calibrated CP near nominal",
                need_bench([&] { return criterion_zhou_nugget(reports.at(ExperimentName::ZhouNugget)); }));
  run_criterion(8, "relaxation objective has an interior minimum",
                need_bench([&] { return criterion_lambda_shape(reports.at(ExperimentName::Morokoff)); }));
  run_criterion(9, "Bayesian widths concentrate around the MLE plug-in", [&] {
    sim_csv += bayes_concentration(&c9);
    return c9;
  });

  run_criterion(10, "reruns with fixed seeds give identical reports", [&]() -> Outcome {
    if (!bench_error.empty()) return {false, "benchmark failed: " + bench_error};
    const auto again = run_benchmarks();
    int identical = 0;
    for (ExperimentName name : kExperiments) {
      if (report_csv(reports.at(name).rows) == report_csv(again.at(name).rows)) ++identical;
    }
    Outcome tmp;
    std::string sim_again = well_specified_coverage(&tmp);
    sim_again += bayes_concentration(&tmp);
    const bool sim_same = sim_again == sim_csv;
    return {identical == 4 && sim_same, std::to_string(identical) + "/4 benchmark reports identical, " +
                                            (sim_same ? "simulation rows identical" : "simulation rows differ")};
  });

  std::printf("%d of 10 criteria failed, %d not listed as known failures\n", failures,
              unexpected_failures);
  return unexpected_failures == 0 ? 0 : 1;
}
