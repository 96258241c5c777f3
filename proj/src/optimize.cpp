#include "rpie/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "rpie/error.hpp"

namespace rpie {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct BoundedObjective {
  const std::function<double(const Eigen::VectorXd&)>& f;
  const Eigen::VectorXd& lower;
  const Eigen::VectorXd& upper;
  int evals = 0;

  Eigen::VectorXd project(const Eigen::VectorXd& x) const {
    return x.cwiseMax(lower).cwiseMin(upper);
  }

  double operator()(const Eigen::VectorXd& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : kInf;
  }
};

// One Nelder-Mead run with the dimension-adaptive coefficients of Gao & Han.
struct Run {
  Eigen::VectorXd best;
  double best_value;
  bool converged;
};

Run run_simplex(BoundedObjective& obj, const Eigen::VectorXd& start, double start_value,
                double step, int budget, double tol) {
  const Eigen::Index n = start.size();
  const double dn = static_cast<double>(n);
  const double rho = 1.0;
  const double chi = 1.0 + 2.0 / dn;
  const double gamma = 0.75 - 1.0 / (2.0 * dn);
  const double sigma = 1.0 - 1.0 / dn;

  std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(n + 1), start);
  std::vector<double> vals(static_cast<std::size_t>(n + 1), start_value);
  const int eval_limit = obj.evals + budget;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd v = start;
    v[i] += step;
    if (v[i] > obj.upper[i]) v[i] = start[i] - step;
    v = obj.project(v);
    pts[static_cast<std::size_t>(i + 1)] = v;
    vals[static_cast<std::size_t>(i + 1)] = obj(v);
  }

  std::vector<std::size_t> order(pts.size());
  bool converged = false;
  while (obj.evals < eval_limit) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t ib = order.front();
    const std::size_t iw = order.back();
    const std::size_t is = order[order.size() - 2];
    const double fb = vals[ib];
    const double fw = vals[iw];
    if (std::isfinite(fw) && fw - fb <= tol * (1.0 + std::abs(fb))) {
      converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (k != iw) centroid += pts[k];
    }
    centroid /= dn;

    const Eigen::VectorXd xr = obj.project(centroid + rho * (centroid - pts[iw]));
    const double fr = obj(xr);
    if (fr < fb) {
      const Eigen::VectorXd xe = obj.project(centroid + chi * (xr - centroid));
      const double fe = obj(xe);
      if (fe < fr) {
        pts[iw] = xe;
        vals[iw] = fe;
      } else {
        pts[iw] = xr;
        vals[iw] = fr;
      }
      continue;
    }
    if (fr < vals[is]) {
      pts[iw] = xr;
      vals[iw] = fr;
      continue;
    }
    const bool outside = fr < fw;
    const Eigen::VectorXd xc = outside ? obj.project(centroid + gamma * (xr - centroid))
                                       : obj.project(centroid + gamma * (pts[iw] - centroid));
    const double fc = obj(xc);
    if (fc < (outside ? fr : fw)) {
      pts[iw] = xc;
      vals[iw] = fc;
      continue;
    }
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (k == ib) continue;
      pts[k] = obj.project(pts[ib] + sigma * (pts[k] - pts[ib]));
      vals[k] = obj(pts[k]);
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  const auto idx = static_cast<std::size_t>(std::distance(vals.begin(), it));
  return {pts[idx], vals[idx], converged};
}

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                             const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper, const NelderMeadOptions& options) {
  if (x0.size() == 0 || lower.size() != x0.size() || upper.size() != x0.size()) {
    throw ShapeError("nelder_mead: start point and bounds must share a positive dimension");
  }
  if ((lower.array() > upper.array()).any()) {
    throw InvalidParameter("nelder_mead: lower bound exceeds upper bound");
  }
  BoundedObjective obj{objective, lower, upper};
  NelderMeadResult result;
  result.x = obj.project(x0);
  result.value = obj(result.x);

  double step = options.initial_step;
  for (int attempt = 0; attempt <= options.max_restarts; ++attempt) {
    const int budget = options.max_evals - obj.evals;
    if (budget <= static_cast<int>(x0.size()) + 1) break;
    const Run run = run_simplex(obj, result.x, result.value, step, budget, options.tolerance);
    const double improvement = result.value - run.best_value;
    if (run.best_value < result.value) {
      result.x = run.best;
      result.value = run.best_value;
    }
    result.converged = run.converged;
    if (!run.converged) break;
    // A restart that no longer moves the optimum confirms convergence.
    if (attempt > 0 && !(improvement > options.tolerance * (1.0 + std::abs(result.value)))) break;
    step *= 0.5;
  }
  result.evals = obj.evals;
  return result;
}

double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      double tolerance, int max_iter) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < max_iter && (b - a) > tolerance; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? c : d;
}

}  // namespace rpie
