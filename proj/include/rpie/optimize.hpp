#pragma once

#include <functional>

#include <Eigen/Core>

namespace rpie {

struct NelderMeadOptions {
  int max_evals = 2000;
  double tolerance = 1e-8;   // on the spread of simplex values, relative to 1 + |f_best|
  double initial_step = 0.5; // simplex edge, in the units of x
  int max_restarts = 2;      // restart from the best vertex after convergence
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evals = 0;
  bool converged = false;
};

/// Box-constrained Nelder-Mead. Trial points are projected onto [lower, upper];
/// non-finite objective values are treated as +infinity.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                             const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper, const NelderMeadOptions& options = {});

/// Golden-section search for a minimum of f on [lo, hi].
double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      double tolerance, int max_iter = 100);

}  // namespace rpie
