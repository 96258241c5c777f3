#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

namespace rpie {

struct McmcConfig {
  int n_samples = 2000;  // total chain length, burn-in included
  int burn_in = 500;
  double proposal_scale = 0.1;  // random-walk sd in log-hyperparameter space

  /// Throws InvalidParameter unless 0 <= burn_in < n_samples and scale > 0.
  void validate() const;
};

struct McmcChain {
  std::vector<Eigen::VectorXd> samples;  // retained states (after burn-in)
  std::vector<double> log_target;        // log density at each retained state
  double acceptance_rate = 0.0;          // over the whole chain
};

/// Random-walk Metropolis-Hastings with isotropic Gaussian proposals.
/// `log_target` may return -inf to reject a state outright.
McmcChain random_walk_metropolis(const std::function<double(const Eigen::VectorXd&)>& log_target,
                                 const Eigen::VectorXd& start, const McmcConfig& config,
                                 std::uint64_t seed);

}  // namespace rpie
