#include "rpie/mcmc.hpp"

#include <cmath>
#include <random>

#include "rpie/error.hpp"

namespace rpie {

void McmcConfig::validate() const {
  if (n_samples < 1 || burn_in < 0 || burn_in >= n_samples) {
    throw InvalidParameter("MCMC needs 0 <= burn_in < n_samples");
  }
  if (!(proposal_scale > 0.0)) throw InvalidParameter("MCMC proposal scale must be positive");
}

McmcChain random_walk_metropolis(const std::function<double(const Eigen::VectorXd&)>& log_target,
                                 const Eigen::VectorXd& start, const McmcConfig& config,
                                 std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  Eigen::VectorXd current = start;
  double current_lp = log_target(current);
  if (!std::isfinite(current_lp)) {
    throw InvalidParameter("MCMC start point has zero target density");
  }

  McmcChain chain;
  chain.samples.reserve(static_cast<std::size_t>(config.n_samples - config.burn_in));
  chain.log_target.reserve(chain.samples.capacity());
  int accepted = 0;
  // The first state counts as sample 1; every further sample costs one proposal.
  for (int t = 0; t < config.n_samples; ++t) {
    if (t > 0) {
      Eigen::VectorXd proposal(current.size());
      for (Eigen::Index j = 0; j < current.size(); ++j) {
        proposal[j] = current[j] + config.proposal_scale * normal(rng);
      }
      const double lp = log_target(proposal);
      const double u = uniform(rng);
      if (std::isfinite(lp) && std::log(u) < lp - current_lp) {
        current = std::move(proposal);
        current_lp = lp;
        ++accepted;
      }
    }
    if (t >= config.burn_in) {
      chain.samples.push_back(current);
      chain.log_target.push_back(current_lp);
    }
  }
  chain.acceptance_rate =
      config.n_samples > 1 ? static_cast<double>(accepted) / (config.n_samples - 1) : 0.0;
  return chain;
}

}  // namespace rpie
