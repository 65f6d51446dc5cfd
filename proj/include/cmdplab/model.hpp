#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cmdplab/rng.hpp"

namespace cmdplab {

/// Affine map from the normalized units the algorithms see back to the units
/// an environment was specified in: original = scale * normalized.
/// A negative scale encodes a sign flip.
struct UnitTransform {
  double scale = 1.0;

  double to_original(double normalized) const { return scale * normalized; }
};

/// Finite constrained MDP. Tables are dense and row-major:
/// reward/costs indexed [s*A + a], transition indexed [(s*A + a)*S + s'].
/// Costs follow the "<= 0 is feasible" convention.
struct TabularCmdp {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<double> reward;
  std::vector<std::string> channel_names;
  std::vector<std::vector<double>> costs;
  std::vector<double> transition;
  std::vector<double> initial_distribution;
  UnitTransform reward_units;
  std::vector<UnitTransform> cost_units;

  std::size_t num_channels() const { return costs.size(); }
  std::size_t pair(std::size_t s, std::size_t a) const { return s * num_actions + a; }

  double r(std::size_t s, std::size_t a) const { return reward[pair(s, a)]; }
  double c(std::size_t channel, std::size_t s, std::size_t a) const { return costs[channel][pair(s, a)]; }
  double p(std::size_t s, std::size_t a, std::size_t next) const {
    return transition[pair(s, a) * num_states + next];
  }
  std::span<const double> row(std::size_t s, std::size_t a) const {
    return {transition.data() + pair(s, a) * num_states, num_states};
  }

  /// Throws ShapeMismatch or MalformedProblem when table sizes, ranges or
  /// stochasticity are off (rows must sum to 1 within 1e-12).
  void validate() const;
};

/// Row-stochastic action distribution per state, indexed [s*A + a].
struct StationaryPolicy {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<double> probs;

  static StationaryPolicy uniform(std::size_t num_states, std::size_t num_actions);
  static StationaryPolicy deterministic(std::size_t num_actions, const std::vector<std::size_t>& choice);

  double operator()(std::size_t s, std::size_t a) const { return probs[s * num_actions + a]; }
  std::span<const double> row(std::size_t s) const { return {probs.data() + s * num_actions, num_actions}; }

  void validate() const;
};

/// Dense S x S row-stochastic matrix, row-major.
struct MarkovChain {
  std::size_t num_states = 0;
  std::vector<double> p;

  double operator()(std::size_t s, std::size_t next) const { return p[s * num_states + next]; }
};

/// Evaluation of one stationary policy. Channel 0 is the reward, channel
/// k >= 1 is cost channel k-1. Per-state/per-pair tables use the same
/// layouts as TabularCmdp.
struct PolicyEvaluation {
  std::vector<double> gain;
  std::vector<double> stationary_distribution;
  std::vector<std::vector<double>> bias;
  std::vector<std::vector<double>> q;
  std::vector<std::vector<double>> advantage;

  double reward_gain() const { return gain.at(0); }
  double cost_gain(std::size_t channel) const { return gain.at(channel + 1); }
};

MarkovChain induced_chain(const TabularCmdp& cmdp, const StationaryPolicy& policy);

/// Irreducible (single strongly connected support graph) and aperiodic.
bool is_ergodic(const MarkovChain& chain);

/// Unique stationary distribution of an ergodic chain, residual <= 1e-10.
/// Throws NotErgodic when the chain is reducible or periodic.
std::vector<double> stationary_distribution(const MarkovChain& chain);

/// Gains, biases (normalized so d.v = 0), Q-values and advantages for every
/// channel. Throws NotErgodic / SingularSystem.
PolicyEvaluation evaluate_policy(const TabularCmdp& cmdp, const StationaryPolicy& policy);

/// Same quantities for a unichain policy: one recurrent class, possibly with
/// transient states or periodicity. Used where ergodicity cannot be assumed,
/// e.g. bias spans on weakly communicating models.
PolicyEvaluation evaluate_unichain(const TabularCmdp& cmdp, const StationaryPolicy& policy);

/// Smallest t >= 1 with max_s TV((P^pi)^t(s,.), d) <= 1/4 (TV = half L1).
/// Throws MixingCap past `cap` steps.
std::size_t mixing_time(const TabularCmdp& cmdp, const StationaryPolicy& policy, std::size_t cap = 100000);
std::size_t mixing_time(const MarkovChain& chain, std::size_t cap = 100000);

/// max_s 1 / d(s).
double hitting_time(const TabularCmdp& cmdp, const StationaryPolicy& policy);
double hitting_time(std::span<const double> stationary);

/// Max over states of the half-L1 distance between row s of P^t and d.
double worst_tv_distance(const MarkovChain& chain, std::size_t t, std::span<const double> stationary);

struct StepOutcome {
  std::size_t next_state;
  double reward;
  std::vector<double> costs;
};

/// Index of the inverse-CDF bucket of `u` in a probability row.
std::size_t inverse_cdf(std::span<const double> row, double u);

/// One transition using a single uniform draw for the next state.
StepOutcome sample_step(const TabularCmdp& cmdp, std::size_t state, std::size_t action, Rng& rng);

std::size_t sample_initial_state(const TabularCmdp& cmdp, Rng& rng);

/// Self-describing text format with 17-significant-digit decimals; reading
/// back a written model is bit-exact.
void write_cmdp(const TabularCmdp& cmdp, std::ostream& out);
TabularCmdp read_cmdp(std::istream& in);
void save_cmdp(const TabularCmdp& cmdp, const std::string& path);
TabularCmdp load_cmdp(const std::string& path);

}  // namespace cmdplab
