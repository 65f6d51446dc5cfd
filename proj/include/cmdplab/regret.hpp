#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "cmdplab/learner.hpp"
#include "cmdplab/model.hpp"
#include "cmdplab/rng.hpp"

namespace cmdplab {

/// One downsampled row of a ledger.
struct TracePoint {
  std::size_t t = 0;
  double regret = 0.0;
  std::vector<double> violation;
  double reward_rate = 0.0;
  std::vector<double> cost_rate;
};

/// Running regret R(t) = t J* - sum of rewards and violation
/// C_k(t) = max(0, sum of channel-k costs), in the model's normalized units.
class RegretLedger {
 public:
  /// A trace row is kept every `interval` steps (0 keeps none).
  RegretLedger(double oracle_gain, std::size_t num_channels, std::size_t interval = 0);

  void record(double reward, std::span<const double> costs);
  /// Appends a trace row for the current step unless one exists already.
  void mark();

  std::size_t t() const { return t_; }
  double oracle_gain() const { return oracle_gain_; }
  double cum_reward() const { return cum_reward_; }
  const std::vector<double>& cum_cost() const { return cum_cost_; }
  double regret() const { return static_cast<double>(t_) * oracle_gain_ - cum_reward_; }
  double violation(std::size_t channel) const;
  const std::vector<TracePoint>& trace() const { return trace_; }

  /// Header `t,R,C_1..C_m,reward_rate,cost_rate_1..cost_rate_m`, then one
  /// row per trace point with 17 significant digits.
  void write_csv(std::ostream& out) const;

 private:
  double oracle_gain_;
  std::size_t interval_;
  std::size_t t_ = 0;
  double cum_reward_ = 0.0;
  std::vector<double> cum_cost_;
  std::vector<TracePoint> trace_;
};

/// ceil(T / 1000), at least 1.
std::size_t trace_interval(std::size_t horizon);

/// Plays `learner` on `env` for `steps` steps from the initial distribution
/// and returns the ledger, with a final trace row at t = steps.
RegretLedger play(const TabularCmdp& env, Learner& learner, std::size_t steps, Rng rng, double oracle_gain,
                  std::size_t interval);

}  // namespace cmdplab
