#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "cmdplab/learner.hpp"
#include "cmdplab/model.hpp"
#include "cmdplab/rng.hpp"

namespace cmdplab {

/// Tabular softmax parameters theta(s,a), indexed [s*A + a].
struct SoftmaxPolicyParams {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<double> theta;

  static SoftmaxPolicyParams zeros(std::size_t num_states, std::size_t num_actions);

  StationaryPolicy policy() const;
  /// log pi(a|s), computed stably.
  double log_prob(std::size_t s, std::size_t a) const;
};

/// d/dtheta log pi(a|s): coordinate (s,a') is 1{a'=a} - pi(a'|s), zero on
/// every other state. Returned as a full S*A vector.
std::vector<double> score(const SoftmaxPolicyParams& params, std::size_t s, std::size_t a);

/// Lagrange multiplier kept in [0, 2/slater_delta].
struct DualState {
  double lambda = 0.0;
  double slater_delta = 1.0;
  double beta = 0.0;

  double cap() const { return 2.0 / slater_delta; }
  /// lambda <- clip(lambda + beta * cost_estimate, 0, 2/delta).
  void update(double cost_estimate);
};

/// Epoch length H = h_constant * t_mix * t_hit * T^xi * (log2 T)^2 (rounded
/// down, at least 1), K = floor(T/H) epochs and subtrajectory length
/// N = ceil(4 * t_mix * log2 T).
struct EpochSchedule {
  std::size_t horizon = 0;
  double xi = 0.4;
  std::size_t epoch_length = 0;
  std::size_t num_epochs = 0;
  std::size_t subtrajectory = 0;

  /// Throws ScheduleTooShort when H <= 2N or K < 1.
  static EpochSchedule make(std::size_t horizon, double t_mix, double t_hit, double xi = 0.4,
                            double h_constant = 16.0);
  void check() const;
};

/// Per-channel advantage estimate for one (s,a); channel 0 is the reward.
struct AdvantageEstimate {
  std::vector<double> value;
  std::size_t subtrajectory_count = 0;
};

/// One epoch of experience: visited states and actions, and per-step signal
/// values per channel (channel 0 reward, then costs).
struct EpochTrajectory {
  std::vector<std::size_t> states;
  std::vector<std::size_t> actions;
  std::vector<std::vector<double>> signals;

  std::size_t size() const { return states.size(); }
};

/// Subtrajectory estimator. The cursor starts at the first step; whenever it
/// sits on `s`, the next N signal values are summed into g_i and the cursor
/// jumps 2N, otherwise it moves by one. It stops once fewer than N steps
/// remain. Q = mean(g_i 1{a_i = a}) / pi(a|s), V = mean(g_i), A = Q - V.
AdvantageEstimate estimate_advantage(const EpochTrajectory& traj, std::size_t s, std::size_t a,
                                     const SoftmaxPolicyParams& params, std::size_t subtrajectory);

/// Advantage estimates for every (s,a) from one scan per state, indexed
/// [channel][s*A + a]. Same values as estimate_advantage pair by pair.
std::vector<std::vector<double>> estimate_advantages(const EpochTrajectory& traj, const SoftmaxPolicyParams& params,
                                                     std::size_t subtrajectory);

/// omega = (1/H) sum_t (A_r - lambda A_c)(s_t,a_t) * score(s_t,a_t), given
/// advantage tables indexed [channel][s*A + a].
std::vector<double> gradient_estimate(const EpochTrajectory& traj, const SoftmaxPolicyParams& params,
                                      std::span<const std::vector<double>> advantages, double lambda);

/// Mean cost of the epoch after dropping its first N steps.
double cost_estimate(const EpochTrajectory& traj, std::size_t subtrajectory, std::size_t channel = 0);

/// Exact gradient of the gain of `channel` (0 reward, k >= 1 cost k-1) for
/// tabular softmax: d(s) pi(a|s) A(s,a).
std::vector<double> exact_gradient(const TabularCmdp& cmdp, const SoftmaxPolicyParams& params, std::size_t channel);

/// Slater margin of cost channel 0: -min over stationary policies of J_c.
/// Non-positive when no strictly feasible policy exists.
double slater_margin(const TabularCmdp& cmdp);

/// Smoothness estimate: twice the largest ||grad(theta + hv) - grad(theta - hv)|| / 2h
/// of the reward gain over random theta and unit directions v.
double estimate_smoothness(const TabularCmdp& cmdp, Rng& rng, std::size_t samples = 32, double h = 1e-4);

/// Largest mixing and hitting times over a grid of softmax-reachable policies,
/// each multiplied by `safety`. Per state the grid uses the uniform row and
/// rows putting 1 - eta on one action; when the full product exceeds
/// `max_policies`, that many grid points are drawn at random instead.
struct MixingBounds {
  double t_mix = 0.0;
  double t_hit = 0.0;
};
MixingBounds mixing_bounds(const TabularCmdp& cmdp, Rng& rng, double safety = 2.0, double eta = 0.1,
                           std::size_t max_policies = 4096);

struct PolicyGradientConfig {
  std::size_t horizon = 0;
  double xi = 0.4;
  double h_constant = 16.0;
  /// Unset fields are derived from the true model at construction.
  std::optional<double> beta;         // default T^-xi
  std::optional<double> slater_delta; // default slater_margin
  std::optional<double> smoothness;   // default estimate_smoothness
  std::optional<double> alpha;        // default 1 / (4 L (1 + 2/delta))
  std::optional<MixingBounds> mixing; // default mixing_bounds
  /// Record oracle gains of every epoch's policy in the trace.
  bool record_gains = true;
};

struct PolicyGradientEpoch {
  std::size_t epoch = 0;
  std::size_t start_time = 0;
  double reward_gain = 0.0;  // oracle J_r(theta_k)
  double cost_gain = 0.0;    // oracle J_c(theta_k)
  double cost_estimate = 0.0;
  double lambda = 0.0;       // lambda_k, before the update
  double gradient_norm = 0.0;
};

/// theta += alpha * omega and the dual update, from one finished epoch.
/// Returns the trace line (oracle gains are left at zero).
PolicyGradientEpoch primal_dual_update(SoftmaxPolicyParams& params, DualState& dual, const EpochTrajectory& traj,
                                       const EpochSchedule& schedule, double alpha);

/// Rolls out one epoch of H steps from `state` (advanced in place, no
/// resets) and applies primal_dual_update.
PolicyGradientEpoch primal_dual_epoch(SoftmaxPolicyParams& params, DualState& dual, const EpochSchedule& schedule,
                                      const TabularCmdp& env, std::size_t& state, Rng& rng, double alpha);

/// Online primal-dual policy-gradient learner for one cost channel. Epochs
/// have the scheduled length; steps past the last full epoch keep the final
/// policy. The true model supplies reward and cost tables, the derived
/// constants and the oracle gains in the trace; its kernel is never used
/// for decisions.
class PolicyGradientLearner : public Learner {
 public:
  PolicyGradientLearner(const TabularCmdp& model, PolicyGradientConfig config, Rng rng);

  std::size_t act(std::size_t state) override;
  void observe(std::size_t state, std::size_t action, std::size_t next_state) override;

  const EpochSchedule& schedule() const { return schedule_; }
  const SoftmaxPolicyParams& params() const { return params_; }
  const DualState& dual() const { return dual_; }
  double alpha() const { return alpha_; }
  const std::vector<PolicyGradientEpoch>& trace() const { return trace_; }

  void write_epoch_log(std::ostream& out) const override;

 private:
  void finish_epoch();

  const TabularCmdp* model_;
  Rng action_rng_;
  SoftmaxPolicyParams params_;
  StationaryPolicy policy_;
  DualState dual_;
  EpochSchedule schedule_;
  double alpha_ = 0.0;
  bool record_gains_ = true;
  EpochTrajectory current_;
  std::size_t time_ = 0;
  std::vector<PolicyGradientEpoch> trace_;
};

}  // namespace cmdplab
