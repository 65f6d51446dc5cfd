#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "cmdplab/learner.hpp"
#include "cmdplab/lp.hpp"
#include "cmdplab/model.hpp"
#include "cmdplab/model_based.hpp"
#include "cmdplab/regret.hpp"
#include "cmdplab/rng.hpp"

namespace cmdplab {

struct FhaSchedule {
  std::size_t episode_length = 0;  // H
  std::size_t episodes = 0;        // K = floor(T / H)
  /// H came out as 1, so each episode is a single step.
  bool degenerate = false;
};

/// H = ceil((T / (S^2 A))^(1/3)), K = floor(T / H). Throws HorizonDegenerate
/// when T < S^2 A.
FhaSchedule fha_schedule(std::size_t horizon, std::size_t num_states, std::size_t num_actions);

/// Per-element confidence band around the empirical kernel:
/// |P'(s'|s,a) - p_hat(s'|s,a)| <= min(1, 4 sqrt(p_hat alpha) + 28 alpha),
/// alpha(s,a) = iota / max(1, N(s,a)), iota = ln(2 S A T / delta).
struct BernsteinSet {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<double> p_hat;  // [(s*A + a)*S + s'], uniform rows where N = 0
  std::vector<double> alpha;  // [s*A + a]
  double iota = 0.0;

  /// `triple` holds N(s,a,s') indexed like p_hat.
  static BernsteinSet from_counts(std::size_t num_states, std::size_t num_actions,
                                  std::span<const std::size_t> triple, std::size_t horizon, double delta);

  double radius(std::size_t s, std::size_t a, std::size_t next) const;
  double lower(std::size_t s, std::size_t a, std::size_t next) const;
  double upper(std::size_t s, std::size_t a, std::size_t next) const;
  /// Whether every row of `transition` lies in the band, up to `tol`.
  bool contains(std::span<const double> transition, double tol = 0.0) const;
};

/// nu(s,a,h,s') over steps h = 0..H-1, indexed [((h*S + s)*A + a)*S + s'].
struct FiniteHorizonOccupancy {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::size_t horizon = 0;
  std::size_t start_state = 0;
  std::vector<double> nu;

  double operator()(std::size_t s, std::size_t a, std::size_t h, std::size_t next) const {
    return nu[((h * num_states + s) * num_actions + a) * num_states + next];
  }
  double pair_mass(std::size_t s, std::size_t a, std::size_t h) const;
  double state_mass(std::size_t s, std::size_t h) const;
};

/// Largest violation of: start-state row, unit mass per step, flow between
/// consecutive steps and non-negativity.
double occupancy_violation(const FiniteHorizonOccupancy& occ);

/// Largest excess of the recovered kernel nu(s,a,h,.)/nu(s,a,h) over the band,
/// over (s,a,h) with mass above `dust_tol`.
double band_violation(const FiniteHorizonOccupancy& occ, const BernsteinSet& set, double dust_tol = 1e-10);

struct Opt1Result {
  FiniteHorizonOccupancy occupancy;
  double objective = 0.0;  // <nu, r>
  double cost = 0.0;       // <nu, c>
  /// Lagrange multiplier of the cost row (0 when it is slack).
  double multiplier = 0.0;
};

/// max <nu, r> over finite-horizon occupancies from `start` whose kernels
/// stay inside `set` at every step, subject to <nu, c> <= span_bound (cost
/// channel 0). Rewards and costs come from `model`; its kernel is ignored.
/// Solved through the Lagrangian: optimistic backward induction for a fixed
/// multiplier, bisection on the multiplier, and a mix of the two bracketing
/// occupancies that meets the cost row exactly. Throws Infeasible.
Opt1Result solve_opt1(const TabularCmdp& model, std::size_t start, const BernsteinSet& set, std::size_t horizon,
                      double span_bound);

/// The same program as one LP over nu(s,a,h,s'). Exact but large; kept for
/// verification on small instances.
lp::LpProblem build_opt1_lp(const TabularCmdp& model, std::size_t start, const BernsteinSet& set,
                            std::size_t horizon, double span_bound);
Opt1Result solve_opt1_lp(const TabularCmdp& model, std::size_t start, const BernsteinSet& set, std::size_t horizon,
                         double span_bound);

/// pi(a | s, h), indexed [(h*S + s)*A + a].
struct NonStationaryPolicy {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::size_t horizon = 0;
  std::vector<double> probs;

  std::span<const double> row(std::size_t s, std::size_t h) const {
    return {probs.data() + (h * num_states + s) * num_actions, num_actions};
  }
  /// The stationary policy repeated over `horizon` steps.
  static NonStationaryPolicy repeat(const StationaryPolicy& policy, std::size_t horizon);
};

/// pi(a|s,h) = nu(s,a,h) / nu(s,h), uniform where nu(s,h) <= dust_tol.
NonStationaryPolicy extract_nonstationary(const FiniteHorizonOccupancy& occ, double dust_tol = 1e-10);

/// Expected sum over H steps of channel `channel` (0 reward, k >= 1 cost k-1)
/// from `start` under the model's own kernel.
double finite_horizon_value(const TabularCmdp& model, const NonStationaryPolicy& policy, std::size_t start,
                            std::size_t channel = 0);

/// Best expected H-step reward from `start` by backward induction.
double finite_horizon_optimum(const TabularCmdp& model, std::size_t start, std::size_t horizon);

/// Span of the cost bias of the optimal constrained policy of the true model.
double cost_span_bound(const TabularCmdp& model);

struct FhaConfig {
  std::size_t horizon = 0;  // T
  double delta = 0.1;
  /// Default: cost_span_bound of the true model.
  std::optional<double> span_bound;
};

struct FhaEpisode {
  std::size_t episode = 0;
  std::size_t start_time = 0;
  std::size_t start_state = 0;
  double objective = 0.0;
  double cost = 0.0;
  double multiplier = 0.0;
  double solve_seconds = 0.0;
};

/// Finite-horizon approximation learner. Each episode of H steps starts from
/// the current state without a reset, rebuilds the Bernstein set from all
/// counts so far, solves OPT1 and plays the extracted non-stationary policy.
/// Steps after the last full episode replay the last policy from its first
/// step. Rewards and costs of `model` are known; its kernel is not used.
class FhaLearner : public Learner {
 public:
  FhaLearner(const TabularCmdp& model, FhaConfig config, Rng rng);

  std::size_t act(std::size_t state) override;
  void observe(std::size_t state, std::size_t action, std::size_t next_state) override;

  const FhaSchedule& schedule() const { return schedule_; }
  double span_bound() const { return span_bound_; }
  const BernsteinSet& confidence_set() const { return set_; }
  const std::vector<FhaEpisode>& episodes() const { return episodes_; }
  const NonStationaryPolicy& policy() const { return policy_; }

  void write_epoch_log(std::ostream& out) const override;

 private:
  void plan(std::size_t state);

  TabularCmdp signals_;
  FhaConfig config_;
  FhaSchedule schedule_;
  double span_bound_ = 0.0;
  VisitCounts counts_;
  BernsteinSet set_;
  NonStationaryPolicy policy_;
  Rng action_rng_;
  std::size_t step_in_episode_ = 0;
  std::size_t time_ = 0;
  std::vector<FhaEpisode> episodes_;
};

/// Runs the learner for T steps and returns its ledger against the true
/// long-run optimum.
RegretLedger fha_run(const TabularCmdp& env, std::size_t horizon, std::optional<double> span_bound, double delta,
                     Rng rng);

}  // namespace cmdplab
