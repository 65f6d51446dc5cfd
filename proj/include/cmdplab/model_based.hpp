#pragma once

#include <cstddef>
#include <vector>

#include "cmdplab/learner.hpp"
#include "cmdplab/model.hpp"
#include "cmdplab/rng.hpp"

namespace cmdplab {

/// Visit statistics of an epoch-based learner. `current` counts visits in the
/// running epoch, `start` the visits before it, `previous_start` the visits
/// before the previous epoch, and `triple` every observed (s,a,s').
struct VisitCounts {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<std::size_t> current;
  std::vector<std::size_t> start;
  std::vector<std::size_t> previous_start;
  std::vector<std::size_t> triple;

  VisitCounts() = default;
  VisitCounts(std::size_t states, std::size_t actions);

  void record(std::size_t s, std::size_t a, std::size_t next);
  /// Folds the running epoch into the totals.
  void close_epoch();
  /// Total visits of (s,a) so far.
  std::size_t total(std::size_t sa) const { return start[sa] + current[sa]; }
  bool reconciled() const;
};

enum class EpochMode { Doubling, Linear };

/// Doubling: some pair's in-epoch visits reached max(1, visits before the
/// epoch). Linear: reached max(1, visits before the previous epoch).
bool epoch_trigger(const VisitCounts& counts, EpochMode mode);

/// Ratio N(s,a,s') / N(s,a) over all recorded visits (at an epoch boundary
/// these are exactly the completed epochs); rows without data are uniform.
std::vector<double> empirical_transition(const VisitCounts& counts);

/// Samples every row from Dirichlet(N(s,a,.) + 1).
std::vector<double> posterior_transition(const VisitCounts& counts, Rng& rng);

/// Upper bound on doubling-mode epochs after T steps: 1 + 2SA + SA log2(T/SA).
double doubling_epoch_bound(std::size_t num_states, std::size_t num_actions, std::size_t steps);

enum class Planner { Optimistic, Posterior };

struct ModelBasedConfig {
  Planner planner = Planner::Optimistic;
  EpochMode mode = EpochMode::Linear;
  double k = 1.0;
  double dust_tol = 1e-10;
  /// Multiplies the L1 confidence radii before clipping at 2.
  double radius_scale = 1.0;
};

/// Snapshot of the running epoch.
struct EpochState {
  std::size_t index = 0;
  std::size_t start_time = 0;
  StationaryPolicy policy;
  double epsilon = 0.0;
};

/// Epoch-based conservative learner: optimistic planning over L1 confidence
/// sets, or posterior sampling of the kernel. Rewards and costs are known to
/// the learner; the transition table of `model` is never read.
class ModelBasedLearner : public Learner {
 public:
  ModelBasedLearner(const TabularCmdp& model, ModelBasedConfig config, Rng rng);

  std::size_t act(std::size_t state) override;
  void observe(std::size_t state, std::size_t action, std::size_t next_state) override;

  const EpochState& epoch() const { return epoch_; }
  const VisitCounts& counts() const { return counts_; }
  std::size_t time() const { return time_; }

 private:
  void begin_epoch();
  void plan();

  TabularCmdp signals_;
  ModelBasedConfig config_;
  Rng action_rng_;
  Rng model_rng_;
  VisitCounts counts_;
  EpochState epoch_;
  std::size_t time_ = 0;
};

}  // namespace cmdplab
