#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cmdplab/lp.hpp"
#include "cmdplab/model.hpp"

namespace cmdplab {

/// Long-run state-action frequencies nu(s,a), indexed [s*A + a].
struct OccupancyMeasure {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<double> mass;

  double operator()(std::size_t s, std::size_t a) const { return mass[s * num_actions + a]; }
};

/// Joint frequencies z(s,a,s') of (state, action, next state), indexed
/// [(s*A + a)*S + s']. Its (s,a) marginal is an occupancy measure and
/// z / marginal is the transition kernel the optimizer picked.
struct ExtendedOccupancy {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<double> z;

  OccupancyMeasure marginal() const;
  /// Row (s,a) of the chosen kernel; empty when the pair carries no mass.
  std::vector<double> kernel_row(std::size_t s, std::size_t a, double dust_tol = 1e-10) const;
};

/// Largest violation of the occupancy invariants: total mass 1,
/// non-negativity and, when `transition` is non-empty, flow balance under it.
double occupancy_violation(const OccupancyMeasure& occ, std::span<const double> transition = {});
double occupancy_violation(const ExtendedOccupancy& occ);

struct OccupancyResult {
  OccupancyMeasure occupancy;
  double objective = 0.0;
  /// Total relaxation of the cost rows; non-zero only for elastic solves.
  double slack = 0.0;
};

struct OptimisticResult {
  ExtendedOccupancy occupancy;
  double objective = 0.0;
  double slack = 0.0;
  std::size_t columns = 0;
  std::size_t rounds = 0;
};

/// Elastic solves never report Infeasible: when the cost rows cannot be met
/// they are relaxed by the smallest total amount first, then the reward is
/// maximized under that relaxation.
enum class CostRows { Strict, Elastic };

/// Per-channel tightening; an empty span means zero for every channel and a
/// single value is applied to all channels.
using Tightening = std::span<const double>;

/// Best stationary occupancy on a known model subject to
/// sum nu * c_k <= -eps_k. Throws Infeasible.
OccupancyResult solve_true_model(const TabularCmdp& cmdp, Tightening eps = {}, CostRows rows = CostRows::Strict);

/// Unknown-kernel data for the optimistic program. The model supplies rewards,
/// costs and shapes; its transition table is ignored.
struct OptimisticInputs {
  const TabularCmdp* model = nullptr;
  std::vector<double> transition_estimate;  // [(s*A + a)*S + s'], rows are distributions
  std::vector<double> radius;               // L1 radius per (s,a)
};

/// Jointly optimizes the occupancy and a kernel inside the L1 balls. Solved by
/// column generation over the vertices of each ball intersected with the
/// simplex. Throws Infeasible when no kernel in the set admits a feasible
/// occupancy.
OptimisticResult solve_optimistic(const OptimisticInputs& in, Tightening eps = {},
                                  CostRows rows = CostRows::Strict);

/// The same program written as one LP over z(s,a,s') and auxiliary
/// w(s,a,s') >= |z - p_hat * nu|. Variables are z then w. Exact but large;
/// kept for verification and small instances.
lp::LpProblem build_optimistic_lp(const OptimisticInputs& in, Tightening eps = {});
OptimisticResult solve_optimistic_lp(const OptimisticInputs& in, Tightening eps = {});

/// pi(a|s) = nu(s,a) / sum_a' nu(s,a'), uniform where the state's mass is at
/// most dust_tol.
StationaryPolicy extract_policy(const OccupancyMeasure& occ, double dust_tol = 1e-10);
StationaryPolicy extract_policy(const ExtendedOccupancy& occ, double dust_tol = 1e-10);

/// K * sqrt(ln t / t); at t <= 1 the logarithm is replaced by 1.
double epsilon_schedule(double k, std::size_t t);

/// min(2, sqrt(14 S ln(2 A t) / max(1, N(s,a)))) per pair.
std::vector<double> confidence_radii(std::size_t num_states, std::size_t num_actions,
                                     std::span<const std::size_t> counts, std::size_t t);

}  // namespace cmdplab
