#include <cmath>
#include <limits>

#include "cmdplab/envs.hpp"
#include "cmdplab/error.hpp"
#include "cmdplab/occupancy.hpp"
#include "doctest.h"
#include "random_cmdp.hpp"

using namespace cmdplab;

namespace {

TabularCmdp without_costs(TabularCmdp m) {
  m.costs.clear();
  m.channel_names.clear();
  m.cost_units.clear();
  return m;
}

double l1(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

// Best constrained gain over a grid of per-state action probabilities
// (two actions, so one probability per state).
double grid_optimum(const TabularCmdp& m, int points) {
  const std::size_t S = m.num_states;
  std::vector<int> idx(S, 0);
  double best = -std::numeric_limits<double>::infinity();
  StationaryPolicy pi{S, 2, std::vector<double>(2 * S)};
  while (true) {
    for (std::size_t s = 0; s < S; ++s) {
      const double q = static_cast<double>(idx[s]) / (points - 1);
      pi.probs[2 * s] = q;
      pi.probs[2 * s + 1] = 1.0 - q;
    }
    const auto ev = evaluate_policy(m, pi);
    bool feasible = true;
    for (std::size_t k = 0; k < m.num_channels(); ++k) feasible = feasible && ev.cost_gain(k) <= 0.0;
    if (feasible) best = std::max(best, ev.reward_gain());
    std::size_t s = 0;
    while (s < S && ++idx[s] == points) idx[s++] = 0;
    if (s == S) break;
  }
  return best;
}

OptimisticInputs inputs_for(const TabularCmdp& m, std::vector<double> estimate, std::vector<double> radius) {
  return {&m, std::move(estimate), std::move(radius)};
}

}  // namespace

TEST_CASE("queue optimum in original units") {
  const auto m = build_queue();
  const auto constrained = solve_true_model(m);
  CHECK(m.reward_units.to_original(constrained.objective) == doctest::Approx(4.48).epsilon(0.01 / 4.48));
  CHECK(occupancy_violation(constrained.occupancy, m.transition) <= 1e-8);

  const auto free = solve_true_model(without_costs(m));
  CHECK(m.reward_units.to_original(free.objective) == doctest::Approx(4.8).epsilon(0.01 / 4.8));
  const auto ev = evaluate_policy(m, extract_policy(free.occupancy));
  CHECK(m.cost_units[0].to_original(ev.cost_gain(0)) == doctest::Approx(-2.0).epsilon(0.005));
  CHECK(m.cost_units[1].to_original(ev.cost_gain(1)) == doctest::Approx(-0.88).epsilon(0.01));
}

TEST_CASE("extracted queue policy reproduces the program value") {
  const auto m = build_queue();
  const auto res = solve_true_model(m);
  const auto ev = evaluate_policy(m, extract_policy(res.occupancy));
  CHECK(std::abs(ev.reward_gain() - res.objective) <= 1e-6);
  for (std::size_t k = 0; k < 2; ++k) CHECK(ev.cost_gain(k) <= 1e-8);
}

TEST_CASE("identical actions leave nothing to optimize") {
  Rng rng(17);
  auto m = testgen::random_cmdp(rng, 2, 2, 0);
  for (std::size_t s = 0; s < 2; ++s) {
    m.reward[2 * s + 1] = m.reward[2 * s];
    for (std::size_t t = 0; t < 2; ++t) m.transition[(2 * s + 1) * 2 + t] = m.transition[(2 * s) * 2 + t];
  }
  const auto ev = evaluate_policy(m, StationaryPolicy::uniform(2, 2));
  CHECK(solve_true_model(m).objective == doctest::Approx(ev.reward_gain()).epsilon(1e-10));
}

TEST_CASE("program optimum matches a policy grid search") {
  Rng rng(303);
  for (int trial = 0; trial < 4; ++trial) {
    auto m = testgen::random_cmdp(rng, 3, 2, 1);
    // Make the constraint bite but stay satisfiable.
    double lo = 1.0;
    for (double c : m.costs[0]) lo = std::min(lo, c);
    for (double& c : m.costs[0]) c -= 0.5 * (lo + 0.2);
    for (double& c : m.costs[0]) c = std::clamp(c, -1.0, 1.0);
    OccupancyResult res;
    try {
      res = solve_true_model(m);
    } catch (const Error&) {
      continue;
    }
    const double coarse = grid_optimum(m, 41);
    // A grid point never beats the program; refining the grid closes the gap.
    CHECK(coarse <= res.objective + 1e-9);
    CHECK(res.objective - coarse <= 0.02);
    const double fine = grid_optimum(m, 81);
    CHECK(fine <= res.objective + 1e-9);
    CHECK(res.objective - fine <= res.objective - coarse + 1e-12);
  }
}

TEST_CASE("tightening lowers the value within the Slater bound") {
  const auto m = build_queue();
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.0, 0.01, 0.05}) {
    const double e[] = {eps};
    const double v = solve_true_model(m, e).objective;
    CHECK(v <= prev + 1e-12);
    prev = v;
  }

  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto r = testgen::random_cmdp(rng, 4, 3, 1);
    // Slater constant: largest achievable margin below zero.
    auto flipped = r;
    flipped.reward = r.costs[0];
    for (double& v : flipped.reward) v = (1.0 - v) / 2.0;
    flipped.costs.clear();
    flipped.channel_names.clear();
    flipped.cost_units.clear();
    const double delta = -(1.0 - 2.0 * solve_true_model(flipped).objective);
    if (delta <= 0.05) continue;
    const double base = solve_true_model(r).objective;
    for (double eps : {0.01, 0.5 * delta}) {
      const double e[] = {eps};
      CHECK(base - solve_true_model(r, e).objective <= 2.0 * eps / delta + 1e-6);
    }
  }
}

TEST_CASE("over-tightened program is infeasible") {
  const auto m = build_queue();
  const double e[] = {1.5};
  try {
    solve_true_model(m, e);
    FAIL("expected Infeasible");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::Infeasible);
  }
  const auto in = inputs_for(m, m.transition, std::vector<double>(m.reward.size(), 0.1));
  try {
    solve_optimistic(in, e);
    FAIL("expected Infeasible");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::Infeasible);
  }
}

TEST_CASE("zero radii reduce the optimistic program to the true model") {
  const auto m = build_queue();
  for (double eps : {0.0, 0.02}) {
    const double e[] = {eps};
    const auto in = inputs_for(m, m.transition, std::vector<double>(m.reward.size(), 0.0));
    const auto opt = solve_optimistic(in, e);
    CHECK(std::abs(opt.objective - solve_true_model(m, e).objective) <= 1e-6);
    CHECK(occupancy_violation(opt.occupancy) <= 1e-8);
  }
}

TEST_CASE("vacuous radii let optimism park on the best pair") {
  Rng rng(8);
  const auto m = testgen::random_cmdp(rng, 2, 2, 0);
  const auto in = inputs_for(m, m.transition, std::vector<double>(4, 2.0));
  const auto opt = solve_optimistic(in);
  CHECK(opt.objective == doctest::Approx(*std::max_element(m.reward.begin(), m.reward.end())).epsilon(1e-9));
  CHECK(solve_optimistic_lp(in).objective == doctest::Approx(opt.objective).epsilon(1e-9));
}

TEST_CASE("column generation agrees with the explicit extended program") {
  Rng rng(2718);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t S = 2 + trial % 3, A = 2 + trial % 2;
    const auto m = testgen::random_cmdp(rng, S, A, 1 + trial % 2);
    // Estimates drawn near the truth, radii of mixed size.
    auto truth = m;
    const auto estimate = testgen::random_cmdp(rng, S, A, 0).transition;
    std::vector<double> radius(S * A);
    for (auto& r : radius) r = rng.uniform() * 1.2;
    const auto in = inputs_for(m, estimate, radius);
    const double e[] = {0.05 * rng.uniform()};

    bool cg_infeasible = false, lp_infeasible = false;
    OptimisticResult cg, lp_res;
    try { cg = solve_optimistic(in, e); } catch (const Error& err) { cg_infeasible = err.code() == ErrorCode::Infeasible; }
    try { lp_res = solve_optimistic_lp(in, e); } catch (const Error& err) { lp_infeasible = err.code() == ErrorCode::Infeasible; }
    REQUIRE(cg_infeasible == lp_infeasible);
    if (cg_infeasible) continue;
    CHECK(std::abs(cg.objective - lp_res.objective) <= 1e-7);
    CHECK(occupancy_violation(cg.occupancy) <= 1e-8);

    // Chosen kernels stay inside their balls and satisfy the costs.
    const auto occ = cg.occupancy.marginal();
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t a = 0; a < A; ++a) {
        const auto row = cg.occupancy.kernel_row(s, a);
        if (row.empty()) continue;
        CHECK(l1(row, std::span<const double>(estimate.data() + (s * A + a) * S, S)) <= radius[s * A + a] + 1e-7);
      }
    }
    for (std::size_t k = 0; k < m.num_channels(); ++k) {
      double cost = 0.0;
      for (std::size_t sa = 0; sa < S * A; ++sa) cost += occ.mass[sa] * m.costs[k][sa];
      CHECK(cost <= -e[0] + 1e-8);
    }
  }
}

TEST_CASE("optimism dominates the truth when the truth is in the set") {
  const auto m = build_queue();
  Rng rng(44);
  // 10^4 steps of uniform exploration.
  std::vector<std::size_t> counts(m.reward.size(), 0);
  std::vector<double> visits(m.transition.size(), 0.0);
  std::size_t s = 0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t a = static_cast<std::size_t>(rng.uniform() * m.num_actions);
    const auto step = sample_step(m, s, a, rng);
    ++counts[m.pair(s, a)];
    visits[m.pair(s, a) * m.num_states + step.next_state] += 1.0;
    s = step.next_state;
  }
  std::vector<double> estimate(m.transition.size());
  for (std::size_t sa = 0; sa < counts.size(); ++sa) {
    for (std::size_t t = 0; t < m.num_states; ++t) {
      estimate[sa * m.num_states + t] =
          counts[sa] ? visits[sa * m.num_states + t] / counts[sa] : 1.0 / m.num_states;
    }
  }
  const auto radius = confidence_radii(m.num_states, m.num_actions, counts, 10000);
  for (std::size_t sa = 0; sa < counts.size(); ++sa) {
    REQUIRE(l1(std::span<const double>(m.transition.data() + sa * m.num_states, m.num_states),
               std::span<const double>(estimate.data() + sa * m.num_states, m.num_states)) <= radius[sa]);
  }
  const double e[] = {epsilon_schedule(1.0, 10000)};
  const auto opt = solve_optimistic(inputs_for(m, estimate, radius), e);
  CHECK(opt.objective >= solve_true_model(m, e).objective - 1e-9);
}

TEST_CASE("policy extraction") {
  OccupancyMeasure occ{3, 2, {0.2, 0.0, 0.0, 0.5, 0.0, 0.0}};
  occ.mass[4] = 0.3 * 0.5;
  occ.mass[5] = 0.3 * 0.5;
  const auto pi = extract_policy(occ);
  CHECK(pi(0, 0) == 1.0);
  CHECK(pi(1, 1) == 1.0);
  CHECK(pi(2, 0) == doctest::Approx(0.5));

  OccupancyMeasure empty_state{2, 3, {0.5, 0.25, 0.25, 0.0, 0.0, 0.0}};
  const auto fallback = extract_policy(empty_state);
  for (std::size_t a = 0; a < 3; ++a) CHECK(fallback(1, a) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("epsilon schedule and radii") {
  CHECK(epsilon_schedule(0.0, 123) == 0.0);
  CHECK(epsilon_schedule(1.0, 10000) == doctest::Approx(std::sqrt(std::log(10000.0) / 10000.0)));
  CHECK(std::abs(epsilon_schedule(1.0, 10000) - 0.03035) <= 1e-5);
  CHECK(epsilon_schedule(2.0, 1) == 2.0);
  for (std::size_t t = 3; t < 2000; ++t) CHECK(epsilon_schedule(1.0, t + 1) <= epsilon_schedule(1.0, t));

  const std::size_t counts[] = {0, 1, 10000, 4};
  const auto r = confidence_radii(2, 2, counts, 100);
  CHECK(r[0] == 2.0);
  CHECK(r[1] == 2.0);
  CHECK(r[2] == doctest::Approx(std::sqrt(14.0 * 2.0 * std::log(400.0) / 10000.0)));
}

TEST_CASE("elastic solves relax the cost rows by the least amount") {
  const auto m = build_queue();
  // Normalized costs are at least -1, so eps = 1.5 overshoots by exactly 0.5 per channel.
  const double e[] = {1.5};
  const auto exact = solve_true_model(m, e, CostRows::Elastic);
  CHECK(exact.slack == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(occupancy_violation(exact.occupancy, m.transition) <= 1e-8);

  const auto in = inputs_for(m, m.transition, std::vector<double>(m.reward.size(), 0.1));
  const auto opt = solve_optimistic(in, e, CostRows::Elastic);
  CHECK(opt.slack == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(opt.objective >= exact.objective - 1e-9);
}
