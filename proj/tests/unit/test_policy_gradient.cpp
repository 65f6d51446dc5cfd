#include <cmath>
#include <numeric>
#include <sstream>

#include "cmdplab/envs.hpp"
#include "cmdplab/error.hpp"
#include "cmdplab/occupancy.hpp"
#include "cmdplab/policy_gradient.hpp"
#include "doctest.h"
#include "drive.hpp"
#include "random_cmdp.hpp"

using namespace cmdplab;

namespace {

SoftmaxPolicyParams random_params(Rng& rng, std::size_t S, std::size_t A, double spread = 1.0) {
  auto p = SoftmaxPolicyParams::zeros(S, A);
  for (double& x : p.theta) x = spread * (2.0 * rng.uniform() - 1.0);
  return p;
}

double lagrangian_gain(const TabularCmdp& m, const SoftmaxPolicyParams& p, double lambda) {
  const auto eval = evaluate_policy(m, p.policy());
  return eval.reward_gain() - lambda * eval.cost_gain(0);
}

}  // namespace

TEST_CASE("softmax policy rows and score") {
  auto p = SoftmaxPolicyParams::zeros(3, 2);
  const auto s = score(p, 1, 0);
  CHECK(s[2] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s[3] == doctest::Approx(-0.5).epsilon(1e-15));
  for (std::size_t j : {0, 1, 4, 5}) CHECK(s[j] == 0.0);

  p.theta[2] = 60.0;
  CHECK(std::abs(score(p, 1, 0)[2]) < 1e-12);

  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    auto q = random_params(rng, 3, 4, 3.0);
    const auto pi = q.policy();
    for (std::size_t st = 0; st < 3; ++st) {
      CHECK(std::accumulate(pi.row(st).begin(), pi.row(st).end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    }
    const std::size_t st = rep % 3, a = rep % 4;
    const auto sc = score(q, st, a);
    double row_sum = 0.0;
    for (std::size_t b = 0; b < 4; ++b) row_sum += sc[st * 4 + b];
    CHECK(std::abs(row_sum) < 1e-12);
    // Central differences of log pi(a|s) in every coordinate.
    const double h = 1e-5;
    for (std::size_t j = 0; j < q.theta.size(); ++j) {
      auto up = q, down = q;
      up.theta[j] += h;
      down.theta[j] -= h;
      const double fd = (up.log_prob(st, a) - down.log_prob(st, a)) / (2.0 * h);
      CHECK(std::abs(fd - sc[j]) < 1e-6);
    }
  }
}

TEST_CASE("dual update projects onto [0, 2/delta]") {
  DualState d{0.5, 1.0, 0.1};
  d.update(-0.2);
  CHECK(d.lambda == doctest::Approx(0.48).epsilon(1e-15));
  d.update(100.0);
  CHECK(d.lambda == 2.0);
  d.update(-1000.0);
  CHECK(d.lambda == 0.0);
  DualState frozen{0.0, 0.5, 0.0};
  frozen.update(0.9);
  CHECK(frozen.lambda == 0.0);
}

TEST_CASE("epoch schedule arithmetic and short horizons") {
  const auto s = EpochSchedule::make(1 << 20, 2.0, 8.0, 0.4, 0.01);
  const double T = static_cast<double>(1 << 20);
  CHECK(s.epoch_length == static_cast<std::size_t>(std::floor(0.01 * 16.0 * std::pow(T, 0.4) * 400.0)));
  CHECK(s.subtrajectory == 160);
  CHECK(s.num_epochs == (1u << 20) / s.epoch_length);
  CHECK(s.epoch_length > 2 * s.subtrajectory);

  // With the leading constant 16 a single epoch outgrows any desk-scale horizon.
  try {
    EpochSchedule::make(1000000, 2.0, 8.0);
    FAIL("expected ScheduleTooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ScheduleTooShort);
  }
  try {
    EpochSchedule::make(10000, 2.0, 8.0, 0.4, 1e-4);
    FAIL("expected ScheduleTooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ScheduleTooShort);
  }
}

TEST_CASE("advantage estimator edge cases") {
  // One state, reward always 1: every g_i is N. With one action Q = V
  // exactly; with two, Q(a) = N * share(a) / pi(a), so the advantages are
  // pi-weighted to zero and vanish only in expectation.
  auto single = testgen::chain_cmdp(1, {1.0});
  single.reward = {1.0};
  single.channel_names = {"c"};
  single.costs = {{0.0}};
  single.cost_units = {{1.0}};
  Rng rng(1);
  const auto one = SoftmaxPolicyParams::zeros(1, 1);
  const auto only = estimate_advantage(testgen::rollout(single, one.policy(), 1000, rng), 0, 0, one, 7);
  CHECK(only.subtrajectory_count == 71);  // cursor 0, 14, ..., 980
  CHECK(only.value[0] == 0.0);

  single.num_actions = 2;
  single.reward = {1.0, 1.0};
  single.costs = {{0.0, 0.0}};
  single.transition = {1.0, 1.0};
  const auto p = SoftmaxPolicyParams::zeros(1, 2);
  const auto traj = testgen::rollout(single, p.policy(), 1000, rng);
  std::size_t first = 0, starts = 0;
  for (std::size_t tau = 0; tau + 7 <= 1000; tau += 14, ++starts) first += traj.actions[tau] == 0;
  const auto a0 = estimate_advantage(traj, 0, 0, p, 7);
  const auto a1 = estimate_advantage(traj, 0, 1, p, 7);
  const double share = static_cast<double>(first) / static_cast<double>(starts);
  CHECK(a0.value[0] == doctest::Approx(7.0 * (share / 0.5 - 1.0)).epsilon(1e-12));
  CHECK(std::abs(0.5 * a0.value[0] + 0.5 * a1.value[0]) < 1e-12);

  EpochTrajectory never{{0, 0, 0, 0}, {1, 0, 1, 0}, {{1, 1, 1, 1}, {0, 0, 0, 0}}};
  const auto two = SoftmaxPolicyParams::zeros(2, 2);
  const auto est = estimate_advantage(never, 1, 0, two, 2);
  CHECK(est.subtrajectory_count == 0);
  CHECK(est.value[0] == 0.0);
  CHECK(est.value[1] == 0.0);
}

TEST_CASE("hand-computed subtrajectory scan") {
  // N = 2. Cursor: t=0 (s=0, a=1) g=1+0, jump to 4; t=4 (s=1) skip; t=5 (s=0,
  // a=0) g=0+1, jump to 9 and stop. M=2, V=1, pi=0.5:
  // Q(0,1) = (1/2)/0.5 = 1 and Q(0,0) = 1, so both advantages are 0.
  EpochTrajectory t{{0, 1, 0, 0, 1, 0, 1, 0, 0, 1},
                    {1, 0, 0, 1, 1, 0, 1, 1, 0, 0},
                    {{1, 0, 1, 1, 0, 0, 1, 0, 0, 1}, {0, 0, 0, 0, 0, 0, 0, 0, 0, 0}}};
  const auto p = SoftmaxPolicyParams::zeros(2, 2);
  const auto a1 = estimate_advantage(t, 0, 1, p, 2);
  const auto a0 = estimate_advantage(t, 0, 0, p, 2);
  CHECK(a1.subtrajectory_count == 2);
  CHECK(std::abs(a1.value[0]) < 1e-15);
  CHECK(std::abs(a0.value[0]) < 1e-15);
}

TEST_CASE("batched advantages match the per-pair estimator") {
  Rng rng(8);
  const auto m = testgen::random_cmdp(rng, 4, 3);
  const auto p = random_params(rng, 4, 3);
  const auto traj = testgen::rollout(m, p.policy(), 5000, rng);
  const auto all = estimate_advantages(traj, p, 9);
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t a = 0; a < 3; ++a) {
      const auto one = estimate_advantage(traj, s, a, p, 9);
      CHECK(std::abs(one.value[0] - all[0][s * 3 + a]) < 1e-12);
      CHECK(std::abs(one.value[1] - all[1][s * 3 + a]) < 1e-12);
    }
  }
}

TEST_CASE("advantage estimates are consistent with the oracle") {
  Rng gen(21);
  const auto m = random_ergodic_cmdp(5, 2, 1, gen, 0.05);
  Rng prng(7);
  const auto p = random_params(prng, 5, 2);
  const auto eval = evaluate_policy(m, p.policy());
  const std::size_t H = 20000, N = 40, reps = 60;
  std::vector<double> sum(10, 0.0), sq(10, 0.0);
  for (std::size_t r = 0; r < reps; ++r) {
    Rng rng = Rng(100).split(r);
    const auto adv = estimate_advantages(testgen::rollout(m, p.policy(), H, rng), p, N);
    for (std::size_t j = 0; j < 10; ++j) {
      sum[j] += adv[0][j];
      sq[j] += adv[0][j] * adv[0][j];
    }
  }
  for (std::size_t j = 0; j < 10; ++j) {
    const double mean = sum[j] / reps;
    const double se = std::sqrt((sq[j] / reps - mean * mean) / (reps - 1.0));
    CHECK(std::abs(mean - eval.advantage[0][j]) <= 3.0 * se);
  }
}

TEST_CASE("gradient estimate") {
  Rng rng(4);
  const auto m = testgen::random_cmdp(rng, 3, 2);
  const auto p = random_params(rng, 3, 2);
  const auto traj = testgen::rollout(m, p.policy(), 3000, rng);

  // Constant advantages of zero give a zero gradient.
  std::vector<std::vector<double>> zero(2, std::vector<double>(6, 0.0));
  for (double w : gradient_estimate(traj, p, zero, 0.0)) CHECK(w == 0.0);

  // Cost advantages of zero make lambda irrelevant.
  auto adv = estimate_advantages(traj, p, 5);
  adv[1].assign(6, 0.0);
  const auto w0 = gradient_estimate(traj, p, adv, 0.0);
  const auto w1 = gradient_estimate(traj, p, adv, 3.0);
  for (std::size_t j = 0; j < 6; ++j) CHECK(w0[j] == doctest::Approx(w1[j]).epsilon(1e-14));

  // Exact advantages: step-by-step sum over the trajectory.
  const auto eval = evaluate_policy(m, p.policy());
  const double lambda = 0.7;
  const std::vector<std::vector<double>> exact{eval.advantage[0], eval.advantage[1]};
  const auto w = gradient_estimate(traj, p, exact, lambda);
  std::vector<double> direct(6, 0.0);
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const std::size_t s = traj.states[t], a = traj.actions[t];
    const double al = exact[0][s * 2 + a] - lambda * exact[1][s * 2 + a];
    const auto sc = score(p, s, a);
    for (std::size_t j = 0; j < 6; ++j) direct[j] += al * sc[j] / static_cast<double>(traj.size());
  }
  for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(w[j] - direct[j]) < 1e-12);
}

TEST_CASE("exact gradient matches finite differences of the gain") {
  Rng rng(12);
  for (int rep = 0; rep < 10; ++rep) {
    const auto m = testgen::random_cmdp(rng, 3, 3);
    const auto p = random_params(rng, 3, 3, 2.0);
    for (std::size_t ch = 0; ch < 2; ++ch) {
      const auto g = exact_gradient(m, p, ch);
      for (std::size_t j = 0; j < g.size(); ++j) {
        auto up = p, down = p;
        up.theta[j] += 1e-5;
        down.theta[j] -= 1e-5;
        const double fd = (evaluate_policy(m, up.policy()).gain[ch] - evaluate_policy(m, down.policy()).gain[ch]) / 2e-5;
        CHECK(std::abs(fd - g[j]) < 1e-6);
      }
    }
  }
}

TEST_CASE("plug-in gradients are ascent directions") {
  Rng rng(30);
  const auto m = testgen::random_cmdp(rng, 4, 2);
  std::size_t ascent = 0;
  const std::size_t trials = 40;
  for (std::size_t k = 0; k < trials; ++k) {
    const auto p = random_params(rng, 4, 2, 2.0);
    const double lambda = 2.0 * rng.uniform();
    const auto eval = evaluate_policy(m, p.policy());
    const std::vector<std::vector<double>> exact{eval.advantage[0], eval.advantage[1]};
    const auto w = gradient_estimate(testgen::rollout(m, p.policy(), 4000, rng), p, exact, lambda);
    auto up = p, down = p;
    for (std::size_t j = 0; j < w.size(); ++j) {
      up.theta[j] += 1e-4 * w[j];
      down.theta[j] -= 1e-4 * w[j];
    }
    if (lagrangian_gain(m, up, lambda) - lagrangian_gain(m, down, lambda) >= 0.0) ++ascent;
  }
  CHECK(ascent >= 38);
}

TEST_CASE("cost estimate drops the burn-in and is consistent") {
  EpochTrajectory t{{0, 0, 0, 0}, {0, 0, 0, 0}, {{0, 0, 0, 0}, {9, 9, 1, 3}}};
  CHECK(cost_estimate(t, 2) == 2.0);

  Rng gen(5);
  const auto m = testgen::random_cmdp(gen, 4, 2);
  const auto pi = testgen::random_policy(gen, 4, 2);
  const double truth = evaluate_policy(m, pi).cost_gain(0);
  double sum = 0.0, sq = 0.0;
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    Rng rng = Rng(77).split(static_cast<std::uint64_t>(r));
    const double est = cost_estimate(testgen::rollout(m, pi, 2000, rng), 50);
    sum += est;
    sq += est * est;
  }
  const double mean = sum / reps;
  CHECK(std::abs(mean - truth) <= 3.0 * std::sqrt((sq / reps - mean * mean) / (reps - 1.0)));
}

TEST_CASE("derived constants on the budget model") {
  const auto m = testgen::budget_cmdp();
  CHECK(slater_margin(m) == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(solve_true_model(m).objective == doctest::Approx(0.75).epsilon(1e-9));

  Rng rng(2);
  const auto bounds = mixing_bounds(m, rng);
  // Grid has 3^4 = 81 policies and the stationary law is uniform for all.
  CHECK(bounds.t_hit == doctest::Approx(8.0).epsilon(1e-9));
  CHECK(bounds.t_mix >= 2.0 * static_cast<double>(mixing_time(m, StationaryPolicy::uniform(4, 2))));

  Rng srng(9);
  const double smooth = estimate_smoothness(m, srng);
  CHECK(smooth > 0.0);
  CHECK(std::isfinite(smooth));
}

TEST_CASE("primal-dual epochs") {
  const auto m = testgen::budget_cmdp();
  const auto schedule = EpochSchedule::make(200000, 2.0, 8.0, 0.4, 0.01);

  // No dual step: lambda stays at zero.
  auto p = SoftmaxPolicyParams::zeros(4, 2);
  DualState frozen{0.0, 0.6, 0.0};
  std::size_t state = 0;
  Rng rng(6);
  for (int k = 0; k < 3; ++k) {
    const auto rec = primal_dual_epoch(p, frozen, schedule, m, state, rng, 0.5);
    CHECK(frozen.lambda == 0.0);
    CHECK(rec.gradient_norm > 0.0);
  }

  // The projection holds after every update of the online learner.
  PolicyGradientConfig cfg;
  cfg.horizon = 200000;
  cfg.h_constant = 0.01;
  cfg.beta = 0.5;
  PolicyGradientLearner learner(m, cfg, Rng(10));
  testgen::drive(m, learner, cfg.horizon, Rng(11));
  CHECK(learner.trace().size() == learner.schedule().num_epochs);
  for (const auto& e : learner.trace()) {
    CHECK(e.lambda >= 0.0);
    CHECK(e.lambda <= learner.dual().cap());
  }
  CHECK(learner.dual().lambda <= learner.dual().cap());
  CHECK(learner.trace().front().reward_gain == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(learner.trace().front().start_time == 1);
  CHECK(learner.trace()[1].start_time == learner.schedule().epoch_length + 1);
}

TEST_CASE("policy-gradient runs are reproducible") {
  const auto m = testgen::budget_cmdp();
  PolicyGradientConfig cfg;
  cfg.horizon = 50000;
  cfg.h_constant = 0.01;
  auto run = [&] {
    PolicyGradientLearner learner(m, cfg, Rng(42));
    testgen::drive(m, learner, cfg.horizon, Rng(43));
    std::ostringstream out;
    learner.write_epoch_log(out);
    return out.str();
  };
  CHECK(run() == run());
}

TEST_CASE("policy-gradient configuration errors") {
  auto m = testgen::budget_cmdp();
  PolicyGradientConfig cfg;
  cfg.horizon = 100000;
  try {
    PolicyGradientLearner learner(m, cfg, Rng(1));
    FAIL("expected ScheduleTooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ScheduleTooShort);
  }
  // No strictly feasible policy once every cost is positive.
  for (double& c : m.costs[0]) c = 0.5;
  cfg.h_constant = 0.01;
  try {
    PolicyGradientLearner learner(m, cfg, Rng(1));
    FAIL("expected ConfigInvalid");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigInvalid);
  }
}
