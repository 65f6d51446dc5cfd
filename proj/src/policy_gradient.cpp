#include "cmdplab/policy_gradient.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "cmdplab/error.hpp"
#include "cmdplab/format.hpp"
#include "cmdplab/occupancy.hpp"

namespace cmdplab {

SoftmaxPolicyParams SoftmaxPolicyParams::zeros(std::size_t num_states, std::size_t num_actions) {
  return {num_states, num_actions, std::vector<double>(num_states * num_actions, 0.0)};
}

StationaryPolicy SoftmaxPolicyParams::policy() const {
  StationaryPolicy pi{num_states, num_actions, std::vector<double>(theta.size())};
  for (std::size_t s = 0; s < num_states; ++s) {
    const double* row = theta.data() + s * num_actions;
    const double top = *std::max_element(row, row + num_actions);
    double total = 0.0;
    for (std::size_t a = 0; a < num_actions; ++a) total += pi.probs[s * num_actions + a] = std::exp(row[a] - top);
    for (std::size_t a = 0; a < num_actions; ++a) pi.probs[s * num_actions + a] /= total;
  }
  return pi;
}

double SoftmaxPolicyParams::log_prob(std::size_t s, std::size_t a) const {
  const double* row = theta.data() + s * num_actions;
  const double top = *std::max_element(row, row + num_actions);
  double total = 0.0;
  for (std::size_t b = 0; b < num_actions; ++b) total += std::exp(row[b] - top);
  return row[a] - top - std::log(total);
}

std::vector<double> score(const SoftmaxPolicyParams& params, std::size_t s, std::size_t a) {
  if (s >= params.num_states || a >= params.num_actions) throw Error(ErrorCode::ShapeMismatch, "state or action out of range");
  std::vector<double> out(params.theta.size(), 0.0);
  for (std::size_t b = 0; b < params.num_actions; ++b) {
    out[s * params.num_actions + b] = (b == a ? 1.0 : 0.0) - std::exp(params.log_prob(s, b));
  }
  return out;
}

void DualState::update(double cost_estimate) {
  lambda = std::clamp(lambda + beta * cost_estimate, 0.0, cap());
}

EpochSchedule EpochSchedule::make(std::size_t horizon, double t_mix, double t_hit, double xi, double h_constant) {
  if (horizon < 2) throw Error(ErrorCode::ConfigInvalid, "horizon must be at least 2");
  if (!(t_mix >= 1.0) || !(t_hit >= 1.0) || !(h_constant > 0.0) || !(xi >= 0.0 && xi < 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "schedule needs t_mix, t_hit >= 1, h_constant > 0 and 0 <= xi < 1");
  }
  const double T = static_cast<double>(horizon);
  const double log_t = std::log2(T);
  EpochSchedule out;
  out.horizon = horizon;
  out.xi = xi;
  const double length = h_constant * t_mix * t_hit * std::pow(T, xi) * log_t * log_t;
  out.epoch_length = static_cast<std::size_t>(std::clamp(std::floor(length), 1.0, T + 1.0));
  out.num_epochs = horizon / out.epoch_length;
  out.subtrajectory = static_cast<std::size_t>(std::ceil(4.0 * t_mix * log_t));
  out.check();
  return out;
}

void EpochSchedule::check() const {
  if (epoch_length <= 2 * subtrajectory) {
    throw Error(ErrorCode::ScheduleTooShort, "epoch length " + std::to_string(epoch_length) +
                                                 " does not exceed twice the subtrajectory length " +
                                                 std::to_string(subtrajectory));
  }
  if (num_epochs < 1) {
    throw Error(ErrorCode::ScheduleTooShort,
                "epoch length " + std::to_string(epoch_length) + " exceeds the horizon " + std::to_string(horizon));
  }
}

namespace {

// prefix[ch][t] = sum of signal ch over steps [0, t).
std::vector<std::vector<double>> prefix_sums(const EpochTrajectory& traj) {
  std::vector<std::vector<double>> prefix(traj.signals.size());
  for (std::size_t ch = 0; ch < traj.signals.size(); ++ch) {
    prefix[ch].assign(traj.size() + 1, 0.0);
    for (std::size_t t = 0; t < traj.size(); ++t) prefix[ch][t + 1] = prefix[ch][t] + traj.signals[ch][t];
  }
  return prefix;
}

void check_trajectory(const EpochTrajectory& traj, std::size_t subtrajectory) {
  if (traj.actions.size() != traj.size()) throw Error(ErrorCode::ShapeMismatch, "states and actions differ in length");
  for (const auto& sig : traj.signals) {
    if (sig.size() != traj.size()) throw Error(ErrorCode::ShapeMismatch, "signal length differs from trajectory");
  }
  if (traj.size() == 0) throw Error(ErrorCode::ShapeMismatch, "empty trajectory");
  if (subtrajectory == 0) throw Error(ErrorCode::ConfigInvalid, "subtrajectory length must be >= 1");
}

// Sums of g_i per channel, overall and split by the action at tau_i, for the
// subtrajectories started at `s`.
struct StateScan {
  std::size_t count = 0;
  std::vector<double> total;                // [ch]
  std::vector<std::vector<double>> by_action;  // [a][ch]
};

StateScan scan_state(const EpochTrajectory& traj, const std::vector<std::vector<double>>& prefix, std::size_t s,
                     std::size_t num_actions, std::size_t n) {
  const std::size_t channels = traj.signals.size();
  StateScan scan{0, std::vector<double>(channels, 0.0),
                 std::vector<std::vector<double>>(num_actions, std::vector<double>(channels, 0.0))};
  std::size_t tau = 0;
  while (tau + n <= traj.size()) {
    if (traj.states[tau] != s) {
      ++tau;
      continue;
    }
    ++scan.count;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const double g = prefix[ch][tau + n] - prefix[ch][tau];
      scan.total[ch] += g;
      scan.by_action[traj.actions[tau]][ch] += g;
    }
    tau += 2 * n;
  }
  return scan;
}

double advantage_from_scan(const StateScan& scan, std::size_t a, std::size_t ch, double prob) {
  if (scan.count == 0) return 0.0;
  const double m = static_cast<double>(scan.count);
  return scan.by_action[a][ch] / (m * prob) - scan.total[ch] / m;
}

}  // namespace

AdvantageEstimate estimate_advantage(const EpochTrajectory& traj, std::size_t s, std::size_t a,
                                     const SoftmaxPolicyParams& params, std::size_t subtrajectory) {
  check_trajectory(traj, subtrajectory);
  if (s >= params.num_states || a >= params.num_actions) throw Error(ErrorCode::ShapeMismatch, "state or action out of range");
  const auto scan = scan_state(traj, prefix_sums(traj), s, params.num_actions, subtrajectory);
  AdvantageEstimate out{std::vector<double>(traj.signals.size(), 0.0), scan.count};
  const double prob = std::exp(params.log_prob(s, a));
  for (std::size_t ch = 0; ch < out.value.size(); ++ch) out.value[ch] = advantage_from_scan(scan, a, ch, prob);
  return out;
}

std::vector<std::vector<double>> estimate_advantages(const EpochTrajectory& traj, const SoftmaxPolicyParams& params,
                                                     std::size_t subtrajectory) {
  check_trajectory(traj, subtrajectory);
  const std::size_t S = params.num_states, A = params.num_actions;
  const auto prefix = prefix_sums(traj);
  const auto pi = params.policy();
  std::vector<std::vector<double>> out(traj.signals.size(), std::vector<double>(S * A, 0.0));
  for (std::size_t s = 0; s < S; ++s) {
    const auto scan = scan_state(traj, prefix, s, A, subtrajectory);
    for (std::size_t a = 0; a < A; ++a) {
      for (std::size_t ch = 0; ch < out.size(); ++ch) out[ch][s * A + a] = advantage_from_scan(scan, a, ch, pi(s, a));
    }
  }
  return out;
}

std::vector<double> gradient_estimate(const EpochTrajectory& traj, const SoftmaxPolicyParams& params,
                                      std::span<const std::vector<double>> advantages, double lambda) {
  const std::size_t S = params.num_states, A = params.num_actions;
  if (advantages.size() < 2) throw Error(ErrorCode::ShapeMismatch, "need reward and cost advantages");
  if (traj.size() == 0) throw Error(ErrorCode::ShapeMismatch, "empty trajectory");
  std::vector<double> visits(S * A, 0.0);
  for (std::size_t t = 0; t < traj.size(); ++t) visits[traj.states[t] * A + traj.actions[t]] += 1.0;
  const auto pi = params.policy();
  std::vector<double> omega(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    // sum_a n(s,a) A_L(s,a) (e_a - pi(.|s))
    double weighted = 0.0;
    for (std::size_t a = 0; a < A; ++a) {
      const double lagrangian = advantages[0][s * A + a] - lambda * advantages[1][s * A + a];
      const double w = visits[s * A + a] * lagrangian;
      omega[s * A + a] += w;
      weighted += w;
    }
    for (std::size_t a = 0; a < A; ++a) omega[s * A + a] -= weighted * pi(s, a);
  }
  for (double& x : omega) x /= static_cast<double>(traj.size());
  return omega;
}

double cost_estimate(const EpochTrajectory& traj, std::size_t subtrajectory, std::size_t channel) {
  if (channel + 1 >= traj.signals.size()) throw Error(ErrorCode::ShapeMismatch, "no such cost channel");
  if (traj.size() <= subtrajectory) throw Error(ErrorCode::ScheduleTooShort, "epoch shorter than the burn-in");
  const auto& c = traj.signals[channel + 1];
  const double total = std::accumulate(c.begin() + static_cast<std::ptrdiff_t>(subtrajectory), c.end(), 0.0);
  return total / static_cast<double>(traj.size() - subtrajectory);
}

std::vector<double> exact_gradient(const TabularCmdp& cmdp, const SoftmaxPolicyParams& params, std::size_t channel) {
  const auto pi = params.policy();
  const auto eval = evaluate_policy(cmdp, pi);
  if (channel >= eval.advantage.size()) throw Error(ErrorCode::ShapeMismatch, "no such channel");
  const std::size_t A = cmdp.num_actions;
  std::vector<double> grad(cmdp.num_states * A);
  for (std::size_t s = 0; s < cmdp.num_states; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      grad[s * A + a] = eval.stationary_distribution[s] * pi(s, a) * eval.advantage[channel][s * A + a];
    }
  }
  return grad;
}

double slater_margin(const TabularCmdp& cmdp) {
  if (cmdp.num_channels() == 0) throw Error(ErrorCode::ConfigInvalid, "model has no cost channel");
  // Maximize (1 - c)/2, which stays in the reward range, then map back.
  TabularCmdp flipped = cmdp;
  for (std::size_t i = 0; i < flipped.reward.size(); ++i) flipped.reward[i] = 0.5 * (1.0 - cmdp.costs[0][i]);
  flipped.costs.clear();
  flipped.channel_names.clear();
  flipped.cost_units.clear();
  const double best = solve_true_model(flipped).objective;
  return -(1.0 - 2.0 * best);
}

double estimate_smoothness(const TabularCmdp& cmdp, Rng& rng, std::size_t samples, double h) {
  const std::size_t d = cmdp.num_states * cmdp.num_actions;
  std::normal_distribution<double> normal;
  double worst = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    auto params = SoftmaxPolicyParams::zeros(cmdp.num_states, cmdp.num_actions);
    for (double& x : params.theta) x = normal(rng);
    std::vector<double> dir(d);
    double norm = 0.0;
    for (double& x : dir) {
      x = normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    auto plus = params, minus = params;
    for (std::size_t j = 0; j < d; ++j) {
      plus.theta[j] += h * dir[j] / norm;
      minus.theta[j] -= h * dir[j] / norm;
    }
    try {
      const auto gp = exact_gradient(cmdp, plus, 0);
      const auto gm = exact_gradient(cmdp, minus, 0);
      double diff = 0.0;
      for (std::size_t j = 0; j < d; ++j) diff += (gp[j] - gm[j]) * (gp[j] - gm[j]);
      worst = std::max(worst, std::sqrt(diff) / (2.0 * h));
      ++used;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotErgodic && e.code() != ErrorCode::SingularSystem) throw;
    }
  }
  if (used == 0 || !(worst > 0.0)) throw Error(ErrorCode::NotErgodic, "no evaluable policy for the smoothness estimate");
  return 2.0 * worst;
}

MixingBounds mixing_bounds(const TabularCmdp& cmdp, Rng& rng, double safety, double eta, std::size_t max_policies) {
  const std::size_t S = cmdp.num_states, A = cmdp.num_actions;
  if (!(eta > 0.0 && eta <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "eta must be in (0, 1]");
  // Row 0 is uniform, row 1 + a leans on action a.
  const std::size_t rows = A + 1;
  auto fill_row = [&](StationaryPolicy& pi, std::size_t s, std::size_t choice) {
    for (std::size_t a = 0; a < A; ++a) {
      const double base = eta / static_cast<double>(A);
      pi.probs[s * A + a] = choice == 0 ? 1.0 / static_cast<double>(A) : base + (a + 1 == choice ? 1.0 - eta : 0.0);
    }
  };
  double grid_size = std::pow(static_cast<double>(rows), static_cast<double>(S));
  const bool exhaustive = grid_size <= static_cast<double>(max_policies);
  const std::size_t count = exhaustive ? static_cast<std::size_t>(grid_size) : max_policies;

  MixingBounds out;
  StationaryPolicy pi = StationaryPolicy::uniform(S, A);
  for (std::size_t idx = 0; idx < count; ++idx) {
    std::size_t code = idx;
    for (std::size_t s = 0; s < S; ++s) {
      std::size_t choice;
      if (exhaustive) {
        choice = code % rows;
        code /= rows;
      } else {
        choice = static_cast<std::size_t>(rng.uniform() * static_cast<double>(rows));
      }
      fill_row(pi, s, std::min(choice, rows - 1));
    }
    out.t_mix = std::max(out.t_mix, static_cast<double>(mixing_time(cmdp, pi)));
    out.t_hit = std::max(out.t_hit, hitting_time(cmdp, pi));
  }
  out.t_mix *= safety;
  out.t_hit *= safety;
  return out;
}

PolicyGradientEpoch primal_dual_update(SoftmaxPolicyParams& params, DualState& dual, const EpochTrajectory& traj,
                                       const EpochSchedule& schedule, double alpha) {
  schedule.check();
  if (!(alpha > 0.0)) throw Error(ErrorCode::ConfigInvalid, "step size must be positive");
  const auto advantages = estimate_advantages(traj, params, schedule.subtrajectory);
  const auto omega = gradient_estimate(traj, params, advantages, dual.lambda);

  PolicyGradientEpoch rec;
  rec.lambda = dual.lambda;
  rec.cost_estimate = cost_estimate(traj, schedule.subtrajectory);
  double norm = 0.0;
  for (std::size_t j = 0; j < omega.size(); ++j) {
    params.theta[j] += alpha * omega[j];
    norm += omega[j] * omega[j];
  }
  rec.gradient_norm = std::sqrt(norm);
  dual.update(rec.cost_estimate);
  return rec;
}

PolicyGradientEpoch primal_dual_epoch(SoftmaxPolicyParams& params, DualState& dual, const EpochSchedule& schedule,
                                      const TabularCmdp& env, std::size_t& state, Rng& rng, double alpha) {
  schedule.check();
  if (env.num_channels() == 0) throw Error(ErrorCode::ConfigInvalid, "model has no cost channel");
  const auto pi = params.policy();
  EpochTrajectory traj;
  traj.signals.assign(2, {});
  for (std::size_t t = 0; t < schedule.epoch_length; ++t) {
    const std::size_t a = inverse_cdf(pi.row(state), rng.uniform());
    traj.states.push_back(state);
    traj.actions.push_back(a);
    traj.signals[0].push_back(env.r(state, a));
    traj.signals[1].push_back(env.c(0, state, a));
    state = sample_step(env, state, a, rng).next_state;
  }
  return primal_dual_update(params, dual, traj, schedule, alpha);
}

PolicyGradientLearner::PolicyGradientLearner(const TabularCmdp& model, PolicyGradientConfig config, Rng rng)
    : model_(&model),
      action_rng_(rng.split("actions")),
      params_(SoftmaxPolicyParams::zeros(model.num_states, model.num_actions)),
      record_gains_(config.record_gains) {
  model.validate();
  if (model.num_channels() != 1) throw Error(ErrorCode::ConfigInvalid, "policy gradient supports exactly one cost channel");

  Rng mixing_rng = rng.split("mixing");
  const MixingBounds mix = config.mixing ? *config.mixing : mixing_bounds(model, mixing_rng);
  schedule_ = EpochSchedule::make(config.horizon, mix.t_mix, mix.t_hit, config.xi, config.h_constant);

  dual_.slater_delta = config.slater_delta ? *config.slater_delta : slater_margin(model);
  if (!(dual_.slater_delta > 0.0)) throw Error(ErrorCode::ConfigInvalid, "no strictly feasible policy (Slater margin <= 0)");
  dual_.beta = config.beta ? *config.beta : std::pow(static_cast<double>(config.horizon), -config.xi);
  if (!(dual_.beta >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "dual step must be >= 0");

  if (config.alpha) {
    alpha_ = *config.alpha;
  } else {
    Rng smooth_rng = rng.split("smoothness");
    const double smoothness = config.smoothness ? *config.smoothness : estimate_smoothness(model, smooth_rng);
    alpha_ = 1.0 / (4.0 * smoothness * (1.0 + 2.0 / dual_.slater_delta));
  }
  if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw Error(ErrorCode::ConfigInvalid, "step size must be positive");

  policy_ = params_.policy();
  current_.signals.assign(2, {});
}

std::size_t PolicyGradientLearner::act(std::size_t state) {
  return inverse_cdf(policy_.row(state), action_rng_.uniform());
}

void PolicyGradientLearner::observe(std::size_t state, std::size_t action, std::size_t /*next_state*/) {
  ++time_;
  if (trace_.size() >= schedule_.num_epochs) return;
  current_.states.push_back(state);
  current_.actions.push_back(action);
  current_.signals[0].push_back(model_->r(state, action));
  current_.signals[1].push_back(model_->c(0, state, action));
  if (current_.size() == schedule_.epoch_length) finish_epoch();
}

void PolicyGradientLearner::finish_epoch() {
  PolicyGradientEpoch gains;
  if (record_gains_) {
    PolicyEvaluation eval;
    try {
      eval = evaluate_policy(*model_, policy_);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotErgodic) throw;
      eval = evaluate_unichain(*model_, policy_);
    }
    gains.reward_gain = eval.reward_gain();
    gains.cost_gain = eval.cost_gain(0);
  }
  auto rec = primal_dual_update(params_, dual_, current_, schedule_, alpha_);
  rec.epoch = trace_.size() + 1;
  rec.start_time = time_ - schedule_.epoch_length + 1;
  rec.reward_gain = gains.reward_gain;
  rec.cost_gain = gains.cost_gain;
  trace_.push_back(rec);

  EpochRecord summary;
  summary.epoch = rec.epoch;
  summary.start_time = rec.start_time;
  summary.objective = rec.reward_gain;
  summary.status = "updated";
  summary.dual = rec.lambda;
  epochs_.push_back(summary);

  policy_ = params_.policy();
  for (auto& sig : current_.signals) sig.clear();
  current_.states.clear();
  current_.actions.clear();
}

void PolicyGradientLearner::write_epoch_log(std::ostream& out) const {
  out << "epoch,start_time,reward_gain,cost_gain,cost_estimate,lambda,gradient_norm\n";
  for (const auto& e : trace_) {
    out << e.epoch << ',' << e.start_time << ',' << format_double(e.reward_gain) << ',' << format_double(e.cost_gain)
        << ',' << format_double(e.cost_estimate) << ',' << format_double(e.lambda) << ','
        << format_double(e.gradient_norm) << '\n';
  }
}

}  // namespace cmdplab
