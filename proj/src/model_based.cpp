#include "cmdplab/model_based.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "cmdplab/error.hpp"
#include "cmdplab/occupancy.hpp"

namespace cmdplab {

VisitCounts::VisitCounts(std::size_t states, std::size_t actions)
    : num_states(states),
      num_actions(actions),
      current(states * actions, 0),
      start(states * actions, 0),
      previous_start(states * actions, 0),
      triple(states * actions * states, 0) {}

void VisitCounts::record(std::size_t s, std::size_t a, std::size_t next) {
  const std::size_t sa = s * num_actions + a;
  ++current[sa];
  ++triple[sa * num_states + next];
}

void VisitCounts::close_epoch() {
  for (std::size_t sa = 0; sa < current.size(); ++sa) {
    previous_start[sa] = start[sa];
    start[sa] += current[sa];
    current[sa] = 0;
  }
}

bool VisitCounts::reconciled() const {
  for (std::size_t sa = 0; sa < current.size(); ++sa) {
    std::size_t seen = 0;
    for (std::size_t t = 0; t < num_states; ++t) seen += triple[sa * num_states + t];
    if (seen != start[sa] + current[sa]) return false;
  }
  return true;
}

bool epoch_trigger(const VisitCounts& counts, EpochMode mode) {
  for (std::size_t sa = 0; sa < counts.current.size(); ++sa) {
    const std::size_t base = mode == EpochMode::Doubling ? counts.start[sa] : counts.previous_start[sa];
    if (counts.current[sa] >= std::max<std::size_t>(1, base)) return true;
  }
  return false;
}

std::vector<double> empirical_transition(const VisitCounts& counts) {
  const std::size_t S = counts.num_states;
  std::vector<double> p(counts.triple.size(), 1.0 / static_cast<double>(S));
  for (std::size_t sa = 0; sa < counts.start.size(); ++sa) {
    const std::size_t n = counts.total(sa);
    if (n == 0) continue;
    for (std::size_t t = 0; t < S; ++t) {
      p[sa * S + t] = static_cast<double>(counts.triple[sa * S + t]) / static_cast<double>(n);
    }
  }
  return p;
}

std::vector<double> posterior_transition(const VisitCounts& counts, Rng& rng) {
  const std::size_t S = counts.num_states;
  std::vector<double> p(counts.triple.size());
  std::vector<double> alpha(S);
  for (std::size_t sa = 0; sa < counts.start.size(); ++sa) {
    for (std::size_t t = 0; t < S; ++t) alpha[t] = static_cast<double>(counts.triple[sa * S + t]) + 1.0;
    const auto row = dirichlet(alpha, rng);
    std::copy(row.begin(), row.end(), p.begin() + static_cast<std::ptrdiff_t>(sa * S));
  }
  return p;
}

double doubling_epoch_bound(std::size_t num_states, std::size_t num_actions, std::size_t steps) {
  const double sa = static_cast<double>(num_states * num_actions);
  return 1.0 + 2.0 * sa + sa * std::log2(std::max(1.0, static_cast<double>(steps) / sa));
}

ModelBasedLearner::ModelBasedLearner(const TabularCmdp& model, ModelBasedConfig config, Rng rng)
    : signals_(model),
      config_(config),
      action_rng_(rng.split("actions")),
      model_rng_(rng.split("posterior")),
      counts_(model.num_states, model.num_actions) {
  model.validate();
  if (!(config.k >= 0.0) || !std::isfinite(config.k)) throw Error(ErrorCode::ConfigInvalid, "K must be finite and >= 0");
  // The kernel is hidden from the learner.
  std::fill(signals_.transition.begin(), signals_.transition.end(), 1.0 / static_cast<double>(model.num_states));
  begin_epoch();
}

std::size_t ModelBasedLearner::act(std::size_t state) {
  return inverse_cdf(epoch_.policy.row(state), action_rng_.uniform());
}

void ModelBasedLearner::observe(std::size_t state, std::size_t action, std::size_t next_state) {
  counts_.record(state, action, next_state);
  ++time_;
  if (epoch_trigger(counts_, config_.mode)) {
    counts_.close_epoch();
    begin_epoch();
  }
}

void ModelBasedLearner::begin_epoch() {
  ++epoch_.index;
  epoch_.start_time = time_ + 1;
  epoch_.epsilon = epsilon_schedule(config_.k, epoch_.start_time);
  plan();
}

void ModelBasedLearner::plan() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t S = signals_.num_states, A = signals_.num_actions;

  OptimisticInputs optimistic;
  TabularCmdp sampled;
  if (config_.planner == Planner::Optimistic) {
    auto radius = confidence_radii(S, A, counts_.start, epoch_.start_time);
    if (config_.radius_scale != 1.0) {
      for (double& r : radius) r = std::min(2.0, r * config_.radius_scale);
    }
    optimistic = {&signals_, empirical_transition(counts_), std::move(radius)};
  } else {
    sampled = signals_;
    sampled.transition = posterior_transition(counts_, model_rng_);
  }

  // Solve at the scheduled margin; halve it while infeasible, and fall back
  // to the least relaxation of the cost rows once it is negligible.
  EpochRecord rec;
  rec.epoch = epoch_.index;
  rec.start_time = epoch_.start_time;
  rec.status = "optimal";
  double eps = epoch_.epsilon;
  while (true) {
    const CostRows rows = eps < 1e-12 ? CostRows::Elastic : CostRows::Strict;
    if (rows == CostRows::Elastic) eps = 0.0;
    const double margin[] = {eps};
    try {
      if (config_.planner == Planner::Optimistic) {
        const auto res = solve_optimistic(optimistic, margin, rows);
        epoch_.policy = extract_policy(res.occupancy, config_.dust_tol);
        rec.objective = res.objective;
        rec.slack = res.slack;
      } else {
        const auto res = solve_true_model(sampled, margin, rows);
        epoch_.policy = extract_policy(res.occupancy, config_.dust_tol);
        rec.objective = res.objective;
        rec.slack = res.slack;
      }
      if (rec.slack > 0.0) rec.status = "elastic";
      break;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Infeasible) throw;
      rec.status = "relaxed";
      eps *= 0.5;
    }
  }
  rec.epsilon = eps;
  rec.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  epochs_.push_back(std::move(rec));
}

}  // namespace cmdplab
