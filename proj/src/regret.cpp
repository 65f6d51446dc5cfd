#include "cmdplab/regret.hpp"

#include <algorithm>
#include <ostream>

#include "cmdplab/error.hpp"
#include "cmdplab/format.hpp"

namespace cmdplab {

RegretLedger::RegretLedger(double oracle_gain, std::size_t num_channels, std::size_t interval)
    : oracle_gain_(oracle_gain), interval_(interval), cum_cost_(num_channels, 0.0) {}

void RegretLedger::record(double reward, std::span<const double> costs) {
  if (costs.size() != cum_cost_.size()) throw Error(ErrorCode::ShapeMismatch, "cost vector has the wrong length");
  ++t_;
  cum_reward_ += reward;
  for (std::size_t k = 0; k < costs.size(); ++k) cum_cost_[k] += costs[k];
  if (interval_ > 0 && t_ % interval_ == 0) mark();
}

void RegretLedger::mark() {
  if (t_ == 0 || (!trace_.empty() && trace_.back().t == t_)) return;
  TracePoint p;
  p.t = t_;
  p.regret = regret();
  p.reward_rate = cum_reward_ / static_cast<double>(t_);
  for (std::size_t k = 0; k < cum_cost_.size(); ++k) {
    p.violation.push_back(violation(k));
    p.cost_rate.push_back(cum_cost_[k] / static_cast<double>(t_));
  }
  trace_.push_back(std::move(p));
}

double RegretLedger::violation(std::size_t channel) const { return std::max(0.0, cum_cost_.at(channel)); }

void RegretLedger::write_csv(std::ostream& out) const {
  const std::size_t m = cum_cost_.size();
  out << "t,R";
  for (std::size_t k = 1; k <= m; ++k) out << ",C_" << k;
  out << ",reward_rate";
  for (std::size_t k = 1; k <= m; ++k) out << ",cost_rate_" << k;
  out << '\n';
  for (const auto& p : trace_) {
    out << p.t << ',' << format_double(p.regret);
    for (double v : p.violation) out << ',' << format_double(v);
    out << ',' << format_double(p.reward_rate);
    for (double v : p.cost_rate) out << ',' << format_double(v);
    out << '\n';
  }
}

std::size_t trace_interval(std::size_t horizon) { return std::max<std::size_t>(1, (horizon + 999) / 1000); }

RegretLedger play(const TabularCmdp& env, Learner& learner, std::size_t steps, Rng rng, double oracle_gain,
                  std::size_t interval) {
  RegretLedger ledger(oracle_gain, env.num_channels(), interval);
  std::size_t s = sample_initial_state(env, rng);
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t a = learner.act(s);
    const auto step = sample_step(env, s, a, rng);
    ledger.record(step.reward, step.costs);
    learner.observe(s, a, step.next_state);
    s = step.next_state;
  }
  ledger.mark();
  return ledger;
}

}  // namespace cmdplab
