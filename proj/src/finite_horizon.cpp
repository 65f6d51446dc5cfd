#include "cmdplab/finite_horizon.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "cmdplab/error.hpp"
#include "cmdplab/format.hpp"
#include "cmdplab/occupancy.hpp"

namespace cmdplab {

FhaSchedule fha_schedule(std::size_t horizon, std::size_t num_states, std::size_t num_actions) {
  const std::size_t floor_steps = num_states * num_states * num_actions;
  if (floor_steps == 0) throw Error(ErrorCode::ShapeMismatch, "empty state or action space");
  if (horizon < floor_steps) {
    throw Error(ErrorCode::HorizonDegenerate, "T = " + std::to_string(horizon) + " is below S^2 A = " +
                                                  std::to_string(floor_steps));
  }
  const double ratio = static_cast<double>(horizon) / static_cast<double>(floor_steps);
  // Guard against cbrt rounding just above an exact cube.
  auto h = static_cast<std::size_t>(std::ceil(std::cbrt(ratio)));
  while (h > 1 && static_cast<double>((h - 1) * (h - 1) * (h - 1)) >= ratio) --h;
  FhaSchedule out;
  out.episode_length = h;
  out.episodes = horizon / h;
  out.degenerate = h == 1;
  return out;
}

BernsteinSet BernsteinSet::from_counts(std::size_t num_states, std::size_t num_actions,
                                       std::span<const std::size_t> triple, std::size_t horizon, double delta) {
  const std::size_t S = num_states, A = num_actions;
  if (triple.size() != S * A * S) throw Error(ErrorCode::ShapeMismatch, "count table has the wrong size");
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorCode::ConfigInvalid, "delta must be in (0, 1)");
  if (horizon == 0) throw Error(ErrorCode::ConfigInvalid, "horizon must be positive");
  BernsteinSet set;
  set.num_states = S;
  set.num_actions = A;
  set.iota = std::log(2.0 * static_cast<double>(S * A) * static_cast<double>(horizon) / delta);
  set.p_hat.assign(S * A * S, 1.0 / static_cast<double>(S));
  set.alpha.resize(S * A);
  for (std::size_t sa = 0; sa < S * A; ++sa) {
    std::size_t n = 0;
    for (std::size_t t = 0; t < S; ++t) n += triple[sa * S + t];
    set.alpha[sa] = set.iota / static_cast<double>(std::max<std::size_t>(1, n));
    if (n == 0) continue;
    for (std::size_t t = 0; t < S; ++t) {
      set.p_hat[sa * S + t] = static_cast<double>(triple[sa * S + t]) / static_cast<double>(n);
    }
  }
  return set;
}

double BernsteinSet::radius(std::size_t s, std::size_t a, std::size_t next) const {
  const std::size_t sa = s * num_actions + a;
  const double al = alpha[sa];
  return std::min(1.0, 4.0 * std::sqrt(p_hat[sa * num_states + next] * al) + 28.0 * al);
}

double BernsteinSet::lower(std::size_t s, std::size_t a, std::size_t next) const {
  return std::max(0.0, p_hat[(s * num_actions + a) * num_states + next] - radius(s, a, next));
}

double BernsteinSet::upper(std::size_t s, std::size_t a, std::size_t next) const {
  return std::min(1.0, p_hat[(s * num_actions + a) * num_states + next] + radius(s, a, next));
}

bool BernsteinSet::contains(std::span<const double> transition, double tol) const {
  if (transition.size() != p_hat.size()) throw Error(ErrorCode::ShapeMismatch, "kernel has the wrong size");
  for (std::size_t s = 0; s < num_states; ++s) {
    for (std::size_t a = 0; a < num_actions; ++a) {
      for (std::size_t t = 0; t < num_states; ++t) {
        const double gap = std::abs(transition[(s * num_actions + a) * num_states + t] -
                                    p_hat[(s * num_actions + a) * num_states + t]);
        if (gap > radius(s, a, t) + tol) return false;
      }
    }
  }
  return true;
}

double FiniteHorizonOccupancy::pair_mass(std::size_t s, std::size_t a, std::size_t h) const {
  const auto* row = nu.data() + ((h * num_states + s) * num_actions + a) * num_states;
  return std::accumulate(row, row + num_states, 0.0);
}

double FiniteHorizonOccupancy::state_mass(std::size_t s, std::size_t h) const {
  double total = 0.0;
  for (std::size_t a = 0; a < num_actions; ++a) total += pair_mass(s, a, h);
  return total;
}

double occupancy_violation(const FiniteHorizonOccupancy& occ) {
  const std::size_t S = occ.num_states, A = occ.num_actions, H = occ.horizon;
  double worst = 0.0;
  for (double v : occ.nu) worst = std::max(worst, -v);
  for (std::size_t s = 0; s < S; ++s) {
    worst = std::max(worst, std::abs(occ.state_mass(s, 0) - (s == occ.start_state ? 1.0 : 0.0)));
  }
  for (std::size_t h = 0; h < H; ++h) {
    double mass = 0.0;
    for (std::size_t s = 0; s < S; ++s) mass += occ.state_mass(s, h);
    worst = std::max(worst, std::abs(mass - 1.0));
    if (h + 1 == H) continue;
    for (std::size_t t = 0; t < S; ++t) {
      double inflow = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) inflow += occ(s, a, h, t);
      }
      worst = std::max(worst, std::abs(inflow - occ.state_mass(t, h + 1)));
    }
  }
  return worst;
}

double band_violation(const FiniteHorizonOccupancy& occ, const BernsteinSet& set, double dust_tol) {
  double worst = 0.0;
  for (std::size_t h = 0; h < occ.horizon; ++h) {
    for (std::size_t s = 0; s < occ.num_states; ++s) {
      for (std::size_t a = 0; a < occ.num_actions; ++a) {
        const double mass = occ.pair_mass(s, a, h);
        if (mass <= dust_tol) continue;
        for (std::size_t t = 0; t < occ.num_states; ++t) {
          const double p = occ(s, a, h, t) / mass;
          worst = std::max({worst, set.lower(s, a, t) - p, p - set.upper(s, a, t)});
        }
      }
    }
  }
  return worst;
}

namespace {

void check_opt1_inputs(const TabularCmdp& model, std::size_t start, const BernsteinSet& set, std::size_t horizon) {
  if (set.num_states != model.num_states || set.num_actions != model.num_actions) {
    throw Error(ErrorCode::ShapeMismatch, "confidence set does not match the model");
  }
  if (start >= model.num_states) throw Error(ErrorCode::ShapeMismatch, "start state out of range");
  if (horizon == 0) throw Error(ErrorCode::ConfigInvalid, "episode length must be positive");
}

// Deterministic plan for one multiplier: an action and a kernel row per (s,h).
struct Plan {
  std::vector<std::size_t> action;  // [h*S + s]
  std::vector<double> kernel;       // [(h*S + s)*S + s']
  FiniteHorizonOccupancy occupancy;
  double reward = 0.0;
  double cost = 0.0;
};

class LagrangianSolver {
 public:
  LagrangianSolver(const TabularCmdp& model, std::size_t start, const BernsteinSet& set, std::size_t horizon)
      : m_(model), start_(start), set_(set), H_(horizon), S_(model.num_states), A_(model.num_actions) {
    lo_.resize(S_ * A_ * S_);
    hi_.resize(S_ * A_ * S_);
    for (std::size_t s = 0; s < S_; ++s) {
      for (std::size_t a = 0; a < A_; ++a) {
        for (std::size_t t = 0; t < S_; ++t) {
          lo_[(s * A_ + a) * S_ + t] = set.lower(s, a, t);
          hi_[(s * A_ + a) * S_ + t] = set.upper(s, a, t);
        }
      }
    }
  }

  // Optimistic backward induction on r - mu c, then the forward pass.
  Plan solve(double mu) {
    Plan plan;
    plan.action.assign(H_ * S_, 0);
    plan.kernel.assign(H_ * S_ * S_, 0.0);
    std::vector<double> next_value(S_, 0.0), value(S_, 0.0), p(S_), best_p(S_);
    for (std::size_t h = H_; h-- > 0;) {
      order_by_value(next_value);
      for (std::size_t s = 0; s < S_; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < A_; ++a) {
          const double future = best_kernel(s * A_ + a, next_value, p);
          double q = m_.r(s, a) + future;
          if (!m_.costs.empty()) q -= mu * m_.c(0, s, a);
          if (q > best) {
            best = q;
            plan.action[h * S_ + s] = a;
            best_p = p;
          }
        }
        value[s] = best;
        std::copy(best_p.begin(), best_p.end(), plan.kernel.begin() + static_cast<std::ptrdiff_t>((h * S_ + s) * S_));
      }
      std::swap(value, next_value);
    }

    auto& occ = plan.occupancy;
    occ = {S_, A_, H_, start_, std::vector<double>(H_ * S_ * A_ * S_, 0.0)};
    std::vector<double> d(S_, 0.0), d_next(S_);
    d[start_] = 1.0;
    for (std::size_t h = 0; h < H_; ++h) {
      std::fill(d_next.begin(), d_next.end(), 0.0);
      for (std::size_t s = 0; s < S_; ++s) {
        if (d[s] == 0.0) continue;
        const std::size_t a = plan.action[h * S_ + s];
        plan.reward += d[s] * m_.r(s, a);
        if (!m_.costs.empty()) plan.cost += d[s] * m_.c(0, s, a);
        for (std::size_t t = 0; t < S_; ++t) {
          const double mass = d[s] * plan.kernel[(h * S_ + s) * S_ + t];
          occ.nu[((h * S_ + s) * A_ + a) * S_ + t] = mass;
          d_next[t] += mass;
        }
      }
      std::swap(d, d_next);
    }
    return plan;
  }

 private:
  void order_by_value(const std::vector<double>& v) {
    order_.resize(S_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t x, std::size_t y) { return v[x] > v[y]; });
  }

  // argmax of v.p over the band intersected with the simplex: start from the
  // lower ends and fill the remaining mass into the best states first.
  double best_kernel(std::size_t sa, const std::vector<double>& v, std::vector<double>& p) const {
    const double* lo = lo_.data() + sa * S_;
    const double* hi = hi_.data() + sa * S_;
    double remaining = 1.0;
    for (std::size_t t = 0; t < S_; ++t) {
      p[t] = lo[t];
      remaining -= lo[t];
    }
    for (std::size_t t : order_) {
      if (remaining <= 0.0) break;
      const double add = std::min(hi[t] - lo[t], remaining);
      p[t] += add;
      remaining -= add;
    }
    double out = 0.0;
    for (std::size_t t = 0; t < S_; ++t) out += p[t] * v[t];
    return out;
  }

  const TabularCmdp& m_;
  std::size_t start_;
  const BernsteinSet& set_;
  std::size_t H_, S_, A_;
  std::vector<double> lo_, hi_;
  std::vector<std::size_t> order_;
};

Opt1Result to_result(Plan plan, double multiplier) {
  Opt1Result out;
  out.occupancy = std::move(plan.occupancy);
  out.objective = plan.reward;
  out.cost = plan.cost;
  out.multiplier = multiplier;
  return out;
}

}  // namespace

Opt1Result solve_opt1(const TabularCmdp& model, std::size_t start, const BernsteinSet& set, std::size_t horizon,
                      double span_bound) {
  check_opt1_inputs(model, start, set, horizon);
  LagrangianSolver solver(model, start, set, horizon);
  Plan low = solver.solve(0.0);
  if (model.costs.empty() || low.cost <= span_bound) return to_result(std::move(low), 0.0);

  // Grow the multiplier until the cost row holds.
  double mu_lo = 0.0, mu_hi = 1.0;
  Plan high = solver.solve(mu_hi);
  while (high.cost > span_bound) {
    mu_lo = mu_hi;
    low = std::move(high);
    mu_hi *= 2.0;
    if (mu_hi > 1e15) throw Error(ErrorCode::Infeasible, "no occupancy in the confidence set meets the cost bound");
    high = solver.solve(mu_hi);
  }
  for (int iter = 0; iter < 200 && mu_hi - mu_lo > 1e-15 * mu_hi; ++iter) {
    const double mid = 0.5 * (mu_lo + mu_hi);
    Plan plan = solver.solve(mid);
    if (plan.cost > span_bound) {
      mu_lo = mid;
      low = std::move(plan);
    } else {
      mu_hi = mid;
      high = std::move(plan);
    }
  }
  // Mix so the cost row is met with equality.
  const double weight = (span_bound - high.cost) / (low.cost - high.cost);
  Plan mixed = std::move(high);
  for (std::size_t i = 0; i < mixed.occupancy.nu.size(); ++i) {
    mixed.occupancy.nu[i] = weight * low.occupancy.nu[i] + (1.0 - weight) * mixed.occupancy.nu[i];
  }
  mixed.reward = weight * low.reward + (1.0 - weight) * mixed.reward;
  mixed.cost = weight * low.cost + (1.0 - weight) * mixed.cost;
  return to_result(std::move(mixed), mu_hi);
}

lp::LpProblem build_opt1_lp(const TabularCmdp& model, std::size_t start, const BernsteinSet& set,
                            std::size_t horizon, double span_bound) {
  check_opt1_inputs(model, start, set, horizon);
  const std::size_t S = model.num_states, A = model.num_actions, H = horizon;
  const std::size_t n = H * S * A * S;
  auto var = [&](std::size_t s, std::size_t a, std::size_t h, std::size_t t) { return ((h * S + s) * A + a) * S + t; };

  lp::LpProblem p;
  p.sense = lp::Objective::Maximize;
  p.objective.assign(n, 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t a = 0; a < A; ++a) {
        for (std::size_t t = 0; t < S; ++t) p.objective[var(s, a, h, t)] = model.r(s, a);
      }
    }
  }
  // Start row per state; per-step mass then follows from the flow rows.
  for (std::size_t s = 0; s < S; ++s) {
    lp::EqualityRow row{std::vector<double>(n, 0.0), s == start ? 1.0 : 0.0};
    for (std::size_t a = 0; a < A; ++a) {
      for (std::size_t t = 0; t < S; ++t) row.coeffs[var(s, a, 0, t)] = 1.0;
    }
    p.equalities.push_back(std::move(row));
  }
  for (std::size_t h = 0; h + 1 < H; ++h) {
    for (std::size_t t = 0; t < S; ++t) {
      lp::EqualityRow row{std::vector<double>(n, 0.0), 0.0};
      for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) row.coeffs[var(s, a, h, t)] += 1.0;
      }
      for (std::size_t a = 0; a < A; ++a) {
        for (std::size_t u = 0; u < S; ++u) row.coeffs[var(t, a, h + 1, u)] -= 1.0;
      }
      p.equalities.push_back(std::move(row));
    }
  }
  // nu(s,a,h,t) - upper * nu(s,a,h) <= 0 and lower * nu(s,a,h) - nu(s,a,h,t) <= 0.
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t a = 0; a < A; ++a) {
        for (std::size_t t = 0; t < S; ++t) {
          lp::InequalityRow up{std::vector<double>(n, 0.0), 0.0, lp::RowSense::LessEqual};
          lp::InequalityRow down{std::vector<double>(n, 0.0), 0.0, lp::RowSense::LessEqual};
          for (std::size_t u = 0; u < S; ++u) {
            up.coeffs[var(s, a, h, u)] = -set.upper(s, a, t);
            down.coeffs[var(s, a, h, u)] = set.lower(s, a, t);
          }
          up.coeffs[var(s, a, h, t)] += 1.0;
          down.coeffs[var(s, a, h, t)] -= 1.0;
          p.inequalities.push_back(std::move(up));
          p.inequalities.push_back(std::move(down));
        }
      }
    }
  }
  if (!model.costs.empty()) {
    lp::InequalityRow cost{std::vector<double>(n, 0.0), span_bound, lp::RowSense::LessEqual};
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
          for (std::size_t t = 0; t < S; ++t) cost.coeffs[var(s, a, h, t)] = model.c(0, s, a);
        }
      }
    }
    p.inequalities.push_back(std::move(cost));
  }
  return p;
}

Opt1Result solve_opt1_lp(const TabularCmdp& model, std::size_t start, const BernsteinSet& set, std::size_t horizon,
                         double span_bound) {
  const auto problem = build_opt1_lp(model, start, set, horizon, span_bound);
  const auto sol = lp::solve(problem);
  if (sol.status == lp::LpStatus::Infeasible) {
    throw Error(ErrorCode::Infeasible, "no occupancy in the confidence set meets the cost bound");
  }
  if (sol.status != lp::LpStatus::Optimal) throw Error(ErrorCode::NumericalBreakdown, "OPT1 LP is unbounded");
  Opt1Result out;
  out.occupancy = {model.num_states, model.num_actions, horizon, start, sol.primal};
  for (double& v : out.occupancy.nu) v = std::max(v, 0.0);
  out.objective = sol.objective_value;
  if (!model.costs.empty()) {
    for (std::size_t i = 0; i < out.occupancy.nu.size(); ++i) {
      const std::size_t sa = (i / model.num_states) % (model.num_states * model.num_actions);
      out.cost += out.occupancy.nu[i] * model.costs[0][sa];
    }
    out.multiplier = std::max(0.0, sol.duals.back());
  }
  return out;
}

NonStationaryPolicy NonStationaryPolicy::repeat(const StationaryPolicy& policy, std::size_t horizon) {
  NonStationaryPolicy out{policy.num_states, policy.num_actions, horizon, {}};
  for (std::size_t h = 0; h < horizon; ++h) out.probs.insert(out.probs.end(), policy.probs.begin(), policy.probs.end());
  return out;
}

NonStationaryPolicy extract_nonstationary(const FiniteHorizonOccupancy& occ, double dust_tol) {
  const std::size_t S = occ.num_states, A = occ.num_actions;
  NonStationaryPolicy pi{S, A, occ.horizon, std::vector<double>(occ.horizon * S * A)};
  for (std::size_t h = 0; h < occ.horizon; ++h) {
    for (std::size_t s = 0; s < S; ++s) {
      const double total = occ.state_mass(s, h);
      for (std::size_t a = 0; a < A; ++a) {
        pi.probs[(h * S + s) * A + a] =
            total > dust_tol ? occ.pair_mass(s, a, h) / total : 1.0 / static_cast<double>(A);
      }
    }
  }
  return pi;
}

double finite_horizon_value(const TabularCmdp& model, const NonStationaryPolicy& policy, std::size_t start,
                            std::size_t channel) {
  const std::size_t S = model.num_states, A = model.num_actions;
  if (policy.num_states != S || policy.num_actions != A) throw Error(ErrorCode::ShapeMismatch, "policy shape");
  if (channel > model.num_channels()) throw Error(ErrorCode::ShapeMismatch, "no such channel");
  const auto& signal = channel == 0 ? model.reward : model.costs[channel - 1];
  std::vector<double> next(S, 0.0), value(S);
  for (std::size_t h = policy.horizon; h-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double v = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        const double prob = policy.row(s, h)[a];
        if (prob == 0.0) continue;
        double future = 0.0;
        for (std::size_t t = 0; t < S; ++t) future += model.p(s, a, t) * next[t];
        v += prob * (signal[s * A + a] + future);
      }
      value[s] = v;
    }
    std::swap(value, next);
  }
  return next[start];
}

double finite_horizon_optimum(const TabularCmdp& model, std::size_t start, std::size_t horizon) {
  const std::size_t S = model.num_states, A = model.num_actions;
  std::vector<double> next(S, 0.0), value(S);
  for (std::size_t h = horizon; h-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < A; ++a) {
        double q = model.r(s, a);
        for (std::size_t t = 0; t < S; ++t) q += model.p(s, a, t) * next[t];
        best = std::max(best, q);
      }
      value[s] = best;
    }
    std::swap(value, next);
  }
  return next[start];
}

double cost_span_bound(const TabularCmdp& model) {
  if (model.num_channels() == 0) throw Error(ErrorCode::ConfigInvalid, "model has no cost channel");
  const auto eval = evaluate_unichain(model, extract_policy(solve_true_model(model).occupancy));
  const auto& bias = eval.bias.at(1);
  return *std::max_element(bias.begin(), bias.end()) - *std::min_element(bias.begin(), bias.end());
}

FhaLearner::FhaLearner(const TabularCmdp& model, FhaConfig config, Rng rng)
    : signals_(model),
      config_(config),
      counts_(model.num_states, model.num_actions),
      action_rng_(rng.split("actions")) {
  model.validate();
  if (model.num_channels() != 1) throw Error(ErrorCode::ConfigInvalid, "finite-horizon learner needs one cost channel");
  schedule_ = fha_schedule(config.horizon, model.num_states, model.num_actions);
  span_bound_ = config.span_bound ? *config.span_bound : cost_span_bound(model);
  if (!(span_bound_ >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "span bound must be >= 0");
  // The kernel is hidden from the learner.
  std::fill(signals_.transition.begin(), signals_.transition.end(), 1.0 / static_cast<double>(model.num_states));
}

std::size_t FhaLearner::act(std::size_t state) {
  if (step_in_episode_ == 0 && episodes_.size() < schedule_.episodes) plan(state);
  return inverse_cdf(policy_.row(state, step_in_episode_), action_rng_.uniform());
}

void FhaLearner::observe(std::size_t state, std::size_t action, std::size_t next_state) {
  counts_.record(state, action, next_state);
  ++time_;
  if (++step_in_episode_ == schedule_.episode_length) step_in_episode_ = 0;
}

void FhaLearner::plan(std::size_t state) {
  const auto t0 = std::chrono::steady_clock::now();
  set_ = BernsteinSet::from_counts(signals_.num_states, signals_.num_actions, counts_.triple, config_.horizon,
                                   config_.delta);
  const auto res = solve_opt1(signals_, state, set_, schedule_.episode_length, span_bound_);
  policy_ = extract_nonstationary(res.occupancy);

  FhaEpisode ep;
  ep.episode = episodes_.size() + 1;
  ep.start_time = time_ + 1;
  ep.start_state = state;
  ep.objective = res.objective;
  ep.cost = res.cost;
  ep.multiplier = res.multiplier;
  ep.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  episodes_.push_back(ep);

  EpochRecord rec;
  rec.epoch = ep.episode;
  rec.start_time = ep.start_time;
  rec.objective = ep.objective;
  rec.status = "optimal";
  rec.dual = ep.multiplier;
  rec.solve_seconds = ep.solve_seconds;
  epochs_.push_back(std::move(rec));
}

// Wall-clock solve times are left out so logs stay reproducible.
void FhaLearner::write_epoch_log(std::ostream& out) const {
  out << "episode,start_time,start_state,objective,cost,multiplier\n";
  for (const auto& e : episodes_) {
    out << e.episode << ',' << e.start_time << ',' << e.start_state << ',' << format_double(e.objective) << ','
        << format_double(e.cost) << ',' << format_double(e.multiplier) << '\n';
  }
}

RegretLedger fha_run(const TabularCmdp& env, std::size_t horizon, std::optional<double> span_bound, double delta,
                     Rng rng) {
  const double gain = solve_true_model(env).objective;
  FhaLearner learner(env, {horizon, delta, span_bound}, rng.split("learner"));
  return play(env, learner, horizon, rng.split("env"), gain, trace_interval(horizon));
}

}  // namespace cmdplab
