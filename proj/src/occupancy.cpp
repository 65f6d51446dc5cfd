#include "cmdplab/occupancy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cmdplab/error.hpp"

namespace cmdplab {
namespace {

constexpr double kPricingTol = 1e-8;
constexpr double kPhaseOneTol = 1e-9;
constexpr std::size_t kMaxRounds = 2000;

double tightening(Tightening eps, std::size_t channel, std::size_t channels) {
  if (eps.empty()) return 0.0;
  if (eps.size() == 1) return eps[0];
  if (eps.size() != channels) throw Error(ErrorCode::ShapeMismatch, "one tightening per cost channel expected");
  return eps[channel];
}

void check_tightening(Tightening eps, std::size_t channels) {
  if (!eps.empty() && eps.size() != 1 && eps.size() != channels) {
    throw Error(ErrorCode::ShapeMismatch, "one tightening per cost channel expected");
  }
  for (double e : eps) {
    if (!(e >= 0.0) || !std::isfinite(e)) throw Error(ErrorCode::MalformedProblem, "tightening must be finite and >= 0");
  }
}

void check_inputs(const OptimisticInputs& in) {
  if (in.model == nullptr) throw Error(ErrorCode::MalformedProblem, "optimistic program without a model");
  const auto& m = *in.model;
  const std::size_t S = m.num_states, SA = S * m.num_actions;
  if (in.transition_estimate.size() != SA * S || in.radius.size() != SA) {
    throw Error(ErrorCode::ShapeMismatch, "estimate or radius table size");
  }
  for (std::size_t sa = 0; sa < SA; ++sa) {
    double sum = 0.0;
    for (std::size_t t = 0; t < S; ++t) {
      const double v = in.transition_estimate[sa * S + t];
      if (!(v >= 0.0)) throw Error(ErrorCode::MalformedProblem, "negative transition estimate");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::MalformedProblem, "transition estimate row is not a distribution");
    if (!(in.radius[sa] >= 0.0)) throw Error(ErrorCode::MalformedProblem, "negative confidence radius");
  }
}

// One master column: play pair `sa` and move according to `next`.
struct Column {
  std::size_t sa;
  std::vector<double> next;
};

// argmin of y.p over {p in simplex : |p - center|_1 <= radius}: shift up to
// radius/2 mass onto the cheapest state, taken from the dearest states first.
std::vector<double> cheapest_vertex(std::span<const double> center, double radius, std::span<const double> y,
                                    std::vector<std::size_t>& order) {
  const std::size_t S = center.size();
  std::vector<double> p(center.begin(), center.end());
  std::size_t target = 0;
  for (std::size_t t = 1; t < S; ++t) {
    if (y[t] < y[target]) target = t;
  }
  double moved = std::min(0.5 * radius, 1.0 - p[target]);
  if (moved <= 0.0) return p;
  p[target] += moved;
  order.resize(S);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  for (std::size_t t : order) {
    if (t == target) continue;
    const double take = std::min(p[t], moved);
    p[t] -= take;
    moved -= take;
    if (moved <= 0.0) break;
  }
  return p;
}

class ColumnGeneration {
 public:
  ColumnGeneration(const OptimisticInputs& in, Tightening eps, CostRows rows)
      : in_(in), m_(*in.model), S_(m_.num_states), K_(m_.num_channels()), rows_(rows) {
    for (std::size_t k = 0; k < K_; ++k) eps_.push_back(tightening(eps, k, K_));
    for (std::size_t sa = 0; sa < S_ * m_.num_actions; ++sa) {
      columns_.push_back({sa, {in.transition_estimate.begin() + static_cast<std::ptrdiff_t>(sa * S_),
                               in.transition_estimate.begin() + static_cast<std::ptrdiff_t>((sa + 1) * S_)}});
    }
  }

  OptimisticResult run() {
    // Phase one: cost rows get elastic slack; drive the slack to zero.
    double total_slack = 0.0;
    if (K_ > 0) {
      const double slack = optimize(true);
      if (slack < -kPhaseOneTol) {
        if (rows_ == CostRows::Strict) {
          throw Error(ErrorCode::Infeasible, "no kernel in the confidence set satisfies the tightened costs");
        }
        for (std::size_t k = 0; k < K_; ++k) eps_[k] -= sigma_[k];
        total_slack = -slack;
      }
    }
    const double objective = optimize(false);

    OptimisticResult out;
    out.occupancy.num_states = S_;
    out.occupancy.num_actions = m_.num_actions;
    out.occupancy.z.assign(S_ * m_.num_actions * S_, 0.0);
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      const double w = weights_[j];
      if (w <= 0.0) continue;
      for (std::size_t t = 0; t < S_; ++t) out.occupancy.z[columns_[j].sa * S_ + t] += w * columns_[j].next[t];
    }
    out.objective = objective;
    out.slack = total_slack;
    out.columns = columns_.size();
    out.rounds = rounds_;
    return out;
  }

 private:
  // Mass row, S-1 flow rows (the last is implied), K cost rows.
  lp::LpProblem master(bool phase_one) const {
    const std::size_t n = columns_.size() + (phase_one ? K_ : 0);
    lp::LpProblem p;
    p.objective.assign(n, 0.0);
    lp::EqualityRow mass{std::vector<double>(n, 0.0), 1.0};
    std::vector<lp::EqualityRow> flow(S_ - 1, lp::EqualityRow{std::vector<double>(n, 0.0), 0.0});
    std::vector<lp::InequalityRow> cost(K_);
    for (std::size_t k = 0; k < K_; ++k) cost[k] = {std::vector<double>(n, 0.0), -eps_[k], lp::RowSense::LessEqual};

    for (std::size_t j = 0; j < columns_.size(); ++j) {
      const auto& col = columns_[j];
      const std::size_t s = col.sa / m_.num_actions;
      if (!phase_one) p.objective[j] = m_.reward[col.sa];
      mass.coeffs[j] = 1.0;
      for (std::size_t t = 0; t + 1 < S_; ++t) flow[t].coeffs[j] = col.next[t] - (t == s ? 1.0 : 0.0);
      for (std::size_t k = 0; k < K_; ++k) cost[k].coeffs[j] = m_.costs[k][col.sa];
    }
    if (phase_one) {
      for (std::size_t k = 0; k < K_; ++k) {
        p.objective[columns_.size() + k] = -1.0;
        cost[k].coeffs[columns_.size() + k] = -1.0;
      }
    }
    p.equalities.push_back(std::move(mass));
    for (auto& row : flow) p.equalities.push_back(std::move(row));
    p.inequalities = std::move(cost);
    return p;
  }

  double optimize(bool phase_one) {
    std::vector<double> y(S_, 0.0);
    std::vector<std::size_t> order;
    for (std::size_t round = 0; round < kMaxRounds; ++round, ++rounds_) {
      const auto problem = master(phase_one);
      const auto sol = lp::solve(problem);
      if (sol.status != lp::LpStatus::Optimal) {
        throw Error(ErrorCode::NumericalBreakdown, "restricted master is " + std::string(lp::to_string(sol.status)));
      }
      weights_.assign(sol.primal.begin(), sol.primal.begin() + static_cast<std::ptrdiff_t>(columns_.size()));
      if (phase_one) {
        sigma_.assign(sol.primal.begin() + static_cast<std::ptrdiff_t>(columns_.size()), sol.primal.end());
        if (sol.objective_value >= -kPhaseOneTol) return sol.objective_value;
      }

      const double mass_dual = sol.duals[0];
      for (std::size_t t = 0; t + 1 < S_; ++t) y[t] = sol.duals[1 + t];
      y[S_ - 1] = 0.0;
      const double* cost_dual = sol.duals.data() + S_;

      std::size_t added = 0;
      for (std::size_t sa = 0; sa < S_ * m_.num_actions; ++sa) {
        const std::size_t s = sa / m_.num_actions;
        const std::span<const double> center(in_.transition_estimate.data() + sa * S_, S_);
        auto next = cheapest_vertex(center, in_.radius[sa], y, order);
        double reduced = (phase_one ? 0.0 : m_.reward[sa]) - mass_dual + y[s];
        for (std::size_t t = 0; t < S_; ++t) reduced -= y[t] * next[t];
        for (std::size_t k = 0; k < K_; ++k) reduced -= cost_dual[k] * m_.costs[k][sa];
        if (reduced <= kPricingTol || known(sa, next)) continue;
        columns_.push_back({sa, std::move(next)});
        ++added;
      }
      if (added == 0) return sol.objective_value;
    }
    throw Error(ErrorCode::NumericalBreakdown, "column generation did not converge");
  }

  bool known(std::size_t sa, const std::vector<double>& next) const {
    for (const auto& col : columns_) {
      if (col.sa != sa) continue;
      double diff = 0.0;
      for (std::size_t t = 0; t < S_; ++t) diff = std::max(diff, std::abs(col.next[t] - next[t]));
      if (diff <= 1e-13) return true;
    }
    return false;
  }

  const OptimisticInputs& in_;
  const TabularCmdp& m_;
  std::size_t S_;
  std::size_t K_;
  CostRows rows_;
  std::vector<double> eps_;
  std::vector<double> sigma_;
  std::vector<Column> columns_;
  std::vector<double> weights_;
  std::size_t rounds_ = 0;
};

}  // namespace

OccupancyMeasure ExtendedOccupancy::marginal() const {
  OccupancyMeasure occ{num_states, num_actions, std::vector<double>(num_states * num_actions, 0.0)};
  for (std::size_t sa = 0; sa < occ.mass.size(); ++sa) {
    for (std::size_t t = 0; t < num_states; ++t) occ.mass[sa] += z[sa * num_states + t];
  }
  return occ;
}

std::vector<double> ExtendedOccupancy::kernel_row(std::size_t s, std::size_t a, double dust_tol) const {
  const std::size_t sa = s * num_actions + a;
  double total = 0.0;
  for (std::size_t t = 0; t < num_states; ++t) total += z[sa * num_states + t];
  if (total <= dust_tol) return {};
  std::vector<double> row(num_states);
  for (std::size_t t = 0; t < num_states; ++t) row[t] = z[sa * num_states + t] / total;
  return row;
}

double occupancy_violation(const OccupancyMeasure& occ, std::span<const double> transition) {
  const std::size_t S = occ.num_states, A = occ.num_actions;
  double worst = std::abs(std::accumulate(occ.mass.begin(), occ.mass.end(), 0.0) - 1.0);
  for (double v : occ.mass) worst = std::max(worst, -v);
  if (!transition.empty()) {
    for (std::size_t t = 0; t < S; ++t) {
      double inflow = 0.0, outflow = 0.0;
      for (std::size_t sa = 0; sa < S * A; ++sa) inflow += transition[sa * S + t] * occ.mass[sa];
      for (std::size_t a = 0; a < A; ++a) outflow += occ.mass[t * A + a];
      worst = std::max(worst, std::abs(inflow - outflow));
    }
  }
  return worst;
}

double occupancy_violation(const ExtendedOccupancy& occ) {
  const std::size_t S = occ.num_states, A = occ.num_actions;
  double worst = std::abs(std::accumulate(occ.z.begin(), occ.z.end(), 0.0) - 1.0);
  for (double v : occ.z) worst = std::max(worst, -v);
  for (std::size_t t = 0; t < S; ++t) {
    double inflow = 0.0, outflow = 0.0;
    for (std::size_t sa = 0; sa < S * A; ++sa) inflow += occ.z[sa * S + t];
    for (std::size_t k = t * A * S; k < (t + 1) * A * S; ++k) outflow += occ.z[k];
    worst = std::max(worst, std::abs(inflow - outflow));
  }
  return worst;
}

OccupancyResult solve_true_model(const TabularCmdp& cmdp, Tightening eps, CostRows rows) {
  cmdp.validate();
  const std::size_t S = cmdp.num_states, A = cmdp.num_actions, SA = S * A, K = cmdp.num_channels();
  check_tightening(eps, K);

  // Variables nu(s,a), then one elastic slack per cost row when requested.
  auto build = [&](bool with_slack, const std::vector<double>& rhs) {
    const std::size_t n = SA + (with_slack ? K : 0);
    lp::LpProblem p;
    p.objective.assign(n, 0.0);
    if (with_slack) {
      for (std::size_t k = 0; k < K; ++k) p.objective[SA + k] = -1.0;
    } else {
      std::copy(cmdp.reward.begin(), cmdp.reward.end(), p.objective.begin());
    }
    lp::EqualityRow mass{std::vector<double>(n, 0.0), 1.0};
    std::fill(mass.coeffs.begin(), mass.coeffs.begin() + static_cast<std::ptrdiff_t>(SA), 1.0);
    p.equalities.push_back(std::move(mass));
    for (std::size_t t = 0; t + 1 < S; ++t) {
      lp::EqualityRow flow{std::vector<double>(n, 0.0), 0.0};
      for (std::size_t sa = 0; sa < SA; ++sa) flow.coeffs[sa] = cmdp.transition[sa * S + t];
      for (std::size_t a = 0; a < A; ++a) flow.coeffs[t * A + a] -= 1.0;
      p.equalities.push_back(std::move(flow));
    }
    for (std::size_t k = 0; k < K; ++k) {
      lp::InequalityRow row{std::vector<double>(n, 0.0), rhs[k], lp::RowSense::LessEqual};
      std::copy(cmdp.costs[k].begin(), cmdp.costs[k].end(), row.coeffs.begin());
      if (with_slack) row.coeffs[SA + k] = -1.0;
      p.inequalities.push_back(std::move(row));
    }
    return p;
  };

  std::vector<double> rhs(K);
  for (std::size_t k = 0; k < K; ++k) rhs[k] = -tightening(eps, k, K);
  auto sol = lp::solve(build(false, rhs));
  double slack = 0.0;
  if (sol.status == lp::LpStatus::Infeasible) {
    if (rows == CostRows::Strict) throw Error(ErrorCode::Infeasible, "tightened constraints admit no occupancy");
    const auto relax = lp::solve(build(true, rhs));
    if (relax.status != lp::LpStatus::Optimal) throw Error(ErrorCode::NumericalBreakdown, "elastic occupancy program failed");
    for (std::size_t k = 0; k < K; ++k) rhs[k] += relax.primal[SA + k];
    slack = -relax.objective_value;
    sol = lp::solve(build(false, rhs));
  }
  if (sol.status != lp::LpStatus::Optimal) {
    throw Error(ErrorCode::NumericalBreakdown, std::string("occupancy program is ") + lp::to_string(sol.status));
  }

  OccupancyResult out;
  out.occupancy = {S, A, sol.primal};
  for (double& v : out.occupancy.mass) v = std::max(v, 0.0);
  out.objective = sol.objective_value;
  out.slack = slack;
  return out;
}

OptimisticResult solve_optimistic(const OptimisticInputs& in, Tightening eps, CostRows rows) {
  check_inputs(in);
  in.model->validate();
  check_tightening(eps, in.model->num_channels());
  return ColumnGeneration(in, eps, rows).run();
}

lp::LpProblem build_optimistic_lp(const OptimisticInputs& in, Tightening eps) {
  check_inputs(in);
  const auto& m = *in.model;
  const std::size_t S = m.num_states, A = m.num_actions, SA = S * A, K = m.num_channels();
  check_tightening(eps, K);
  const std::size_t nz = SA * S, n = 2 * nz;
  auto zi = [&](std::size_t sa, std::size_t t) { return sa * S + t; };
  auto wi = [&](std::size_t sa, std::size_t t) { return nz + sa * S + t; };

  lp::LpProblem p;
  p.objective.assign(n, 0.0);
  for (std::size_t sa = 0; sa < SA; ++sa) {
    for (std::size_t t = 0; t < S; ++t) p.objective[zi(sa, t)] = m.reward[sa];
  }

  lp::EqualityRow mass{std::vector<double>(n, 0.0), 1.0};
  for (std::size_t j = 0; j < nz; ++j) mass.coeffs[j] = 1.0;
  p.equalities.push_back(std::move(mass));
  for (std::size_t t = 0; t + 1 < S; ++t) {
    lp::EqualityRow flow{std::vector<double>(n, 0.0), 0.0};
    for (std::size_t sa = 0; sa < SA; ++sa) flow.coeffs[zi(sa, t)] += 1.0;
    for (std::size_t a = 0; a < A; ++a) {
      for (std::size_t u = 0; u < S; ++u) flow.coeffs[zi(t * A + a, u)] -= 1.0;
    }
    p.equalities.push_back(std::move(flow));
  }

  for (std::size_t sa = 0; sa < SA; ++sa) {
    const double* center = in.transition_estimate.data() + sa * S;
    for (std::size_t t = 0; t < S; ++t) {
      // +-(z(sa,t) - center(t) * sum_u z(sa,u)) - w(sa,t) <= 0
      for (double sign : {1.0, -1.0}) {
        lp::InequalityRow row{std::vector<double>(n, 0.0), 0.0, lp::RowSense::LessEqual};
        for (std::size_t u = 0; u < S; ++u) row.coeffs[zi(sa, u)] = -sign * center[t];
        row.coeffs[zi(sa, t)] += sign;
        row.coeffs[wi(sa, t)] = -1.0;
        p.inequalities.push_back(std::move(row));
      }
    }
    lp::InequalityRow ball{std::vector<double>(n, 0.0), 0.0, lp::RowSense::LessEqual};
    for (std::size_t u = 0; u < S; ++u) {
      ball.coeffs[wi(sa, u)] = 1.0;
      ball.coeffs[zi(sa, u)] = -in.radius[sa];
    }
    p.inequalities.push_back(std::move(ball));
  }

  for (std::size_t k = 0; k < K; ++k) {
    lp::InequalityRow row{std::vector<double>(n, 0.0), -tightening(eps, k, K), lp::RowSense::LessEqual};
    for (std::size_t sa = 0; sa < SA; ++sa) {
      for (std::size_t t = 0; t < S; ++t) row.coeffs[zi(sa, t)] = m.costs[k][sa];
    }
    p.inequalities.push_back(std::move(row));
  }
  return p;
}

OptimisticResult solve_optimistic_lp(const OptimisticInputs& in, Tightening eps) {
  const auto problem = build_optimistic_lp(in, eps);
  const auto sol = lp::solve(problem);
  if (sol.status == lp::LpStatus::Infeasible) throw Error(ErrorCode::Infeasible, "extended program is infeasible");
  if (sol.status != lp::LpStatus::Optimal) throw Error(ErrorCode::NumericalBreakdown, "extended program unbounded");
  const std::size_t S = in.model->num_states, A = in.model->num_actions;
  OptimisticResult out;
  out.occupancy = {S, A, std::vector<double>(sol.primal.begin(), sol.primal.begin() + static_cast<std::ptrdiff_t>(S * A * S))};
  for (double& v : out.occupancy.z) v = std::max(v, 0.0);
  out.objective = sol.objective_value;
  return out;
}

StationaryPolicy extract_policy(const OccupancyMeasure& occ, double dust_tol) {
  const std::size_t S = occ.num_states, A = occ.num_actions;
  StationaryPolicy pi = StationaryPolicy::uniform(S, A);
  for (std::size_t s = 0; s < S; ++s) {
    double total = 0.0;
    for (std::size_t a = 0; a < A; ++a) total += std::max(occ(s, a), 0.0);
    if (total <= dust_tol) continue;
    for (std::size_t a = 0; a < A; ++a) pi.probs[s * A + a] = std::max(occ(s, a), 0.0) / total;
  }
  return pi;
}

StationaryPolicy extract_policy(const ExtendedOccupancy& occ, double dust_tol) {
  return extract_policy(occ.marginal(), dust_tol);
}

double epsilon_schedule(double k, std::size_t t) {
  if (t <= 1) return k;
  const double tt = static_cast<double>(t);
  return k * std::sqrt(std::log(tt) / tt);
}

std::vector<double> confidence_radii(std::size_t num_states, std::size_t num_actions,
                                     std::span<const std::size_t> counts, std::size_t t) {
  if (counts.size() != num_states * num_actions) throw Error(ErrorCode::ShapeMismatch, "count table size");
  const double numer = 14.0 * static_cast<double>(num_states) *
                       std::log(2.0 * static_cast<double>(num_actions) * static_cast<double>(std::max<std::size_t>(t, 1)));
  std::vector<double> radius(counts.size());
  for (std::size_t sa = 0; sa < counts.size(); ++sa) {
    const double n = static_cast<double>(std::max<std::size_t>(counts[sa], 1));
    radius[sa] = std::min(2.0, std::sqrt(numer / n));
  }
  return radius;
}

}  // namespace cmdplab
