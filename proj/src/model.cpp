#include <Eigen/Dense>

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <numeric>
#include <queue>

#include "cmdplab/error.hpp"
#include "cmdplab/format.hpp"
#include "cmdplab/model.hpp"

namespace cmdplab {
namespace {

constexpr double kRowTol = 1e-12;
constexpr double kStationaryResidual = 1e-10;

void check_distribution(std::span<const double> row, const std::string& what) {
  double sum = 0.0;
  for (double v : row) {
    if (!(v >= 0.0)) throw Error(ErrorCode::MalformedProblem, what + " has a negative entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kRowTol) throw Error(ErrorCode::MalformedProblem, what + " does not sum to 1");
}

void check_range(const std::vector<double>& v, double lo, double hi, const std::string& what) {
  for (double x : v) {
    if (!(x >= lo - kRowTol && x <= hi + kRowTol)) {
      throw Error(ErrorCode::MalformedProblem, what + " outside [" + std::to_string(lo) + ", " +
                                                   std::to_string(hi) + "]");
    }
  }
}

std::vector<std::vector<std::size_t>> support_graph(const MarkovChain& chain, bool reverse) {
  const std::size_t n = chain.num_states;
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = 0; t < n; ++t) {
      if (chain(s, t) > 0.0) {
        if (reverse) adj[t].push_back(s);
        else adj[s].push_back(t);
      }
    }
  }
  return adj;
}

std::vector<long> bfs_levels(const std::vector<std::vector<std::size_t>>& adj) {
  std::vector<long> level(adj.size(), -1);
  std::queue<std::size_t> frontier;
  level[0] = 0;
  frontier.push(0);
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop();
    for (std::size_t v : adj[u]) {
      if (level[v] < 0) {
        level[v] = level[u] + 1;
        frontier.push(v);
      }
    }
  }
  return level;
}

// Unique solution of d (I - P) = 0, sum d = 1; throws when the null space is
// not one-dimensional (several recurrent classes).
std::vector<double> solve_stationary(const MarkovChain& chain) {
  const auto n = static_cast<Eigen::Index>(chain.num_states);
  Eigen::MatrixXd M(n + 1, n);
  for (Eigen::Index s = 0; s < n; ++s) {
    for (Eigen::Index t = 0; t < n; ++t) {
      M(t, s) = (s == t ? 1.0 : 0.0) - chain(static_cast<std::size_t>(s), static_cast<std::size_t>(t));
    }
  }
  M.row(n).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  rhs(n) = 1.0;

  Eigen::FullPivHouseholderQR<Eigen::MatrixXd> qr(M);
  qr.setThreshold(1e-12);
  if (qr.rank() < n) throw Error(ErrorCode::NotErgodic, "stationary distribution is not unique");
  Eigen::VectorXd d = qr.solve(rhs);
  // One step of iterative refinement.
  d += qr.solve(rhs - M * d);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Eigen::Index s = 0; s < n; ++s) out[static_cast<std::size_t>(s)] = std::max(d(s), 0.0);
  const double total = std::accumulate(out.begin(), out.end(), 0.0);
  for (double& v : out) v /= total;
  return out;
}

double stationary_residual(const MarkovChain& chain, const std::vector<double>& d) {
  double worst = 0.0;
  for (std::size_t t = 0; t < chain.num_states; ++t) {
    double flow = 0.0;
    for (std::size_t s = 0; s < chain.num_states; ++s) flow += d[s] * chain(s, t);
    worst = std::max(worst, std::abs(flow - d[t]));
  }
  return worst;
}

std::vector<double> channel_table(const TabularCmdp& cmdp, std::size_t channel) {
  return channel == 0 ? cmdp.reward : cmdp.costs[channel - 1];
}

PolicyEvaluation evaluate_with(const TabularCmdp& cmdp, const StationaryPolicy& policy,
                               const MarkovChain& chain, std::vector<double> d) {
  const std::size_t S = cmdp.num_states;
  const std::size_t A = cmdp.num_actions;
  const auto n = static_cast<Eigen::Index>(S);

  Eigen::MatrixXd system(n + 1, n);
  for (Eigen::Index s = 0; s < n; ++s) {
    for (Eigen::Index t = 0; t < n; ++t) {
      system(s, t) = (s == t ? 1.0 : 0.0) - chain(static_cast<std::size_t>(s), static_cast<std::size_t>(t));
    }
    system(n, s) = d[static_cast<std::size_t>(s)];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(system);
  qr.setThreshold(1e-12);
  if (qr.rank() < n) throw Error(ErrorCode::SingularSystem, "bias system is rank deficient");

  PolicyEvaluation ev;
  ev.stationary_distribution = std::move(d);
  const std::size_t channels = cmdp.num_channels() + 1;
  for (std::size_t ch = 0; ch < channels; ++ch) {
    const std::vector<double> g = channel_table(cmdp, ch);
    std::vector<double> g_pi(S, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t a = 0; a < A; ++a) g_pi[s] += policy(s, a) * g[cmdp.pair(s, a)];
    }
    double gain = 0.0;
    for (std::size_t s = 0; s < S; ++s) gain += ev.stationary_distribution[s] * g_pi[s];

    Eigen::VectorXd rhs(n + 1);
    for (Eigen::Index s = 0; s < n; ++s) rhs(s) = g_pi[static_cast<std::size_t>(s)] - gain;
    rhs(n) = 0.0;
    Eigen::VectorXd v = qr.solve(rhs);
    v += qr.solve(rhs - system * v);
    if ((system * v - rhs).cwiseAbs().maxCoeff() > 1e-9) {
      throw Error(ErrorCode::SingularSystem, "bias system has no consistent solution");
    }

    std::vector<double> bias(S);
    for (std::size_t s = 0; s < S; ++s) bias[s] = v(static_cast<Eigen::Index>(s));
    std::vector<double> q(S * A), adv(S * A);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t a = 0; a < A; ++a) {
        double next = 0.0;
        const auto row = cmdp.row(s, a);
        for (std::size_t t = 0; t < S; ++t) next += row[t] * bias[t];
        q[cmdp.pair(s, a)] = g[cmdp.pair(s, a)] - gain + next;
        adv[cmdp.pair(s, a)] = q[cmdp.pair(s, a)] - bias[s];
      }
    }
    ev.gain.push_back(gain);
    ev.bias.push_back(std::move(bias));
    ev.q.push_back(std::move(q));
    ev.advantage.push_back(std::move(adv));
  }
  return ev;
}

void multiply(const MarkovChain& a, const MarkovChain& b, MarkovChain& out) {
  const std::size_t n = a.num_states;
  out.num_states = n;
  out.p.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a.p[i * n + k];
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out.p[i * n + j] += aik * b.p[k * n + j];
    }
  }
}

double worst_tv(const MarkovChain& power, std::span<const double> d) {
  double worst = 0.0;
  for (std::size_t s = 0; s < power.num_states; ++s) {
    double l1 = 0.0;
    for (std::size_t t = 0; t < power.num_states; ++t) l1 += std::abs(power(s, t) - d[t]);
    worst = std::max(worst, 0.5 * l1);
  }
  return worst;
}

}  // namespace

void TabularCmdp::validate() const {
  const std::size_t SA = num_states * num_actions;
  if (num_states == 0 || num_actions == 0) throw Error(ErrorCode::ShapeMismatch, "empty state or action set");
  if (reward.size() != SA) throw Error(ErrorCode::ShapeMismatch, "reward table size");
  if (transition.size() != SA * num_states) throw Error(ErrorCode::ShapeMismatch, "transition table size");
  if (initial_distribution.size() != num_states) throw Error(ErrorCode::ShapeMismatch, "initial distribution size");
  if (channel_names.size() != costs.size()) throw Error(ErrorCode::ShapeMismatch, "channel name count");
  if (!cost_units.empty() && cost_units.size() != costs.size()) {
    throw Error(ErrorCode::ShapeMismatch, "cost unit count");
  }
  check_range(reward, 0.0, 1.0, "reward");
  for (std::size_t k = 0; k < costs.size(); ++k) {
    if (costs[k].size() != SA) throw Error(ErrorCode::ShapeMismatch, "cost table size");
    check_range(costs[k], -1.0, 1.0, "cost channel " + channel_names[k]);
  }
  for (std::size_t s = 0; s < num_states; ++s) {
    for (std::size_t a = 0; a < num_actions; ++a) {
      check_distribution(row(s, a), "transition row (" + std::to_string(s) + "," + std::to_string(a) + ")");
    }
  }
  check_distribution(initial_distribution, "initial distribution");
}

StationaryPolicy StationaryPolicy::uniform(std::size_t num_states, std::size_t num_actions) {
  return {num_states, num_actions,
          std::vector<double>(num_states * num_actions, 1.0 / static_cast<double>(num_actions))};
}

StationaryPolicy StationaryPolicy::deterministic(std::size_t num_actions, const std::vector<std::size_t>& choice) {
  StationaryPolicy p{choice.size(), num_actions, std::vector<double>(choice.size() * num_actions, 0.0)};
  for (std::size_t s = 0; s < choice.size(); ++s) p.probs[s * num_actions + choice[s]] = 1.0;
  return p;
}

void StationaryPolicy::validate() const {
  if (probs.size() != num_states * num_actions) throw Error(ErrorCode::ShapeMismatch, "policy table size");
  for (std::size_t s = 0; s < num_states; ++s) check_distribution(row(s), "policy row " + std::to_string(s));
}

MarkovChain induced_chain(const TabularCmdp& cmdp, const StationaryPolicy& policy) {
  if (policy.num_states != cmdp.num_states || policy.num_actions != cmdp.num_actions ||
      policy.probs.size() != cmdp.num_states * cmdp.num_actions) {
    throw Error(ErrorCode::ShapeMismatch, "policy shape does not match model");
  }
  const std::size_t S = cmdp.num_states;
  MarkovChain chain{S, std::vector<double>(S * S, 0.0)};
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < cmdp.num_actions; ++a) {
      const double w = policy(s, a);
      if (w == 0.0) continue;
      const auto row = cmdp.row(s, a);
      for (std::size_t t = 0; t < S; ++t) chain.p[s * S + t] += w * row[t];
    }
  }
  return chain;
}

bool is_ergodic(const MarkovChain& chain) {
  const std::size_t n = chain.num_states;
  if (n == 0) return false;
  const auto forward = support_graph(chain, false);
  const auto level = bfs_levels(forward);
  const auto back = bfs_levels(support_graph(chain, true));
  for (std::size_t s = 0; s < n; ++s) {
    if (level[s] < 0 || back[s] < 0) return false;
  }
  // Period = gcd over edges u->v of level(u) + 1 - level(v).
  long period = 0;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v : forward[u]) period = std::gcd(period, std::abs(level[u] + 1 - level[v]));
  }
  return period == 1;
}

std::vector<double> stationary_distribution(const MarkovChain& chain) {
  if (!is_ergodic(chain)) throw Error(ErrorCode::NotErgodic, "chain is reducible or periodic");
  auto d = solve_stationary(chain);
  if (stationary_residual(chain, d) > kStationaryResidual) {
    throw Error(ErrorCode::NotErgodic, "stationary solve did not converge");
  }
  return d;
}

PolicyEvaluation evaluate_policy(const TabularCmdp& cmdp, const StationaryPolicy& policy) {
  const MarkovChain chain = induced_chain(cmdp, policy);
  return evaluate_with(cmdp, policy, chain, stationary_distribution(chain));
}

PolicyEvaluation evaluate_unichain(const TabularCmdp& cmdp, const StationaryPolicy& policy) {
  const MarkovChain chain = induced_chain(cmdp, policy);
  auto d = solve_stationary(chain);
  if (stationary_residual(chain, d) > kStationaryResidual) {
    throw Error(ErrorCode::NotErgodic, "stationary solve did not converge");
  }
  return evaluate_with(cmdp, policy, chain, std::move(d));
}

double worst_tv_distance(const MarkovChain& chain, std::size_t t, std::span<const double> stationary) {
  MarkovChain power = chain;
  MarkovChain next;
  for (std::size_t k = 1; k < t; ++k) {
    multiply(power, chain, next);
    std::swap(power, next);
  }
  return worst_tv(power, stationary);
}

std::size_t mixing_time(const MarkovChain& chain, std::size_t cap) {
  const auto d = stationary_distribution(chain);
  MarkovChain power = chain;
  MarkovChain next;
  for (std::size_t t = 1; t <= cap; ++t) {
    if (worst_tv(power, d) <= 0.25) return t;
    multiply(power, chain, next);
    std::swap(power, next);
  }
  throw Error(ErrorCode::MixingCap, "mixing time exceeds " + std::to_string(cap));
}

std::size_t mixing_time(const TabularCmdp& cmdp, const StationaryPolicy& policy, std::size_t cap) {
  return mixing_time(induced_chain(cmdp, policy), cap);
}

double hitting_time(std::span<const double> stationary) {
  double worst = 0.0;
  for (double v : stationary) {
    if (!(v > 0.0)) throw Error(ErrorCode::NotErgodic, "state with zero stationary mass");
    worst = std::max(worst, 1.0 / v);
  }
  return worst;
}

double hitting_time(const TabularCmdp& cmdp, const StationaryPolicy& policy) {
  return hitting_time(stationary_distribution(induced_chain(cmdp, policy)));
}

std::size_t inverse_cdf(std::span<const double> row, double u) {
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (row[i] <= 0.0) continue;
    cumulative += row[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  return last_positive;
}

StepOutcome sample_step(const TabularCmdp& cmdp, std::size_t state, std::size_t action, Rng& rng) {
  if (state >= cmdp.num_states || action >= cmdp.num_actions) {
    throw Error(ErrorCode::ShapeMismatch, "state or action index out of range");
  }
  StepOutcome out;
  out.next_state = inverse_cdf(cmdp.row(state, action), rng.uniform());
  out.reward = cmdp.r(state, action);
  out.costs.resize(cmdp.num_channels());
  for (std::size_t k = 0; k < cmdp.num_channels(); ++k) out.costs[k] = cmdp.c(k, state, action);
  return out;
}

std::size_t sample_initial_state(const TabularCmdp& cmdp, Rng& rng) {
  return inverse_cdf(cmdp.initial_distribution, rng.uniform());
}

namespace {

void write_row(std::ostream& out, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) out << (i ? " " : "") << format_double(values[i]);
  out << '\n';
}

void expect(std::istream& in, const std::string& word) {
  std::string got;
  if (!(in >> got) || got != word) {
    throw Error(ErrorCode::MalformedProblem, "model file: expected '" + word + "', got '" + got + "'");
  }
}

double read_number(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw Error(ErrorCode::MalformedProblem, "model file: unexpected end of input");
  // strtod accepts the inf/nan spellings that operator>> rejects; validate()
  // rejects them afterwards.
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw Error(ErrorCode::MalformedProblem, "model file: bad number '" + tok + "'");
  return v;
}

std::size_t read_count(std::istream& in, const std::string& key) {
  expect(in, key);
  const double v = read_number(in);
  if (v < 0 || v != std::floor(v)) throw Error(ErrorCode::MalformedProblem, "model file: bad " + key);
  return static_cast<std::size_t>(v);
}

void read_values(std::istream& in, std::vector<double>& out, std::size_t n) {
  out.resize(n);
  for (auto& v : out) v = read_number(in);
}

}  // namespace

void write_cmdp(const TabularCmdp& cmdp, std::ostream& out) {
  cmdp.validate();
  out << "cmdplab-model 1\n";
  out << "states " << cmdp.num_states << "\nactions " << cmdp.num_actions << "\nchannels " << cmdp.num_channels()
      << '\n';
  out << "reward_scale " << format_double(cmdp.reward_units.scale) << '\n';
  for (std::size_t k = 0; k < cmdp.num_channels(); ++k) {
    const double scale = cmdp.cost_units.empty() ? 1.0 : cmdp.cost_units[k].scale;
    out << "channel " << cmdp.channel_names[k] << ' ' << format_double(scale) << '\n';
  }
  out << "initial\n";
  write_row(out, cmdp.initial_distribution);
  out << "reward\n";
  for (std::size_t s = 0; s < cmdp.num_states; ++s) {
    write_row(out, {cmdp.reward.data() + s * cmdp.num_actions, cmdp.num_actions});
  }
  for (std::size_t k = 0; k < cmdp.num_channels(); ++k) {
    out << "cost " << cmdp.channel_names[k] << '\n';
    for (std::size_t s = 0; s < cmdp.num_states; ++s) {
      write_row(out, {cmdp.costs[k].data() + s * cmdp.num_actions, cmdp.num_actions});
    }
  }
  out << "transition\n";
  for (std::size_t s = 0; s < cmdp.num_states; ++s) {
    for (std::size_t a = 0; a < cmdp.num_actions; ++a) write_row(out, cmdp.row(s, a));
  }
  out << "end\n";
}

TabularCmdp read_cmdp(std::istream& in) {
  expect(in, "cmdplab-model");
  expect(in, "1");
  TabularCmdp m;
  m.num_states = read_count(in, "states");
  m.num_actions = read_count(in, "actions");
  const std::size_t channels = read_count(in, "channels");
  expect(in, "reward_scale");
  m.reward_units.scale = read_number(in);
  for (std::size_t k = 0; k < channels; ++k) {
    expect(in, "channel");
    std::string name;
    in >> name;
    m.channel_names.push_back(name);
    m.cost_units.push_back({read_number(in)});
  }
  const std::size_t S = m.num_states, A = m.num_actions;
  expect(in, "initial");
  read_values(in, m.initial_distribution, S);
  expect(in, "reward");
  read_values(in, m.reward, S * A);
  m.costs.resize(channels);
  for (std::size_t k = 0; k < channels; ++k) {
    expect(in, "cost");
    expect(in, m.channel_names[k]);
    read_values(in, m.costs[k], S * A);
  }
  expect(in, "transition");
  read_values(in, m.transition, S * A * S);
  expect(in, "end");
  m.validate();
  return m;
}

void save_cmdp(const TabularCmdp& cmdp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
  write_cmdp(cmdp, out);
  if (!out) throw Error(ErrorCode::Io, "write to " + path + " failed");
}

TabularCmdp load_cmdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return read_cmdp(in);
}

}  // namespace cmdplab
