#include "cmdplab/envs.hpp"

#include <algorithm>
#include <cmath>

#include "cmdplab/error.hpp"

namespace cmdplab {
namespace {

void check_open_unit(const std::vector<double>& values, const char* what) {
  if (values.empty()) throw Error(ErrorCode::ConfigInvalid, std::string(what) + " action list is empty");
  for (double v : values) {
    if (!(v > 0.0 && v < 1.0)) throw Error(ErrorCode::ConfigInvalid, std::string(what) + " actions must lie in (0,1)");
  }
}

// Negate and rescale into [-1,1]; returns the scale that maps back.
double normalize_cost(std::vector<double>& cost) {
  double peak = 0.0;
  for (double v : cost) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) peak = 1.0;
  for (double& v : cost) v = -v / peak;
  return -peak;
}

}  // namespace

TabularCmdp build_queue(const QueueConfig& config) {
  if (config.buffer < 1) throw Error(ErrorCode::ConfigInvalid, "queue buffer must be at least 1");
  // Reward 5 - s must stay non-negative to fit [0,1] after dividing by 5.
  if (config.buffer > 5) throw Error(ErrorCode::ConfigInvalid, "queue buffer above 5 gives negative rewards");
  check_open_unit(config.service_actions, "service");
  check_open_unit(config.flow_actions, "flow");

  const std::size_t L = config.buffer;
  const std::size_t S = L + 1;
  const std::size_t A = config.service_actions.size() * config.flow_actions.size();

  TabularCmdp m;
  m.num_states = S;
  m.num_actions = A;
  m.reward.resize(S * A);
  m.channel_names = {"service", "flow"};
  m.costs.assign(2, std::vector<double>(S * A));
  m.transition.assign(S * A * S, 0.0);
  m.initial_distribution.assign(S, 1.0 / static_cast<double>(S));

  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t i = 0; i < config.service_actions.size(); ++i) {
      for (std::size_t j = 0; j < config.flow_actions.size(); ++j) {
        const double a = config.service_actions[i];
        const double b = config.flow_actions[j];
        const std::size_t sa = m.pair(s, config.action_index(i, j));
        m.reward[sa] = 5.0 - static_cast<double>(s);
        m.costs[0][sa] = -10.0 * a + 6.0;
        m.costs[1][sa] = -8.0 * (1.0 - b) * (1.0 - b) + 2.0;

        double* row = m.transition.data() + sa * S;
        if (s == 0) {
          row[0] = 1.0 - b * (1.0 - a);
          row[1] = b * (1.0 - a);
        } else if (s == L) {
          row[L - 1] = a;
          row[L] = 1.0 - a;
        } else {
          row[s - 1] = a * (1.0 - b);
          row[s] = a * b + (1.0 - a) * (1.0 - b);
          row[s + 1] = (1.0 - a) * b;
        }
      }
    }
  }

  for (double& r : m.reward) r /= 5.0;
  m.reward_units.scale = 5.0;
  m.cost_units.push_back({normalize_cost(m.costs[0])});
  m.cost_units.push_back({normalize_cost(m.costs[1])});
  m.validate();
  return m;
}

TabularCmdp random_ergodic_cmdp(std::size_t num_states, std::size_t num_actions, std::size_t num_channels,
                                Rng& rng, double floor) {
  if (num_states == 0 || num_actions == 0) throw Error(ErrorCode::ConfigInvalid, "empty state or action set");
  const double S = static_cast<double>(num_states);
  if (!(floor > 0.0 && floor <= 1.0 / S)) throw Error(ErrorCode::ConfigInvalid, "mixing floor must lie in (0, 1/S]");

  TabularCmdp m;
  m.num_states = num_states;
  m.num_actions = num_actions;
  const std::size_t SA = num_states * num_actions;

  const std::vector<double> ones(num_states, 1.0);
  m.transition.resize(SA * num_states);
  for (std::size_t sa = 0; sa < SA; ++sa) {
    const auto draw = dirichlet(ones, rng);
    for (std::size_t t = 0; t < num_states; ++t) {
      m.transition[sa * num_states + t] = (1.0 - S * floor) * draw[t] + floor;
    }
  }
  m.reward.resize(SA);
  for (double& r : m.reward) r = rng.uniform();
  for (std::size_t k = 0; k < num_channels; ++k) {
    m.channel_names.push_back("cost" + std::to_string(k));
    m.costs.emplace_back(SA);
    for (double& c : m.costs.back()) c = 2.0 * rng.uniform() - 1.0;
    m.cost_units.push_back({1.0});
  }
  m.initial_distribution.assign(num_states, 1.0 / S);
  m.validate();
  return m;
}

TabularCmdp weakly_communicating_chain(std::size_t n, double p_forward, Rng& rng, double reward_jitter) {
  if (n < 3) throw Error(ErrorCode::ConfigInvalid, "chain needs at least 3 states");
  if (!(p_forward > 0.0 && p_forward <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "p_forward must lie in (0,1]");
  if (!(reward_jitter >= 0.0 && reward_jitter < 1.0)) throw Error(ErrorCode::ConfigInvalid, "reward jitter must lie in [0,1)");

  TabularCmdp m;
  m.num_states = n;
  m.num_actions = 2;
  m.reward.assign(2 * n, 0.0);
  m.channel_names = {"effort"};
  m.costs.assign(1, std::vector<double>(2 * n));
  m.cost_units.push_back({1.0});
  m.transition.assign(2 * n * n, 0.0);
  m.initial_distribution.assign(n, 0.0);
  m.initial_distribution[0] = 1.0;

  const double slip = 0.5 * (1.0 - p_forward);
  for (std::size_t s = 0; s < n; ++s) {
    double* left = m.transition.data() + m.pair(s, kLeft) * n;
    double* right = m.transition.data() + m.pair(s, kRight) * n;
    left[s == 0 ? 0 : s - 1] = 1.0;
    if (s + 1 < n) {
      right[s + 1] += p_forward;
      right[s] += slip;
      right[s == 0 ? 0 : s - 1] += slip;
    } else {
      right[s] += p_forward;
      right[s - 1] += 1.0 - p_forward;
    }
    m.costs[0][m.pair(s, kLeft)] = -0.5;
    m.costs[0][m.pair(s, kRight)] = 0.5;
  }
  if (reward_jitter > 0.0) {
    for (double& r : m.reward) r = reward_jitter * rng.uniform();
  }
  m.reward[m.pair(0, kLeft)] = 0.05;
  m.reward[m.pair(n - 1, kRight)] = 1.0;
  m.validate();
  return m;
}

}  // namespace cmdplab
