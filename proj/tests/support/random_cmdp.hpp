#pragma once

#include <string>

#include "cmdplab/model.hpp"
#include "cmdplab/rng.hpp"

namespace testgen {

// Dense random CMDP: every transition entry is at least `floor`, so every
// policy induces an ergodic chain.
inline cmdplab::TabularCmdp random_cmdp(cmdplab::Rng& rng, std::size_t states, std::size_t actions,
                                        std::size_t channels = 1, double floor = 0.02) {
  cmdplab::TabularCmdp m;
  m.num_states = states;
  m.num_actions = actions;
  m.reward.resize(states * actions);
  for (auto& r : m.reward) r = rng.uniform();
  for (std::size_t k = 0; k < channels; ++k) {
    m.channel_names.push_back("c" + std::to_string(k));
    m.costs.emplace_back(states * actions);
    for (auto& c : m.costs.back()) c = 2.0 * rng.uniform() - 1.0;
    m.cost_units.push_back({1.0});
  }
  m.transition.resize(states * actions * states);
  for (std::size_t sa = 0; sa < states * actions; ++sa) {
    double sum = 0.0;
    for (std::size_t t = 0; t < states; ++t) sum += (m.transition[sa * states + t] = floor + rng.uniform());
    for (std::size_t t = 0; t < states; ++t) m.transition[sa * states + t] /= sum;
  }
  m.initial_distribution.assign(states, 1.0 / static_cast<double>(states));
  return m;
}

inline cmdplab::StationaryPolicy random_policy(cmdplab::Rng& rng, std::size_t states, std::size_t actions) {
  cmdplab::StationaryPolicy p{states, actions, std::vector<double>(states * actions)};
  for (std::size_t s = 0; s < states; ++s) {
    double sum = 0.0;
    for (std::size_t a = 0; a < actions; ++a) sum += (p.probs[s * actions + a] = 0.05 + rng.uniform());
    for (std::size_t a = 0; a < actions; ++a) p.probs[s * actions + a] /= sum;
  }
  return p;
}

// Single-action CMDP wrapping a given chain, handy for chain-level checks.
inline cmdplab::TabularCmdp chain_cmdp(std::size_t states, std::vector<double> p) {
  cmdplab::TabularCmdp m;
  m.num_states = states;
  m.num_actions = 1;
  m.reward.assign(states, 0.0);
  m.transition = std::move(p);
  m.initial_distribution.assign(states, 1.0 / static_cast<double>(states));
  return m;
}

// Four states, two actions. Action 0 earns nothing and costs -0.6; action 1
// earns 1 at a state-dependent cost (-0.2, 0.2, 0.6, 1.0). The next state is
// uniform except for an extra `stay` chance of remaining. Every policy has a
// uniform stationary distribution, so by hand the constrained optimum takes
// action 1 in states 0-2 for J* = 0.75 with the budget exactly met, and the
// all-zero policy gives a Slater margin of 0.6.
inline cmdplab::TabularCmdp budget_cmdp(double stay = 0.2) {
  const double action_cost[] = {-0.2, 0.2, 0.6, 1.0};
  cmdplab::TabularCmdp m;
  m.num_states = 4;
  m.num_actions = 2;
  m.reward.assign(8, 0.0);
  m.channel_names = {"budget"};
  m.costs.assign(1, std::vector<double>(8, -0.6));
  m.cost_units = {{1.0}};
  m.transition.assign(32, 0.0);
  m.initial_distribution.assign(4, 0.25);
  for (std::size_t s = 0; s < 4; ++s) {
    m.reward[s * 2 + 1] = 1.0;
    m.costs[0][s * 2 + 1] = action_cost[s];
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t t = 0; t < 4; ++t) m.transition[(s * 2 + a) * 4 + t] = (1.0 - stay) * 0.25 + (t == s ? stay : 0.0);
    }
  }
  return m;
}

}  // namespace testgen
