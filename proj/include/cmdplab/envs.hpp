#pragma once

#include <cstddef>
#include <vector>

#include "cmdplab/model.hpp"
#include "cmdplab/rng.hpp"

namespace cmdplab {

/// Single-server queue with a finite buffer. Each step the controller picks a
/// service probability and an arrival (flow) probability.
struct QueueConfig {
  std::size_t buffer = 5;
  std::vector<double> service_actions{0.2, 0.4, 0.6, 0.8};
  std::vector<double> flow_actions{0.4, 0.5, 0.6, 0.7};

  std::size_t action_index(std::size_t service_idx, std::size_t flow_idx) const {
    return service_idx * flow_actions.size() + flow_idx;
  }
};

/// States 0..buffer (queue length). Reward is 5 - s scaled to [0,1]. The two
/// cost channels are the service constraint 6 - 10a >= 0 and the flow
/// constraint 2 - 8(1-b)^2 >= 0, flipped to the "<= 0 is feasible" sign and
/// divided by their largest magnitude over the action grid. The model's unit
/// transforms map normalized values back to the original signs and scales.
/// Initial distribution is uniform. Throws ConfigInvalid.
TabularCmdp build_queue(const QueueConfig& config = {});

/// Transition rows (1 - S*floor) * Dirichlet(1,...,1) + floor * uniform, so
/// every entry is at least `floor` and every policy is ergodic. Rewards are
/// uniform on [0,1], costs uniform on [-1,1]. Requires 0 < floor <= 1/S.
TabularCmdp random_ergodic_cmdp(std::size_t num_states, std::size_t num_actions, std::size_t num_channels,
                                Rng& rng, double floor);

inline constexpr std::size_t kLeft = 0;
inline constexpr std::size_t kRight = 1;

/// River-swim style chain on n states. LEFT moves deterministically one state
/// toward 0. RIGHT moves forward with p_forward and otherwise stays or falls
/// back with equal odds; at the last state it stays with p_forward. Reward 1
/// for RIGHT at the last state and 0.05 for LEFT at state 0. One cost channel
/// charges 0.5 for RIGHT and credits 0.5 for LEFT. The LEFT-only policy is
/// absorbed at 0, so the model is communicating but not ergodic.
/// `reward_jitter` > 0 adds uniform [0, jitter) noise drawn from `rng` to the
/// zero rewards.
TabularCmdp weakly_communicating_chain(std::size_t n, double p_forward, Rng& rng, double reward_jitter = 0.0);

}  // namespace cmdplab
