#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace resq {

/// One complete episode of `length` transitions. Observations and states hold
/// length + 1 entries so the final next-state is available for bootstrapping.
struct Episode {
  std::size_t n_agents = 0;
  std::size_t obs_dim = 0;
  std::size_t state_dim = 0;
  std::size_t length = 0;

  std::vector<double> observations;       // [length + 1, n, obs_dim]
  std::vector<double> states;             // [length + 1, state_dim]
  std::vector<int> actions;               // [length, n]
  std::vector<double> rewards;            // [length]
  std::vector<std::uint8_t> terminated;   // [length]
  std::vector<double> returns;            // [length], R_t
  std::vector<std::vector<int>> snapshots;  // [length], environment before step t; optional

  std::span<const double> observation(std::size_t t, std::size_t agent) const {
    return {observations.data() + (t * n_agents + agent) * obs_dim, obs_dim};
  }
  std::span<const double> state(std::size_t t) const { return {states.data() + t * state_dim, state_dim}; }
  std::span<const int> joint_action(std::size_t t) const { return {actions.data() + t * n_agents, n_agents}; }
};

/// Episodes padded to a common length, laid out time-major: index (t, b).
/// Padded steps have mask 0, zero inputs and action 0.
struct EpisodeBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;  // T, the longest episode
  std::size_t n_agents = 0;
  std::size_t obs_dim = 0;
  std::size_t state_dim = 0;

  std::vector<double> observations;      // [T + 1, B, n, obs_dim]
  std::vector<double> states;            // [T + 1, B, state_dim]
  std::vector<int> actions;              // [T, B, n]
  std::vector<int> last_actions;         // [T + 1, B, n], -1 before the first step
  std::vector<double> rewards;           // [T, B]
  std::vector<std::uint8_t> terminated;  // [T, B]
  std::vector<double> mask;              // [T, B]
  std::vector<double> returns;           // [T, B]
  std::vector<std::size_t> lengths;      // [B]

  std::size_t row(std::size_t t, std::size_t b) const { return t * batch + b; }
};

EpisodeBatch make_batch(std::span<const Episode* const> episodes);

}  // namespace resq
