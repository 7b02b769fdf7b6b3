#include "resq/envs/env.hpp"

#include <stdexcept>

namespace resq {

std::vector<std::vector<double>> Env::observations() const {
  std::vector<std::vector<double>> out;
  out.reserve(spec().n_agents);
  for (std::size_t a = 0; a < spec().n_agents; ++a) out.push_back(observation(a));
  return out;
}

void check_actions(const EnvSpec& spec, std::span<const int> actions) {
  if (actions.size() != spec.n_agents) {
    throw std::out_of_range("expected " + std::to_string(spec.n_agents) + " actions, got " +
                            std::to_string(actions.size()));
  }
  for (int u : actions) {
    if (u < 0 || static_cast<std::size_t>(u) >= spec.n_actions) {
      throw std::out_of_range("action " + std::to_string(u) + " outside [0, " + std::to_string(spec.n_actions) + ")");
    }
  }
}

}  // namespace resq
