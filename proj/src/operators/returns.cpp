#include "resq/operators/returns.hpp"

#include <algorithm>

#include "resq/error.hpp"

namespace resq {

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> out(rewards.size());
  double tail = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    tail = rewards[t] + gamma * tail;
    out[t] = tail;
  }
  return out;
}

double n_step_target(std::span<const double> rewards, double gamma, std::size_t n_steps, double bootstrap,
                     bool ends_terminal) {
  if (n_steps == 0) throw ContractError("n_step_target: N must be at least 1");
  const std::size_t k = std::min(n_steps, rewards.size());
  double value = 0.0, discount = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    value += discount * rewards[i];
    discount *= gamma;
  }
  if (k < rewards.size() || !ends_terminal) value += discount * bootstrap;
  return value;
}

double theorem2_target(double reward, double gamma, double softmax_value, double return_value, double lambda) {
  if (!(lambda >= 0.0)) throw ContractError("theorem2_target: λ must be non-negative");
  return (reward + gamma * softmax_value) / (lambda + 1.0) + lambda * return_value / (lambda + 1.0);
}

}  // namespace resq
