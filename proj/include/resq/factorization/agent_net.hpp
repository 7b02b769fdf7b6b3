#pragma once

#include <cstddef>
#include <random>
#include <span>

#include "resq/autodiff/nn.hpp"

namespace resq {

struct AgentNetConfig {
  std::size_t obs_dim = 0;
  std::size_t n_actions = 0;
  std::size_t n_agents = 0;
  std::size_t hidden = 64;
  bool recurrent = false;

  /// observation, one-hot last action, one-hot agent id
  std::size_t input_width() const { return obs_dim + n_actions + n_agents; }
};

/// Per-agent utility network shared by all agents:
/// linear -> relu -> (GRU cell | linear -> relu) -> linear.
class AgentNet {
 public:
  AgentNet() = default;
  explicit AgentNet(const AgentNetConfig& config);

  const AgentNetConfig& config() const { return config_; }
  void init(std::mt19937_64& rng);

  struct Output {
    ad::Var q;       // [rows, n_actions]
    ad::Var hidden;  // [rows, hidden]; passthrough of the input in feedforward mode
  };
  /// inputs [rows, input_width]; hidden [rows, hidden] (read only when recurrent).
  Output forward(ad::Tape& tape, ad::Var inputs, ad::Var hidden);

  ad::ParameterRefs parameters();

 private:
  AgentNetConfig config_;
  ad::Linear input_;
  ad::Linear middle_;
  ad::GruCell gru_;
  ad::Linear output_;
};

/// Writes one agent's input row. `last_action < 0` means no previous action.
void write_agent_input(std::span<const double> obs, int last_action, std::size_t agent, const AgentNetConfig& config,
                       std::span<double> out);

}  // namespace resq
