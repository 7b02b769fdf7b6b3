#include "resq/factorization/agent_net.hpp"

#include <algorithm>
#include <string>

#include "resq/error.hpp"

namespace resq {

using namespace ad;

AgentNet::AgentNet(const AgentNetConfig& config)
    : config_(config),
      input_("agent.input", config.input_width(), config.hidden),
      output_("agent.output", config.hidden, config.n_actions) {
  if (config.recurrent) {
    gru_ = GruCell("agent.gru", config.hidden, config.hidden);
  } else {
    middle_ = Linear("agent.middle", config.hidden, config.hidden);
  }
}

void AgentNet::init(std::mt19937_64& rng) {
  input_.init(rng);
  if (config_.recurrent) {
    gru_.init(rng);
  } else {
    middle_.init(rng);
  }
  output_.init(rng);
}

AgentNet::Output AgentNet::forward(Tape& tape, Var inputs, Var hidden) {
  if (inputs.value().rank() != 2 || inputs.value().cols() != config_.input_width()) {
    throw DimensionError("agent inputs " + shape_string(inputs.shape()) + " do not have width " +
                         std::to_string(config_.input_width()));
  }
  Var x = relu(input_.forward(tape, inputs));
  if (config_.recurrent) {
    Var next = gru_.forward(tape, x, hidden);
    return {output_.forward(tape, next), next};
  }
  return {output_.forward(tape, relu(middle_.forward(tape, x))), hidden};
}

ParameterRefs AgentNet::parameters() {
  ParameterRefs out;
  input_.collect(out);
  if (config_.recurrent) {
    gru_.collect(out);
  } else {
    middle_.collect(out);
  }
  output_.collect(out);
  return out;
}

void write_agent_input(std::span<const double> obs, int last_action, std::size_t agent, const AgentNetConfig& config,
                       std::span<double> out) {
  if (obs.size() != config.obs_dim) {
    throw DimensionError("observation width " + std::to_string(obs.size()) + ", expected " +
                         std::to_string(config.obs_dim));
  }
  if (out.size() != config.input_width()) throw DimensionError("agent input row has the wrong width");
  std::fill(out.begin(), out.end(), 0.0);
  std::copy(obs.begin(), obs.end(), out.begin());
  if (last_action >= 0) out[config.obs_dim + static_cast<std::size_t>(last_action)] = 1.0;
  out[config.obs_dim + config.n_actions + agent] = 1.0;
}

}  // namespace resq
