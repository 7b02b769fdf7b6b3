#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "resq/factorization/agent_net.hpp"
#include "resq/factorization/joint_value.hpp"
#include "resq/factorization/mixer.hpp"

namespace resq {

struct ModelConfig {
  AgentNetConfig agent;
  MixerConfig mixer;
};

/// Which copy of the parameters to use.
enum class Copy { online, target };

/// Utilities for a batch of agents evaluated without gradient.
struct Utilities {
  ad::Tensor q;       // [n, K]
  ad::Tensor hidden;  // [n, hidden]
};

/// Agent network plus mixer, each with a frozen target copy (θ and θ̄).
/// Target copies start as exact copies and change only in sync_target().
class FactorizedQModel {
 public:
  FactorizedQModel() = default;
  FactorizedQModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::size_t n_agents() const { return config_.agent.n_agents; }
  std::size_t n_actions() const { return config_.agent.n_actions; }

  AgentNet& agent(Copy which = Copy::online) { return which == Copy::online ? agent_ : target_agent_; }
  Mixer& mixer(Copy which = Copy::online) { return which == Copy::online ? mixer_ : target_mixer_; }

  ad::ParameterRefs parameters(Copy which = Copy::online);
  void sync_target();

  ad::Tensor initial_hidden(std::size_t rows) const { return ad::Tensor({rows, config_.agent.hidden}); }

  /// Per-agent utilities for one time step. `observations` holds n rows of obs_dim.
  Utilities agent_utilities(std::span<const std::vector<double>> observations, std::span<const int> last_actions,
                            const ad::Tensor& hidden, Copy which = Copy::online);

  /// Mixing weights for a batch of states [R, state_dim], evaluated without gradient.
  MixerSnapshot mixer_snapshot(const ad::Tensor& states, Copy which = Copy::online);

  /// Q_tot(s, u) for one state and utilities [n, K].
  double q_tot(std::span<const double> state, std::span<const double> utilities, std::span<const int> joint_action,
               Copy which = Copy::online);

 private:
  ModelConfig config_;
  AgentNet agent_, target_agent_;
  Mixer mixer_, target_mixer_;
};

/// Q_tot for given per-agent values at one state: f_s(q).
double qmix_mix(Mixer& mixer, std::span<const double> q, std::span<const double> state);

/// dQ_tot/dQ_a at (q, s) obtained by reverse-mode differentiation through the mixer.
std::vector<double> monotone_grads(Mixer& mixer, std::span<const double> q, std::span<const double> state);

}  // namespace resq
