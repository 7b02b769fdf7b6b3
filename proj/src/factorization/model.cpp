#include "resq/factorization/model.hpp"

#include <random>

#include "resq/error.hpp"

namespace resq {

using namespace ad;

FactorizedQModel::FactorizedQModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config), agent_(config.agent), target_agent_(config.agent), mixer_(config.mixer), target_mixer_(config.mixer) {
  if (config.agent.n_agents != config.mixer.n_agents) throw DimensionError("agent and mixer disagree on agent count");
  std::mt19937_64 rng(seed);
  agent_.init(rng);
  mixer_.init(rng);
  sync_target();
}

ParameterRefs FactorizedQModel::parameters(Copy which) {
  ParameterRefs out = agent(which).parameters();
  ParameterRefs mix = mixer(which).parameters();
  out.insert(out.end(), mix.begin(), mix.end());
  return out;
}

void FactorizedQModel::sync_target() { copy_values(parameters(Copy::online), parameters(Copy::target)); }

Utilities FactorizedQModel::agent_utilities(std::span<const std::vector<double>> observations,
                                            std::span<const int> last_actions, const Tensor& hidden, Copy which) {
  const std::size_t n = n_agents();
  if (observations.size() != n || last_actions.size() != n) {
    throw DimensionError("agent_utilities: expected one observation and last action per agent");
  }
  const AgentNetConfig& cfg = config_.agent;
  Tensor inputs({n, cfg.input_width()});
  for (std::size_t a = 0; a < n; ++a) write_agent_input(observations[a], last_actions[a], a, cfg, inputs.row(a));
  Tape tape(false);
  Tensor h = hidden.empty() ? initial_hidden(n) : hidden;
  auto out = agent(which).forward(tape, tape.constant(std::move(inputs)), tape.constant(std::move(h)));
  return {out.q.value(), out.hidden.value()};
}

MixerSnapshot FactorizedQModel::mixer_snapshot(const Tensor& states, Copy which) {
  if (config_.mixer.kind == MixerKind::vdn) return MixerSnapshot(n_agents(), states.rows());
  Tape tape(false);
  return MixerSnapshot(mixer(which).weights(tape, tape.constant(states)), n_agents());
}

double FactorizedQModel::q_tot(std::span<const double> state, std::span<const double> utilities,
                               std::span<const int> joint_action, Copy which) {
  Tensor s({1, state.size()}, std::vector<double>(state.begin(), state.end()));
  MixerSnapshot snap = mixer_snapshot(s, which);
  FactorizedJointValue value(utilities, n_agents(), n_actions(), snap, 0);
  return value.value(joint_action);
}

double qmix_mix(Mixer& mixer, std::span<const double> q, std::span<const double> state) {
  Tape tape(false);
  const std::size_t n = q.size();
  Var qv = tape.constant(Tensor({1, n}, std::vector<double>(q.begin(), q.end())));
  Var sv = tape.constant(Tensor({1, state.size()}, std::vector<double>(state.begin(), state.end())));
  return mixer.mix(mixer.weights(tape, sv), qv).q_tot.item();
}

std::vector<double> monotone_grads(Mixer& mixer, std::span<const double> q, std::span<const double> state) {
  Tape tape;
  const std::size_t n = q.size();
  Var qv = tape.variable(Tensor({1, n}, std::vector<double>(q.begin(), q.end())));
  // Mixing weights enter as constants so parameter grads are left untouched.
  MixingWeights w;
  if (mixer.kind() == MixerKind::qmix) {
    Tape weights_tape(false);
    const MixingWeights raw = mixer.weights(
        weights_tape, weights_tape.constant(Tensor({1, state.size()}, std::vector<double>(state.begin(), state.end()))));
    w = {tape.constant(raw.w1.value()), tape.constant(raw.b1.value()), tape.constant(raw.w2.value()),
         tape.constant(raw.b2.value())};
  }
  tape.backward(mixer.mix(w, qv).q_tot);
  const Tensor g = tape.grad(qv);
  return {g.data().begin(), g.data().end()};
}

}  // namespace resq
