#include "resq/diagnostics/bias.hpp"

#include <cmath>
#include <limits>

#include "resq/error.hpp"
#include "resq/factorization/joint_value.hpp"
#include "resq/trainer/rollout.hpp"

namespace resq {

std::vector<StateSample> sample_states(const ReplayBuffer& buffer, std::size_t count, std::mt19937_64& rng) {
  std::vector<StateSample> all;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    for (std::size_t t = 0; t < buffer[i].length; ++t) all.push_back({&buffer[i], t});
  }
  if (all.size() <= count) return all;
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(count);
  return all;
}

double estimated_value(FactorizedQModel& model, std::span<const StateSample> samples) {
  if (samples.empty()) throw ContractError("estimated_value needs at least one state");
  double sum = 0.0;
  for (const StateSample& s : samples) {
    const AgentMemory memory = agent_memory(model, *s.episode, s.t);
    const auto u = memory.utilities.data();
    sum += model.q_tot(s.episode->state(s.t), u, igm_argmax(u, model.n_agents(), model.n_actions()));
  }
  return sum / static_cast<double>(samples.size());
}

double true_value_mc(const Env& prototype, FactorizedQModel& model, std::span<const StateSample> samples,
                     std::size_t rollouts, double gamma, std::uint64_t seed) {
  if (samples.empty()) throw ContractError("true_value_mc needs at least one state");
  if (rollouts == 0) throw ContractError("true_value_mc needs at least one rollout");
  if (!prototype.stochastic()) rollouts = 1;
  std::mt19937_64 seeds(seed);
  std::vector<Lane> lanes;
  lanes.reserve(samples.size() * rollouts);
  for (const StateSample& s : samples) {
    if (s.episode->snapshots.size() != s.episode->length) {
      throw ContractError("true_value_mc needs episodes recorded with snapshots");
    }
    const AgentMemory memory = agent_memory(model, *s.episode, s.t);
    for (std::size_t r = 0; r < rollouts; ++r) {
      Lane lane;
      lane.owned = prototype.clone();
      lane.env = lane.owned.get();
      lane.env->restore({s.episode->snapshots[s.t]});
      lane.env->reseed(seeds());
      lane.last_actions = memory.last_actions;
      lane.hidden = memory.hidden;
      lanes.push_back(std::move(lane));
    }
  }
  std::mt19937_64 unused(seed);
  run_lanes(lanes, model, 0.0, unused, gamma);
  double sum = 0.0;
  for (const Lane& l : lanes) sum += l.discounted;
  return sum / static_cast<double>(lanes.size());
}

BiasRecord normalized_bias(double estimated, double true_value) {
  BiasRecord b{estimated, true_value, std::numeric_limits<double>::quiet_NaN(), false};
  if (std::abs(true_value) >= 1e-6) {
    b.normalized = 100.0 * (estimated - true_value) / std::abs(true_value);
    b.defined = true;
  }
  return b;
}

}  // namespace resq
