#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "resq/envs/env.hpp"
#include "resq/factorization/model.hpp"
#include "resq/trainer/replay.hpp"

namespace resq {

struct StateSample {
  const Episode* episode = nullptr;
  std::size_t t = 0;
};

/// Uniform draw of stored (episode, step) pairs without replacement; every
/// stored step when fewer than `count` exist.
std::vector<StateSample> sample_states(const ReplayBuffer& buffer, std::size_t count, std::mt19937_64& rng);

/// Mean of Q_tot(s, û) under the online network, û the IGM greedy action.
double estimated_value(FactorizedQModel& model, std::span<const StateSample> samples);

/// Mean discounted return of the greedy policy from each sampled state, by
/// restoring the environment and rolling out. Deterministic environments use one rollout.
double true_value_mc(const Env& prototype, FactorizedQModel& model, std::span<const StateSample> samples,
                     std::size_t rollouts, double gamma, std::uint64_t seed);

struct BiasRecord {
  double estimated = 0.0;
  double true_value = 0.0;
  double normalized = 0.0;  // 100 (est - true) / |true|, NaN when undefined
  bool defined = false;
};

/// Undefined when |true| < 1e-6.
BiasRecord normalized_bias(double estimated, double true_value);

}  // namespace resq
