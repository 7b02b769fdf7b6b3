#pragma once

#include <random>
#include <vector>

#include "resq/factorization/model.hpp"
#include "resq/operators/returns.hpp"
#include "resq/trainer/episode.hpp"

namespace resq::testing {

inline std::vector<double> uniform_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

inline Episode random_episode(const ModelConfig& cfg, std::size_t length, double gamma, std::mt19937_64& rng) {
  Episode e;
  e.n_agents = cfg.agent.n_agents;
  e.obs_dim = cfg.agent.obs_dim;
  e.state_dim = cfg.mixer.state_dim;
  e.length = length;
  e.observations = uniform_vector((length + 1) * e.n_agents * e.obs_dim, rng);
  e.states = uniform_vector((length + 1) * e.state_dim, rng);
  std::uniform_int_distribution<int> action(0, static_cast<int>(cfg.agent.n_actions) - 1);
  e.actions.resize(length * e.n_agents);
  for (int& u : e.actions) u = action(rng);
  e.rewards = uniform_vector(length, rng, -1.0, 1.0);
  e.terminated.assign(length, 0);
  e.terminated.back() = 1;
  e.returns = discounted_returns(e.rewards, gamma);
  return e;
}

inline EpisodeBatch random_batch(const ModelConfig& cfg, std::vector<std::size_t> lengths, double gamma,
                                 std::mt19937_64& rng, std::vector<Episode>* keep = nullptr) {
  std::vector<Episode> episodes;
  for (std::size_t len : lengths) episodes.push_back(random_episode(cfg, len, gamma, rng));
  std::vector<const Episode*> ptrs;
  for (const Episode& e : episodes) ptrs.push_back(&e);
  EpisodeBatch batch = make_batch(ptrs);
  if (keep) *keep = std::move(episodes);
  return batch;
}

inline void perturb(FactorizedQModel& model, Copy which, double size, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, size);
  for (ad::Parameter* p : model.parameters(which)) {
    for (double& v : p->value.data()) v += noise(rng);
  }
}

}  // namespace resq::testing
