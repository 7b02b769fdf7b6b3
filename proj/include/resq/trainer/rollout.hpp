#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "resq/envs/env.hpp"
#include "resq/factorization/model.hpp"
#include "resq/trainer/episode.hpp"

namespace resq {

/// Linear anneal from `start` to `finish` over `anneal_steps`, constant afterwards.
double epsilon_value(std::size_t step, double start, double finish, std::size_t anneal_steps);

/// ε-greedy per agent: with probability ε a uniform action, else the greedy one
/// (ties to the lowest index). Draws one coin per agent, plus one action when exploring.
std::vector<int> epsilon_greedy(std::span<const double> utilities, std::size_t n_agents, std::size_t n_actions,
                                double epsilon, std::mt19937_64& rng);

/// One environment driven by the shared policy until it terminates.
struct Lane {
  std::unique_ptr<Env> owned;
  Env* env = nullptr;
  std::vector<int> last_actions;  // -1 before the first step
  ad::Tensor hidden;              // [n, hidden]; empty means zeros
  double undiscounted = 0.0;
  double discounted = 0.0;
  double discount = 1.0;
  std::size_t steps = 0;
  bool done = false;
  Episode* record = nullptr;  // filled with the trajectory when set
};

/// Lane over a freshly reset copy of `prototype`.
Lane make_lane(const Env& prototype, std::uint64_t seed);

/// Steps every lane in lockstep with one batched agent pass per step.
void run_lanes(std::span<Lane> lanes, FactorizedQModel& model, double epsilon, std::mt19937_64& rng, double gamma);

/// Plays one ε-greedy episode on `env` from reset(seed) and records it with R_t.
Episode collect_episode(Env& env, FactorizedQModel& model, double epsilon, std::uint64_t seed, std::mt19937_64& rng,
                        double gamma);

struct EvalResult {
  std::size_t episodes = 0;
  double mean_return = 0.0;  // undiscounted
  double std_return = 0.0;
  double mean_discounted = 0.0;
  double std_discounted = 0.0;
};

/// Greedy (ε = 0) episodes on copies of `env`; neither `env` nor the model is changed.
EvalResult evaluate_policy(const Env& env, FactorizedQModel& model, std::size_t episodes, std::uint64_t seed,
                           double gamma);

/// Agent memory entering step t of a stored episode: last actions and the
/// recurrent state after replaying steps 0..t-1.
struct AgentMemory {
  std::vector<int> last_actions;
  ad::Tensor hidden;     // [n, hidden]
  ad::Tensor utilities;  // [n, K] at step t
};
AgentMemory agent_memory(FactorizedQModel& model, const Episode& episode, std::size_t t, Copy which = Copy::online);

}  // namespace resq
