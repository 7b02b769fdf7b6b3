#include "resq/trainer/rollout.hpp"

#include <algorithm>
#include <cmath>

#include "resq/error.hpp"
#include "resq/factorization/joint_value.hpp"
#include "resq/operators/returns.hpp"

namespace resq {

using ad::Tensor;

double epsilon_value(std::size_t step, double start, double finish, std::size_t anneal_steps) {
  if (anneal_steps == 0 || step >= anneal_steps) return finish;
  const double frac = static_cast<double>(step) / static_cast<double>(anneal_steps);
  return start + (finish - start) * frac;
}

std::vector<int> epsilon_greedy(std::span<const double> utilities, std::size_t n_agents, std::size_t n_actions,
                                double epsilon, std::mt19937_64& rng) {
  std::vector<int> actions = igm_argmax(utilities, n_agents, n_actions);
  if (epsilon <= 0.0) return actions;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> uniform(0, static_cast<int>(n_actions) - 1);
  for (int& a : actions) {
    if (coin(rng) < epsilon) a = uniform(rng);
  }
  return actions;
}

Lane make_lane(const Env& prototype, std::uint64_t seed) {
  Lane lane;
  lane.owned = prototype.clone();
  lane.env = lane.owned.get();
  lane.env->reset(seed);
  lane.last_actions.assign(prototype.spec().n_agents, -1);
  return lane;
}

namespace {

void begin_record(Episode& e, const EnvSpec& spec) {
  e = Episode{};
  e.n_agents = spec.n_agents;
  e.obs_dim = spec.obs_dim;
  e.state_dim = spec.state_dim;
}

void push_inputs(Episode& e, const std::vector<std::vector<double>>& obs, const std::vector<double>& state) {
  for (const auto& o : obs) e.observations.insert(e.observations.end(), o.begin(), o.end());
  e.states.insert(e.states.end(), state.begin(), state.end());
}

}  // namespace

void run_lanes(std::span<Lane> lanes, FactorizedQModel& model, double epsilon, std::mt19937_64& rng, double gamma) {
  const AgentNetConfig& cfg = model.config().agent;
  const std::size_t n = cfg.n_agents, k = cfg.n_actions, h_dim = cfg.hidden;
  for (Lane& lane : lanes) {
    if (!lane.env) throw ContractError("lane has no environment");
    const EnvSpec& spec = lane.env->spec();
    if (spec.n_agents != n || spec.n_actions != k || spec.obs_dim != cfg.obs_dim) {
      throw DimensionError("environment does not match the model");
    }
    if (lane.last_actions.size() != n) lane.last_actions.assign(n, -1);
    if (lane.record) begin_record(*lane.record, spec);
  }

  std::vector<std::size_t> active;
  while (true) {
    active.clear();
    for (std::size_t i = 0; i < lanes.size(); ++i) {
      if (!lanes[i].done) active.push_back(i);
    }
    if (active.empty()) break;

    Tensor inputs({active.size() * n, cfg.input_width()});
    Tensor hidden({active.size() * n, h_dim});
    for (std::size_t j = 0; j < active.size(); ++j) {
      Lane& lane = lanes[active[j]];
      const auto obs = lane.env->observations();
      for (std::size_t a = 0; a < n; ++a) write_agent_input(obs[a], lane.last_actions[a], a, cfg, inputs.row(j * n + a));
      if (cfg.recurrent && !lane.hidden.empty()) {
        std::copy(lane.hidden.data().begin(), lane.hidden.data().end(), hidden.data().begin() + j * n * h_dim);
      }
      if (lane.record) {
        push_inputs(*lane.record, obs, lane.env->state());
        lane.record->snapshots.push_back(lane.env->snapshot().data);
      }
    }

    ad::Tape tape(false);
    const auto out = model.agent(Copy::online).forward(tape, tape.constant(std::move(inputs)), tape.constant(std::move(hidden)));
    const Tensor& q = out.q.value();
    const Tensor& h = out.hidden.value();

    for (std::size_t j = 0; j < active.size(); ++j) {
      Lane& lane = lanes[active[j]];
      const std::span<const double> utilities(q.data().data() + j * n * k, n * k);
      const std::vector<int> actions = epsilon_greedy(utilities, n, k, epsilon, rng);
      const StepResult result = lane.env->step(actions);
      lane.undiscounted += result.reward;
      lane.discounted += lane.discount * result.reward;
      lane.discount *= gamma;
      lane.last_actions = actions;
      if (cfg.recurrent) {
        lane.hidden = Tensor({n, h_dim}, std::vector<double>(h.data().begin() + j * n * h_dim,
                                                            h.data().begin() + (j + 1) * n * h_dim));
      }
      ++lane.steps;
      if (lane.record) {
        Episode& e = *lane.record;
        e.actions.insert(e.actions.end(), actions.begin(), actions.end());
        e.rewards.push_back(result.reward);
        e.terminated.push_back(result.terminated ? 1 : 0);
        ++e.length;
      }
      if (result.terminated) {
        lane.done = true;
        if (lane.record) {
          push_inputs(*lane.record, lane.env->observations(), lane.env->state());
          lane.record->returns = discounted_returns(lane.record->rewards, gamma);
        }
      }
    }
  }
}

Episode collect_episode(Env& env, FactorizedQModel& model, double epsilon, std::uint64_t seed, std::mt19937_64& rng,
                        double gamma) {
  env.reset(seed);
  Episode episode;
  Lane lane;
  lane.env = &env;
  lane.record = &episode;
  run_lanes({&lane, 1}, model, epsilon, rng, gamma);
  return episode;
}

EvalResult evaluate_policy(const Env& env, FactorizedQModel& model, std::size_t episodes, std::uint64_t seed,
                           double gamma) {
  EvalResult result;
  result.episodes = episodes;
  if (episodes == 0) return result;
  std::mt19937_64 seeds(seed);
  std::vector<Lane> lanes;
  lanes.reserve(episodes);
  for (std::size_t i = 0; i < episodes; ++i) lanes.push_back(make_lane(env, seeds()));
  std::mt19937_64 unused(seed);
  run_lanes(lanes, model, 0.0, unused, gamma);

  const auto stats = [&](auto field, double& mean, double& sd) {
    double sum = 0.0, sq = 0.0;
    for (const Lane& l : lanes) sum += l.*field;
    mean = sum / static_cast<double>(episodes);
    for (const Lane& l : lanes) sq += (l.*field - mean) * (l.*field - mean);
    sd = std::sqrt(sq / static_cast<double>(episodes));
  };
  stats(&Lane::undiscounted, result.mean_return, result.std_return);
  stats(&Lane::discounted, result.mean_discounted, result.std_discounted);
  return result;
}

AgentMemory agent_memory(FactorizedQModel& model, const Episode& episode, std::size_t t, Copy which) {
  if (t >= episode.length) throw ContractError("agent_memory: step past the end of the episode");
  const std::size_t n = model.n_agents();
  AgentMemory memory;
  memory.last_actions.assign(n, -1);
  memory.hidden = model.initial_hidden(n);
  const bool recurrent = model.config().agent.recurrent;
  for (std::size_t s = recurrent ? 0 : t; s <= t; ++s) {
    std::vector<std::vector<double>> obs(n);
    for (std::size_t a = 0; a < n; ++a) {
      const auto o = episode.observation(s, a);
      obs[a].assign(o.begin(), o.end());
    }
    std::vector<int> last(n, -1);
    if (s > 0) {
      const auto prev = episode.joint_action(s - 1);
      last.assign(prev.begin(), prev.end());
    }
    Utilities u = model.agent_utilities(obs, last, memory.hidden, which);
    memory.last_actions = last;
    if (s == t) {
      memory.utilities = std::move(u.q);
    } else {
      memory.hidden = std::move(u.hidden);
    }
  }
  return memory;
}

}  // namespace resq
