#include "resq/envs/matrix_game.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "resq/factorization/joint_value.hpp"

namespace resq {

MatrixGame::MatrixGame(MatrixGameSpec spec, double gamma) : game_(std::move(spec)) {
  if (game_.n_agents == 0 || game_.n_actions == 0 || game_.horizon == 0) {
    throw std::invalid_argument("matrix game needs agents, actions and a horizon");
  }
  if (game_.payoff.size() != joint_action_count(game_.n_agents, game_.n_actions)) {
    throw std::invalid_argument("matrix game payoff must have K^n = " +
                                std::to_string(joint_action_count(game_.n_agents, game_.n_actions)) + " entries");
  }
  if (game_.noise_std < 0.0) throw std::invalid_argument("matrix game noise must be non-negative");
  double largest = 0.0;
  for (double p : game_.payoff) largest = std::max(largest, std::fabs(p));
  env_spec_.n_agents = game_.n_agents;
  env_spec_.n_actions = game_.n_actions;
  env_spec_.state_dim = game_.horizon;
  env_spec_.obs_dim = game_.horizon;
  env_spec_.r_max = largest + kNoiseClip * game_.noise_std;
  env_spec_.episode_limit = game_.horizon;
  env_spec_.gamma = gamma;
}

void MatrixGame::reset(std::uint64_t seed) {
  t_ = 0;
  rng_.seed(seed);
}

std::vector<double> MatrixGame::state() const {
  std::vector<double> s(game_.horizon, 0.0);
  if (t_ < game_.horizon) s[t_] = 1.0;
  return s;
}

std::vector<double> MatrixGame::observation(std::size_t agent) const {
  if (agent >= game_.n_agents) throw std::out_of_range("agent index out of range");
  return state();
}

double MatrixGame::payoff(std::span<const int> actions) const {
  check_actions(env_spec_, actions);
  return game_.payoff[encode_joint_action(actions, game_.n_actions)];
}

StepResult MatrixGame::step(std::span<const int> actions) {
  if (t_ >= game_.horizon) throw std::logic_error("step after the episode ended");
  double reward = payoff(actions);
  if (game_.noise_std > 0.0) {
    const double z = std::normal_distribution<double>(0.0, 1.0)(rng_);
    reward += game_.noise_std * std::clamp(z, -kNoiseClip, kNoiseClip);
  }
  ++t_;
  return {reward, t_ == game_.horizon};
}

void MatrixGame::restore(const EnvSnapshot& snapshot) {
  if (snapshot.data.size() != 1 || snapshot.data[0] < 0 || static_cast<std::size_t>(snapshot.data[0]) > game_.horizon) {
    throw std::invalid_argument("matrix game snapshot is malformed");
  }
  t_ = static_cast<std::size_t>(snapshot.data[0]);
}

std::vector<double> exact_qstar(const MatrixGameSpec& spec) { return spec.payoff; }

double matrix_optimal_value(const MatrixGameSpec& spec, double gamma, std::size_t t) {
  const double best = *std::max_element(spec.payoff.begin(), spec.payoff.end());
  double value = 0.0, discount = 1.0;
  for (std::size_t k = t; k < spec.horizon; ++k) {
    value += discount * best;
    discount *= gamma;
  }
  return value;
}

}  // namespace resq
