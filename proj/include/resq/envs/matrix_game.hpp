#pragma once

#include <random>

#include "resq/envs/env.hpp"

namespace resq {

struct MatrixGameSpec {
  std::size_t n_agents = 2;
  std::size_t n_actions = 2;
  std::vector<double> payoff = {8, -12, -12, 0};  // K^n entries, agent 0 most significant
  double noise_std = 0.0;
  /// Number of independent plays per episode; the state is the one-hot play index.
  std::size_t horizon = 1;
};

/// Reward noise is Gaussian truncated symmetrically at this many standard deviations.
inline constexpr double kNoiseClip = 5.0;

/// Cooperative matrix game. Every step pays payoff(u) plus zero-mean noise.
class MatrixGame final : public Env {
 public:
  explicit MatrixGame(MatrixGameSpec spec, double gamma = 0.99);

  const EnvSpec& spec() const override { return env_spec_; }
  const MatrixGameSpec& game() const { return game_; }
  void reset(std::uint64_t seed) override;
  std::vector<double> state() const override;
  std::vector<double> observation(std::size_t agent) const override;
  StepResult step(std::span<const int> actions) override;
  std::size_t time() const override { return t_; }

  EnvSnapshot snapshot() const override { return {{static_cast<int>(t_)}}; }
  void restore(const EnvSnapshot& snapshot) override;
  void reseed(std::uint64_t seed) override { rng_.seed(seed); }
  std::unique_ptr<Env> clone() const override { return std::make_unique<MatrixGame>(*this); }
  bool stochastic() const override { return game_.noise_std > 0.0; }
  std::string name() const override { return "matrix"; }

  double payoff(std::span<const int> actions) const;

 private:
  MatrixGameSpec game_;
  EnvSpec env_spec_;
  std::size_t t_ = 0;
  std::mt19937_64 rng_;
};

/// Q*(u) for one play: the expected payoff, since the noise is zero-mean.
std::vector<double> exact_qstar(const MatrixGameSpec& spec);
/// Optimal value from play `t` of a repeated game: Σ_{k<H-t} γ^k max payoff.
double matrix_optimal_value(const MatrixGameSpec& spec, double gamma, std::size_t t = 0);

}  // namespace resq
