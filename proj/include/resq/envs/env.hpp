#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace resq {

struct EnvSpec {
  std::size_t n_agents = 0;
  std::size_t n_actions = 0;
  std::size_t state_dim = 0;
  std::size_t obs_dim = 0;
  double r_max = 0.0;  // |r| <= r_max on every step
  std::size_t episode_limit = 0;
  double gamma = 0.99;
};

struct StepResult {
  double reward = 0.0;
  bool terminated = false;  // true at the time limit as well
};

/// Logical environment state, enough to resume an episode exactly (minus RNG).
struct EnvSnapshot {
  std::vector<int> data;
};

/// Cooperative multi-agent environment with a shared reward.
class Env {
 public:
  virtual ~Env() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual void reset(std::uint64_t seed) = 0;
  virtual std::vector<double> state() const = 0;
  virtual std::vector<double> observation(std::size_t agent) const = 0;
  virtual StepResult step(std::span<const int> actions) = 0;
  virtual std::size_t time() const = 0;

  /// Reset-to-state support: snapshot, restore, then reseed the noise source.
  virtual EnvSnapshot snapshot() const = 0;
  virtual void restore(const EnvSnapshot& snapshot) = 0;
  virtual void reseed(std::uint64_t seed) = 0;
  virtual std::unique_ptr<Env> clone() const = 0;

  /// False when rewards and transitions are deterministic given the actions.
  virtual bool stochastic() const = 0;
  virtual std::string name() const = 0;

  std::vector<std::vector<double>> observations() const;
};

/// Throws std::out_of_range unless every action is in [0, K).
void check_actions(const EnvSpec& spec, std::span<const int> actions);

}  // namespace resq
