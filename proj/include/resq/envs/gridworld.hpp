#pragma once

#include <array>
#include <random>

#include "resq/envs/env.hpp"

namespace resq {

struct GridWorldSpec {
  int side = 7;
  std::size_t n_predators = 3;
  double capture_reward = 10.0;
  double step_cost = -0.1;
  int capture_radius = 1;        // Chebyshev
  std::size_t captors_needed = 2;
  std::size_t episode_limit = 25;
  int prey_speed = 2;            // single-cell moves per step
  bool partial_obs = false;
  int view_radius = 2;           // Chebyshev, used when partial_obs
};

/// Actions shared by predators and prey.
enum GridAction : int { stay = 0, north = 1, south = 2, east = 3, west = 4 };
inline constexpr int kGridActions = 5;

struct Cell {
  int x = 0, y = 0;
  bool operator==(const Cell&) const = default;
};

Cell move_cell(Cell c, int action, int side);
int manhattan(Cell a, Cell b);
int chebyshev(Cell a, Cell b);
int squared_distance(Cell a, Cell b);

/// Maximin flight: the single-cell move maximizing Euclidean distance to the
/// nearest predator; ties go to the lowest action index.
int scripted_prey_action(Cell prey, std::span<const Cell> predators, int side);

/// Predator-prey on a square grid. Predators move first, then the prey makes
/// `prey_speed` maximin moves; the step pays `capture_reward` when at least
/// `captors_needed` predators are within `capture_radius` of the prey, else
/// `step_cost`. Episodes always run to the time limit.
class GridWorld final : public Env {
 public:
  explicit GridWorld(GridWorldSpec spec, double gamma = 0.99);

  const EnvSpec& spec() const override { return env_spec_; }
  const GridWorldSpec& grid() const { return grid_; }
  void reset(std::uint64_t seed) override;
  std::vector<double> state() const override;
  std::vector<double> observation(std::size_t agent) const override;
  StepResult step(std::span<const int> actions) override;
  std::size_t time() const override { return t_; }

  EnvSnapshot snapshot() const override;
  void restore(const EnvSnapshot& snapshot) override;
  void reseed(std::uint64_t) override {}
  std::unique_ptr<Env> clone() const override { return std::make_unique<GridWorld>(*this); }
  bool stochastic() const override { return false; }
  std::string name() const override { return "gridworld"; }

  const std::vector<Cell>& predators() const { return predators_; }
  Cell prey() const { return prey_; }
  /// Places entities directly; for tests and scripted scenarios.
  void place(std::vector<Cell> predators, Cell prey, std::size_t t = 0);
  bool captured() const;

 private:
  double coord(int v) const { return static_cast<double>(v) / static_cast<double>(grid_.side - 1); }

  GridWorldSpec grid_;
  EnvSpec env_spec_;
  std::vector<Cell> predators_;
  Cell prey_;
  std::size_t t_ = 0;
};

}  // namespace resq
