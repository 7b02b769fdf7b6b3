#include "resq/envs/gridworld.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <stdexcept>

namespace resq {

Cell move_cell(Cell c, int action, int side) {
  switch (action) {
    case north: c.y = std::max(0, c.y - 1); break;
    case south: c.y = std::min(side - 1, c.y + 1); break;
    case east: c.x = std::min(side - 1, c.x + 1); break;
    case west: c.x = std::max(0, c.x - 1); break;
    default: break;
  }
  return c;
}

int manhattan(Cell a, Cell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }
int chebyshev(Cell a, Cell b) { return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y)); }
int squared_distance(Cell a, Cell b) { return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y); }

int scripted_prey_action(Cell prey, std::span<const Cell> predators, int side) {
  int best_action = stay, best_score = std::numeric_limits<int>::min();
  for (int a = 0; a < kGridActions; ++a) {
    const Cell next = move_cell(prey, a, side);
    int nearest = std::numeric_limits<int>::max();
    for (Cell p : predators) nearest = std::min(nearest, squared_distance(next, p));
    if (nearest > best_score) {
      best_score = nearest;
      best_action = a;
    }
  }
  return best_action;
}

GridWorld::GridWorld(GridWorldSpec spec, double gamma) : grid_(spec) {
  if (grid_.side < 2 || grid_.n_predators == 0 || grid_.episode_limit == 0 || grid_.prey_speed < 0) {
    throw std::invalid_argument("gridworld needs side >= 2, predators, a positive limit and prey speed >= 0");
  }
  if (grid_.captors_needed == 0 || grid_.captors_needed > grid_.n_predators) {
    throw std::invalid_argument("gridworld captors_needed must lie in [1, n_predators]");
  }
  const std::size_t n = grid_.n_predators;
  env_spec_.n_agents = n;
  env_spec_.n_actions = kGridActions;
  env_spec_.state_dim = 2 * n + 3;
  env_spec_.obs_dim = grid_.partial_obs ? 3 + 3 * n : env_spec_.state_dim;
  env_spec_.r_max = std::max(std::abs(grid_.capture_reward), std::abs(grid_.step_cost));
  env_spec_.episode_limit = grid_.episode_limit;
  env_spec_.gamma = gamma;
  predators_.assign(n, Cell{});
}

void GridWorld::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> coord_dist(0, grid_.side - 1);
  for (Cell& p : predators_) p = {coord_dist(rng), coord_dist(rng)};
  do {
    prey_ = {coord_dist(rng), coord_dist(rng)};
  } while (std::find(predators_.begin(), predators_.end(), prey_) != predators_.end());
  t_ = 0;
}

void GridWorld::place(std::vector<Cell> predators, Cell prey, std::size_t t) {
  if (predators.size() != grid_.n_predators) throw std::invalid_argument("wrong predator count");
  const auto inside = [&](Cell c) { return c.x >= 0 && c.y >= 0 && c.x < grid_.side && c.y < grid_.side; };
  if (!inside(prey) || !std::all_of(predators.begin(), predators.end(), inside)) {
    throw std::invalid_argument("position outside the grid");
  }
  predators_ = std::move(predators);
  prey_ = prey;
  t_ = t;
}

std::vector<double> GridWorld::state() const {
  std::vector<double> s;
  s.reserve(env_spec_.state_dim);
  for (Cell p : predators_) {
    s.push_back(coord(p.x));
    s.push_back(coord(p.y));
  }
  s.push_back(coord(prey_.x));
  s.push_back(coord(prey_.y));
  s.push_back(static_cast<double>(t_) / static_cast<double>(grid_.episode_limit));
  return s;
}

std::vector<double> GridWorld::observation(std::size_t agent) const {
  if (agent >= grid_.n_predators) throw std::out_of_range("agent index out of range");
  if (!grid_.partial_obs) return state();
  const Cell self = predators_[agent];
  std::vector<double> o = {coord(self.x), coord(self.y)};
  const auto add = [&](Cell other) {
    if (chebyshev(self, other) <= grid_.view_radius) {
      o.push_back(static_cast<double>(other.x - self.x) / grid_.view_radius);
      o.push_back(static_cast<double>(other.y - self.y) / grid_.view_radius);
      o.push_back(1.0);
    } else {
      o.insert(o.end(), {0.0, 0.0, 0.0});
    }
  };
  for (std::size_t a = 0; a < grid_.n_predators; ++a) {
    if (a != agent) add(predators_[a]);
  }
  add(prey_);
  o.push_back(static_cast<double>(t_) / static_cast<double>(grid_.episode_limit));
  return o;
}

bool GridWorld::captured() const {
  std::size_t close = 0;
  for (Cell p : predators_) close += chebyshev(p, prey_) <= grid_.capture_radius;
  return close >= grid_.captors_needed;
}

StepResult GridWorld::step(std::span<const int> actions) {
  if (t_ >= grid_.episode_limit) throw std::logic_error("step after the episode ended");
  check_actions(env_spec_, actions);
  for (std::size_t a = 0; a < predators_.size(); ++a) predators_[a] = move_cell(predators_[a], actions[a], grid_.side);
  for (int k = 0; k < grid_.prey_speed; ++k) prey_ = move_cell(prey_, scripted_prey_action(prey_, predators_, grid_.side), grid_.side);
  ++t_;
  return {captured() ? grid_.capture_reward : grid_.step_cost, t_ == grid_.episode_limit};
}

EnvSnapshot GridWorld::snapshot() const {
  EnvSnapshot s;
  s.data.push_back(static_cast<int>(t_));
  for (Cell p : predators_) s.data.insert(s.data.end(), {p.x, p.y});
  s.data.insert(s.data.end(), {prey_.x, prey_.y});
  return s;
}

void GridWorld::restore(const EnvSnapshot& snapshot) {
  const std::size_t n = grid_.n_predators;
  if (snapshot.data.size() != 3 + 2 * n) throw std::invalid_argument("gridworld snapshot is malformed");
  std::vector<Cell> predators(n);
  for (std::size_t a = 0; a < n; ++a) predators[a] = {snapshot.data[1 + 2 * a], snapshot.data[2 + 2 * a]};
  place(std::move(predators), {snapshot.data[1 + 2 * n], snapshot.data[2 + 2 * n]},
        static_cast<std::size_t>(snapshot.data[0]));
}

}  // namespace resq
