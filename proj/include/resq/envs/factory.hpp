#pragma once

#include <memory>
#include <string>

#include "resq/envs/gridworld.hpp"
#include "resq/envs/matrix_game.hpp"
#include "resq/envs/sticky.hpp"

namespace resq {

struct EnvConfig {
  std::string kind = "matrix";  // matrix | gridworld
  MatrixGameSpec matrix;
  GridWorldSpec grid;
  double sticky = 0.0;
};

/// Builds the environment, wrapped in StickyActions when `sticky > 0`.
std::unique_ptr<Env> make_env(const EnvConfig& config, double gamma);

}  // namespace resq
