#include "resq/envs/factory.hpp"

#include "resq/error.hpp"

namespace resq {

std::unique_ptr<Env> make_env(const EnvConfig& config, double gamma) {
  std::unique_ptr<Env> env;
  if (config.kind == "matrix") {
    env = std::make_unique<MatrixGame>(config.matrix, gamma);
  } else if (config.kind == "gridworld") {
    env = std::make_unique<GridWorld>(config.grid, gamma);
  } else {
    throw ConfigError("unknown environment '" + config.kind + "' (expected matrix or gridworld)");
  }
  if (config.sticky > 0.0) env = std::make_unique<StickyActions>(std::move(env), config.sticky);
  return env;
}

}  // namespace resq
