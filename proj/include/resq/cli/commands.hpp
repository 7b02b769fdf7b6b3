#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "resq/cli/config.hpp"

namespace resq::cli {

enum ExitCode : int { kSuccess = 0, kFailure = 1, kConfigError = 2 };

enum class RunStatus { trained, resumed, skipped };

/// Trains one seed into `dir`: config.ini (resolved), run.json, metrics.csv,
/// model and optional checkpoints. A completed run with the same resolved
/// config is skipped; an interrupted one resumes from its checkpoint.
RunStatus train_run(ExperimentConfig config, std::uint64_t seed, const std::filesystem::path& dir,
                    const std::string& method, std::ostream& log);

/// True when `dir` holds a finished run whose config.ini equals `resolved`.
bool run_completed(const std::filesystem::path& dir, const std::string& resolved);

struct GridAxis {
  std::string key;  // "section.key"
  std::vector<std::string> values;
};
/// Parses "lambda=0.01,0.05" (section optional for algorithm and train keys).
GridAxis parse_grid(const std::string& text);

struct SweepCell {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  std::string method;
  std::filesystem::path dir;
};

/// Cartesian product of the axes times the seeds, with run directories under `root`.
std::vector<SweepCell> sweep_cells(const ExperimentConfig& base, const std::vector<GridAxis>& axes,
                                   const std::vector<std::uint64_t>& seeds, const std::filesystem::path& root);

struct SweepOutcome {
  std::vector<std::filesystem::path> dirs;
  std::vector<std::string> failures;
  std::size_t skipped = 0;
};

/// Runs the cells on `jobs` worker threads; a failing cell is reported and the rest continue.
SweepOutcome run_sweep(const std::vector<SweepCell>& cells, std::size_t jobs, std::ostream& log);

/// Every directory below `root` that holds a run.json.
std::vector<std::filesystem::path> find_runs(const std::filesystem::path& root);

/// Entry point; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace resq::cli
