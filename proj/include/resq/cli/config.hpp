#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "resq/envs/factory.hpp"
#include "resq/trainer/trainer.hpp"

namespace resq::cli {

/// Named algorithm: the single mapping from method names to loss settings.
struct Preset {
  std::string name;
  TargetVariant target = TargetVariant::double_dqn;
  Regularizer regularizer = Regularizer::none;
  double lambda = 0.0;
  MixerKind mixer = MixerKind::qmix;
  std::size_t target_update_interval = 800;
  std::string summary;
};

const std::vector<Preset>& preset_table();
/// Throws ConfigError for an unknown name.
const Preset& find_preset(const std::string& name);

inline const std::vector<double> kLambdaGrid = {1e-2, 5e-2, 1e-1, 5e-1};

struct ExperimentConfig {
  EnvConfig env;
  std::string env_label;  // empty: derived from the environment
  std::string preset = "qmix";
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out;  // empty: output root / label / method / seed
  std::size_t jobs = 0;  // sweep workers; 0 = hardware concurrency
  std::vector<std::string> warnings;

  std::string label() const;
  /// Method name used in reports: preset, plus λ when it differs from the preset default.
  std::string method() const;
};

/// One `section.key = value` assignment and where it came from.
struct Assignment {
  std::string key;  // "section.key"
  std::string value;
  std::string origin;  // "file:line" or "--flag"
};

/// Parses INI text (flat `[section]` headers, `key = value`, `#`/`;` comments).
/// Malformed lines and unknown keys throw ConfigError with the line.
std::vector<Assignment> parse_ini(const std::string& text, const std::string& source);
std::vector<Assignment> read_ini(const std::filesystem::path& path);

/// Defaults, then the preset, then `assignments` in order, then validation.
/// The preset comes from `preset_override` when given, else from the assignments.
ExperimentConfig resolve_config(const std::vector<Assignment>& assignments, const std::string& preset_override = "");
/// Empty path gives the defaults.
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<Assignment>& overrides = {},
                             const std::string& preset_override = "");

/// Every key with its resolved value; parsing it back reproduces the config.
std::string to_ini(const ExperimentConfig& config);

/// Keys accepted in config files, as "section.key".
std::vector<std::string> known_keys();

/// RESQ_OUT_ROOT when set, else "runs".
std::filesystem::path output_root();
std::filesystem::path default_run_dir(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace resq::cli
