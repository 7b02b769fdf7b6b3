#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "resq/trainer/trainer.hpp"

namespace resq {

/// One finished training run: `run.json` ({"env", "method", "seed", "completed"})
/// plus `metrics.csv` in the same directory.
struct RunRecord {
  std::filesystem::path dir;
  std::string env;
  std::string method;
  std::uint64_t seed = 0;
  std::vector<MetricsRow> rows;
};

/// Reads metrics.csv written by run_experiment.
std::vector<MetricsRow> read_metrics(const std::filesystem::path& csv);
void write_run_info(const std::filesystem::path& dir, const std::string& env, const std::string& method,
                    std::uint64_t seed, bool completed, const nlohmann::json& extra = nlohmann::json::object());
/// Throws std::runtime_error with the reason when the run is absent or incomplete.
RunRecord load_run(const std::filesystem::path& dir);

struct CurvePoint {
  std::size_t env_step = 0;
  std::size_t runs = 0;
  double mean_return = 0.0, std_return = 0.0;
  double est_value = 0.0, true_value = 0.0;
  double norm_bias = 0.0, std_norm_bias = 0.0;
};

struct CellSummary {
  std::string env, method;
  std::vector<std::uint64_t> seeds;
  std::vector<CurvePoint> curve;
  double final_return = 0.0, final_return_std = 0.0;
  double final_bias = 0.0, final_bias_std = 0.0;
  double normalized = 0.0;  // min-max over methods within the environment
};

struct Report {
  std::vector<CellSummary> cells;
  std::vector<std::pair<std::string, double>> normalized_mean;  // per method, across environments
  std::vector<std::string> missing;                            // "dir: reason"
  nlohmann::json to_json() const;
};

/// Aggregates runs per (environment, method); unreadable runs are listed as missing.
Report build_report(const std::vector<std::filesystem::path>& run_dirs);

/// Writes report.json, report_summary.csv, report_curves.csv, bias.csv and the
/// long-format report_long.csv into `out_dir`.
Report emit_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir);

}  // namespace resq
