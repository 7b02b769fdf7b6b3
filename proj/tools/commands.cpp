#include "resq/cli/commands.hpp"

#include <cblas.h>

#include <atomic>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "resq/diagnostics/report.hpp"
#include "resq/diagnostics/verify.hpp"
#include "resq/error.hpp"
#include "resq/factorization/checkpoint.hpp"
#include "resq/trainer/rollout.hpp"

namespace resq::cli {

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return "";
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string resolve_key(const std::string& key) {
  const auto keys = known_keys();
  if (std::find(keys.begin(), keys.end(), key) != keys.end()) return key;
  for (const char* section : {"algorithm.", "train.", "env.", "run."}) {
    const std::string full = section + key;
    if (std::find(keys.begin(), keys.end(), full) != keys.end()) return full;
  }
  throw ConfigError("unknown key '" + key + "'");
}

Assignment parse_assignment(const std::string& text, const std::string& origin) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
    throw ConfigError(origin + ": expected key=value, got '" + text + "'");
  }
  return {resolve_key(text.substr(0, eq)), text.substr(eq + 1), origin};
}

std::string short_key(const std::string& key) { return key.substr(key.find('.') + 1); }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void print_warnings(const ExperimentConfig& c) {
  for (const std::string& w : c.warnings) std::cerr << "warning: " << w << '\n';
}

}  // namespace

bool run_completed(const fs::path& dir, const std::string& resolved) {
  if (slurp(dir / "config.ini") != resolved) return false;
  try {
    load_run(dir);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

RunStatus train_run(ExperimentConfig c, std::uint64_t seed, const fs::path& dir, const std::string& method,
                    std::ostream& log) {
  c.train.seed = seed;
  c.seeds = {seed};
  c.warnings.clear();
  const std::string resolved = to_ini(c);
  if (run_completed(dir, resolved)) return RunStatus::skipped;

  fs::create_directories(dir);
  const bool resume = slurp(dir / "config.ini") == resolved && fs::exists(dir / "checkpoint.json");
  if (!resume) {
    for (const char* stale : {"metrics.csv", "run.json", "checkpoint.json", "checkpoint.bin", "model.json", "model.bin"}) {
      fs::remove(dir / stale);
    }
  }
  write_text(dir / "config.ini", resolved);
  nlohmann::json extra = {{"preset", c.preset},
                          {"lambda", c.train.loss.lambda},
                          {"beta", c.train.loss.beta},
                          {"target", to_string(c.train.loss.target)},
                          {"regularizer", to_string(c.train.loss.regularizer)},
                          {"total_steps", c.train.total_steps}};
  write_run_info(dir, c.label(), method, seed, false, extra);

  const auto start = std::chrono::steady_clock::now();
  const std::vector<MetricsRow> rows = run_experiment(c.train, c.env, dir, resume);
  extra["seconds"] = seconds_since(start);
  if (!rows.empty()) {
    extra["final_return"] = rows.back().mean_return;
    if (std::isfinite(rows.back().norm_bias)) extra["final_norm_bias"] = rows.back().norm_bias;
  }
  write_run_info(dir, c.label(), method, seed, true, extra);
  log << c.label() << '/' << method << "/seed_" << seed << ": " << (resume ? "resumed" : "trained") << ' '
      << c.train.total_steps << " steps in " << std::fixed << std::setprecision(1) << extra["seconds"].get<double>()
      << " s";
  if (!rows.empty()) log << ", final return " << std::setprecision(3) << rows.back().mean_return;
  log << std::defaultfloat << '\n';
  return resume ? RunStatus::resumed : RunStatus::trained;
}

GridAxis parse_grid(const std::string& text) {
  const Assignment a = parse_assignment(text, "--grid");
  GridAxis axis{a.key, {}};
  std::stringstream ss(a.value);
  for (std::string v; std::getline(ss, v, ',');) {
    if (v.empty()) throw ConfigError("--grid: empty value in '" + text + "'");
    axis.values.push_back(v);
  }
  return axis;
}

std::vector<SweepCell> sweep_cells(const ExperimentConfig& base, const std::vector<GridAxis>& axes,
                                   const std::vector<std::uint64_t>& seeds, const fs::path& root) {
  std::vector<std::vector<Assignment>> combos = {{}};
  for (const GridAxis& axis : axes) {
    std::vector<std::vector<Assignment>> next;
    for (const auto& combo : combos) {
      for (const std::string& v : axis.values) {
        auto extended = combo;
        extended.push_back({axis.key, v, "--grid"});
        next.push_back(std::move(extended));
      }
    }
    combos = std::move(next);
  }
  const std::vector<Assignment> base_assignments = parse_ini(to_ini(base), "resolved");
  std::vector<SweepCell> cells;
  for (const auto& combo : combos) {
    auto all = base_assignments;
    all.insert(all.end(), combo.begin(), combo.end());
    const ExperimentConfig config = resolve_config(all);
    std::string method = config.method();
    for (const Assignment& a : combo) {
      if (a.key != "algorithm.lambda") method += "_" + short_key(a.key) + a.value;
    }
    for (std::uint64_t seed : seeds) {
      cells.push_back({config, seed, method, root / config.label() / method / ("seed_" + std::to_string(seed))});
    }
  }
  return cells;
}

SweepOutcome run_sweep(const std::vector<SweepCell>& cells, std::size_t jobs, std::ostream& log) {
  SweepOutcome out;
  for (const SweepCell& c : cells) out.dirs.push_back(c.dir);
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      std::ostringstream line;
      try {
        const RunStatus s = train_run(cells[i].config, cells[i].seed, cells[i].dir, cells[i].method, line);
        std::lock_guard lock(mutex);
        if (s == RunStatus::skipped) {
          ++out.skipped;
          log << cells[i].dir.string() << ": already complete, skipped\n";
        } else {
          log << line.str();
        }
      } catch (const std::exception& e) {
        std::lock_guard lock(mutex);
        out.failures.push_back(cells[i].dir.string() + ": " + e.what());
        log << "FAILED " << cells[i].dir.string() << ": " << e.what() << '\n';
      }
      log.flush();
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  return out;
}

std::vector<fs::path> find_runs(const fs::path& root) {
  std::vector<fs::path> out;
  if (!fs::exists(root)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().filename() == "run.json") out.push_back(entry.path().parent_path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

struct CommonFlags {
  std::string config;
  std::string preset;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "experiment config file (INI)");
  cmd->add_option("--preset", f.preset, "algorithm preset; overrides the config file");
  cmd->add_option("--steps", f.steps, "total environment steps; overrides the config file");
  cmd->add_option("--set", f.sets, "extra override, section.key=value (repeatable)");
}

ExperimentConfig resolve(CLI::App* cmd, const CommonFlags& f) {
  std::vector<Assignment> overrides;
  for (const std::string& s : f.sets) overrides.push_back(parse_assignment(s, "--set"));
  if (cmd->count("--steps")) overrides.push_back({"train.total_steps", std::to_string(f.steps), "--steps"});
  if (cmd->get_option_no_throw("--seed") && cmd->count("--seed")) {
    overrides.push_back({"train.seed", std::to_string(f.seed), "--seed"});
  }
  ExperimentConfig c = load_config(f.config, overrides, f.preset);
  print_warnings(c);
  return c;
}

int cmd_train(CLI::App* cmd, const CommonFlags& f) {
  ExperimentConfig c = resolve(cmd, f);
  const fs::path dir = f.out.empty() ? default_run_dir(c, c.train.seed) : fs::path(f.out);
  const RunStatus s = train_run(c, c.train.seed, dir, c.method(), std::cout);
  if (s == RunStatus::skipped) std::cout << dir.string() << ": already complete, skipped\n";
  std::cout << "run directory: " << dir.string() << '\n';
  return kSuccess;
}

int cmd_eval(const std::string& run_dir, std::size_t episodes, std::uint64_t seed) {
  const fs::path dir(run_dir);
  const ExperimentConfig c = load_config(dir / "config.ini");
  auto env = make_env(c.env, c.train.gamma);
  FactorizedQModel model(model_config(c.train, env->spec()), c.train.seed);
  load_model(model, dir / "model");
  const EvalResult r = evaluate_policy(*env, model, episodes, seed, c.train.gamma);
  const nlohmann::json j = {{"episodes", r.episodes},
                            {"mean_return", r.mean_return},
                            {"std_return", r.std_return},
                            {"mean_discounted", r.mean_discounted},
                            {"std_discounted", r.std_discounted},
                            {"seed", seed}};
  write_text(dir / "eval.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << '\n';
  return kSuccess;
}

int cmd_verify(const std::string& suite, const std::string& out, std::uint64_t seed) {
  const auto results = run_suite(suite, VerifyOptions{seed});
  const fs::path dir = out.empty() ? output_root() / "verify" : fs::path(out);
  fs::create_directories(dir);
  bool all = true;
  for (const CheckResult& r : results) {
    all = all && r.passed;
    std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << '\n';
    for (const std::string& line : r.lines) std::cout << "    " << line << '\n';
    if (!r.table.empty()) {
      std::ostringstream csv;
      csv.precision(17);
      for (std::size_t i = 0; i < r.table_header.size(); ++i) csv << (i ? "," : "") << r.table_header[i];
      csv << '\n';
      for (const auto& row : r.table) {
        for (std::size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << row[i];
        csv << '\n';
      }
      write_text(dir / (r.name + ".csv"), csv.str());
    }
  }
  write_text(dir / "theorems.json", theorems_json(results).dump(2) + "\n");
  std::cout << (all ? "all checks passed" : "some checks FAILED") << "; results in " << dir.string() << '\n';
  return all ? kSuccess : kFailure;
}

int print_report(const Report& rep, const fs::path& out) {
  std::cout << std::fixed << std::setprecision(3);
  for (const CellSummary& c : rep.cells) {
    std::cout << c.env << " / " << c.method << ": final return " << c.final_return << " +- " << c.final_return_std
              << ", normalized bias " << c.final_bias << " (" << c.seeds.size() << " runs, score " << c.normalized
              << ")\n";
  }
  std::cout << "ranking by normalized final return:\n";
  for (const auto& [method, score] : rep.normalized_mean) std::cout << "  " << method << "  " << score << '\n';
  std::cout << std::defaultfloat;
  for (const std::string& m : rep.missing) std::cout << "missing: " << m << '\n';
  std::cout << "report written to " << out.string() << '\n';
  return rep.cells.empty() ? kFailure : kSuccess;
}

int cmd_sweep(CLI::App* cmd, const CommonFlags& f, const std::vector<std::string>& grid, std::size_t seed_count) {
  ExperimentConfig c = resolve(cmd, f);
  std::vector<GridAxis> axes;
  for (const std::string& g : grid) axes.push_back(parse_grid(g));
  std::vector<std::uint64_t> seeds = c.seeds;
  if (seed_count > 0) {
    seeds.clear();
    for (std::uint64_t s = 1; s <= seed_count; ++s) seeds.push_back(s);
  }
  const fs::path root = !f.out.empty() ? fs::path(f.out) : !c.out.empty() ? fs::path(c.out) : output_root();
  const auto cells = sweep_cells(c, axes, seeds, root);
  std::cout << "sweep: " << cells.size() << " runs under " << root.string() << '\n';
  const SweepOutcome outcome = run_sweep(cells, c.jobs, std::cout);
  const fs::path report_dir = root / c.label() / ("report_" + c.preset);
  const Report rep = emit_report(outcome.dirs, report_dir);
  print_report(rep, report_dir);
  if (!outcome.failures.empty()) {
    std::cout << outcome.failures.size() << " of " << cells.size() << " runs failed\n";
    return kFailure;
  }
  return kSuccess;
}

}  // namespace

int run_cli(int argc, char** argv) {
  openblas_set_num_threads(1);
  CLI::App app{"Value-factorization experiments with regularized softmax targets"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  auto* train = app.add_subcommand("train", "train one seed");
  add_common(train, train_flags);
  train->add_option("--seed", train_flags.seed, "run seed; overrides the config file");
  train->add_option("--out", train_flags.out, "run directory (default: output root/label/method/seed_N)");

  std::string eval_dir;
  std::size_t eval_episodes = 100;
  std::uint64_t eval_seed = 12345;
  auto* eval = app.add_subcommand("eval", "evaluate the greedy policy of a trained run");
  eval->add_option("--out,run", eval_dir, "run directory")->required();
  eval->add_option("--episodes", eval_episodes, "evaluation episodes");
  eval->add_option("--seed", eval_seed, "evaluation seed");

  std::string suite = "all", verify_out;
  std::uint64_t verify_seed = 2024;
  auto* verify = app.add_subcommand("verify", "run property and theorem checks");
  verify->add_option("--suite,suite", suite, "thm1 | thm2 | thm3 | uniform | gradcheck | igm | all");
  verify->add_option("--out", verify_out, "directory for theorems.json and tables");
  verify->add_option("--seed", verify_seed, "random seed for the checks");

  CommonFlags sweep_flags;
  std::vector<std::string> grid;
  std::size_t seed_count = 0;
  auto* sweep = app.add_subcommand("sweep", "grid of settings times seeds, run in parallel, then report");
  add_common(sweep, sweep_flags);
  sweep->add_option("--grid", grid, "key=v1,v2,... (repeatable; e.g. lambda=0.01,0.05,0.1,0.5)");
  sweep->add_option("--seeds", seed_count, "use seeds 1..k instead of run.seeds");
  sweep->add_option("--out", sweep_flags.out, "output root for the sweep");

  std::vector<std::string> report_dirs;
  std::string report_root, report_out;
  auto* report = app.add_subcommand("report", "aggregate finished runs");
  report->add_option("dirs", report_dirs, "run directories");
  report->add_option("--root", report_root, "collect every run below this directory");
  report->add_option("--out", report_out, "output directory (default: root/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kConfigError;
  }

  try {
    if (*train) return cmd_train(train, train_flags);
    if (*eval) return cmd_eval(eval_dir, eval_episodes, eval_seed);
    if (*verify) return cmd_verify(suite, verify_out, verify_seed);
    if (*sweep) return cmd_sweep(sweep, sweep_flags, grid, seed_count);
    if (*report) {
      std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
      if (!report_root.empty()) {
        const auto found = find_runs(report_root);
        dirs.insert(dirs.end(), found.begin(), found.end());
      }
      if (dirs.empty()) throw ConfigError("report needs run directories or --root");
      const fs::path out = !report_out.empty()    ? fs::path(report_out)
                           : !report_root.empty() ? fs::path(report_root) / "report"
                                                  : output_root() / "report";
      return print_report(emit_report(dirs, out), out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace resq::cli
