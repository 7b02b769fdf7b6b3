#include "resq/diagnostics/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace resq {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double parse_number(const std::string& s) {
  if (s == "nan" || s.empty()) return kNaN;
  return std::stod(s);
}

// Mean and population standard deviation over the finite entries.
std::pair<double, double> moments(const std::vector<double>& xs) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double x : xs) {
    if (std::isfinite(x)) {
      sum += x;
      ++n;
    }
  }
  if (n == 0) return {kNaN, kNaN};
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (double x : xs) {
    if (std::isfinite(x)) sq += (x - mean) * (x - mean);
  }
  return {mean, std::sqrt(sq / static_cast<double>(n))};
}

std::string num(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream out;
  out.precision(12);
  out << v;
  return out.str();
}

nlohmann::json jnum(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

std::vector<MetricsRow> read_metrics(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("missing " + csv.string());
  std::string line;
  if (!std::getline(in, line) || line != metrics_header()) throw std::runtime_error("bad header in " + csv.string());
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 10) throw std::runtime_error("malformed row in " + csv.string() + ": " + line);
    MetricsRow r;
    r.env_step = std::stoull(f[0]);
    r.episode = std::stoull(f[1]);
    r.mean_return = parse_number(f[2]);
    r.std_return = parse_number(f[3]);
    r.loss = parse_number(f[4]);
    r.est_value = parse_number(f[5]);
    r.true_value = parse_number(f[6]);
    r.norm_bias = parse_number(f[7]);
    r.epsilon = parse_number(f[8]);
    r.seed = std::stoull(f[9]);
    rows.push_back(r);
  }
  return rows;
}

void write_run_info(const fs::path& dir, const std::string& env, const std::string& method, std::uint64_t seed,
                    bool completed, const nlohmann::json& extra) {
  nlohmann::json j = extra;
  j["env"] = env;
  j["method"] = method;
  j["seed"] = seed;
  j["completed"] = completed;
  write_file(dir / "run.json", j.dump(2) + "\n");
}

RunRecord load_run(const fs::path& dir) {
  std::ifstream in(dir / "run.json");
  if (!in) throw std::runtime_error("no run.json");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("unreadable run.json: ") + e.what());
  }
  if (!j.value("completed", false)) throw std::runtime_error("run did not complete");
  RunRecord r;
  r.dir = dir;
  r.env = j.at("env").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.rows = read_metrics(dir / "metrics.csv");
  if (r.rows.empty()) throw std::runtime_error("metrics.csv has no rows");
  return r;
}

nlohmann::json Report::to_json() const {
  nlohmann::json j;
  j["environments"] = nlohmann::json::object();
  for (const CellSummary& c : cells) {
    nlohmann::json curve = nlohmann::json::array();
    for (const CurvePoint& p : c.curve) {
      curve.push_back({{"env_step", p.env_step}, {"runs", p.runs}, {"mean_return", jnum(p.mean_return)},
                       {"std_return", jnum(p.std_return)}, {"est_value", jnum(p.est_value)},
                       {"true_value", jnum(p.true_value)}, {"norm_bias", jnum(p.norm_bias)},
                       {"std_norm_bias", jnum(p.std_norm_bias)}});
    }
    j["environments"][c.env][c.method] = {{"seeds", c.seeds},
                                          {"final_return", jnum(c.final_return)},
                                          {"final_return_std", jnum(c.final_return_std)},
                                          {"final_norm_bias", jnum(c.final_bias)},
                                          {"final_norm_bias_std", jnum(c.final_bias_std)},
                                          {"normalized_score", jnum(c.normalized)},
                                          {"curve", curve}};
  }
  j["normalized_mean"] = nlohmann::json::object();
  j["ranking"] = nlohmann::json::array();
  for (const auto& [method, score] : normalized_mean) {
    j["normalized_mean"][method] = jnum(score);
    j["ranking"].push_back(method);
  }
  j["missing"] = missing;
  return j;
}

Report build_report(const std::vector<fs::path>& run_dirs) {
  Report report;
  std::map<std::pair<std::string, std::string>, std::vector<RunRecord>> groups;
  for (const fs::path& dir : run_dirs) {
    try {
      RunRecord r = load_run(dir);
      groups[{r.env, r.method}].push_back(std::move(r));
    } catch (const std::exception& e) {
      report.missing.push_back(dir.string() + ": " + e.what());
    }
  }

  for (auto& [key, runs] : groups) {
    CellSummary cell;
    cell.env = key.first;
    cell.method = key.second;
    std::map<std::size_t, std::vector<const MetricsRow*>> by_step;
    std::vector<double> finals, final_bias;
    for (const RunRecord& r : runs) {
      cell.seeds.push_back(r.seed);
      for (const MetricsRow& row : r.rows) by_step[row.env_step].push_back(&row);
      finals.push_back(r.rows.back().mean_return);
      final_bias.push_back(r.rows.back().norm_bias);
    }
    for (const auto& [step, rows] : by_step) {
      std::vector<double> ret, est, tru, bias;
      for (const MetricsRow* row : rows) {
        ret.push_back(row->mean_return);
        est.push_back(row->est_value);
        tru.push_back(row->true_value);
        bias.push_back(row->norm_bias);
      }
      CurvePoint p;
      p.env_step = step;
      p.runs = rows.size();
      std::tie(p.mean_return, p.std_return) = moments(ret);
      p.est_value = moments(est).first;
      p.true_value = moments(tru).first;
      std::tie(p.norm_bias, p.std_norm_bias) = moments(bias);
      cell.curve.push_back(p);
    }
    std::tie(cell.final_return, cell.final_return_std) = moments(finals);
    std::tie(cell.final_bias, cell.final_bias_std) = moments(final_bias);
    report.cells.push_back(std::move(cell));
  }

  // Min-max normalisation of final returns within each environment.
  std::map<std::string, std::pair<double, double>> range;
  for (const CellSummary& c : report.cells) {
    auto [it, fresh] = range.try_emplace(c.env, c.final_return, c.final_return);
    if (!fresh) {
      it->second.first = std::min(it->second.first, c.final_return);
      it->second.second = std::max(it->second.second, c.final_return);
    }
  }
  std::map<std::string, std::vector<double>> per_method;
  for (CellSummary& c : report.cells) {
    const auto [lo, hi] = range[c.env];
    c.normalized = hi > lo ? (c.final_return - lo) / (hi - lo) : 1.0;
    per_method[c.method].push_back(c.normalized);
  }
  for (const auto& [method, scores] : per_method) report.normalized_mean.emplace_back(method, moments(scores).first);
  std::stable_sort(report.normalized_mean.begin(), report.normalized_mean.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return report;
}

Report emit_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  Report report = build_report(run_dirs);
  fs::create_directories(out_dir);
  write_file(out_dir / "report.json", report.to_json().dump(2) + "\n");

  std::ostringstream summary, curves, bias, long_form;
  summary << "env,method,runs,final_return,final_return_std,final_norm_bias,final_norm_bias_std,normalized_score\n";
  curves << "env,method,env_step,runs,mean_return,std_return,est_value,true_value,norm_bias,std_norm_bias\n";
  for (const CellSummary& c : report.cells) {
    summary << c.env << ',' << c.method << ',' << c.seeds.size() << ',' << num(c.final_return) << ','
            << num(c.final_return_std) << ',' << num(c.final_bias) << ',' << num(c.final_bias_std) << ','
            << num(c.normalized) << '\n';
    for (const CurvePoint& p : c.curve) {
      curves << c.env << ',' << c.method << ',' << p.env_step << ',' << p.runs << ',' << num(p.mean_return) << ','
             << num(p.std_return) << ',' << num(p.est_value) << ',' << num(p.true_value) << ',' << num(p.norm_bias)
             << ',' << num(p.std_norm_bias) << '\n';
    }
  }
  bias << "env,method,seed,env_step,est_value,true_value,norm_bias\n";
  long_form << "env,method,seed,env_step,metric,value\n";
  for (const fs::path& dir : run_dirs) {
    RunRecord r;
    try {
      r = load_run(dir);
    } catch (const std::exception&) {
      continue;
    }
    for (const MetricsRow& row : r.rows) {
      bias << r.env << ',' << r.method << ',' << r.seed << ',' << row.env_step << ',' << num(row.est_value) << ','
           << num(row.true_value) << ',' << num(row.norm_bias) << '\n';
      const std::pair<const char*, double> metrics[] = {{"mean_return", row.mean_return}, {"std_return", row.std_return},
                                                        {"loss", row.loss},               {"est_value", row.est_value},
                                                        {"true_value", row.true_value},   {"norm_bias", row.norm_bias},
                                                        {"epsilon", row.epsilon}};
      for (const auto& [name, value] : metrics) {
        long_form << r.env << ',' << r.method << ',' << r.seed << ',' << row.env_step << ',' << name << ','
                  << num(value) << '\n';
      }
    }
  }
  write_file(out_dir / "report_summary.csv", summary.str());
  write_file(out_dir / "report_curves.csv", curves.str());
  write_file(out_dir / "bias.csv", bias.str());
  write_file(out_dir / "report_long.csv", long_form.str());
  return report;
}

}  // namespace resq
