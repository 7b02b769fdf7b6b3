#include "resq/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "resq/error.hpp"

namespace resq::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double to_double(const std::string& s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError("expected a number, got '" + s + "'");
  }
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw ConfigError("expected a non-negative integer, got '" + s + "'");
  return v;
}

std::size_t to_size(const std::string& s) { return static_cast<std::size_t>(to_u64(s)); }

int to_int(const std::string& s) {
  int v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw ConfigError("expected an integer, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty entry in list '" + s + "'");
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + f(xs[i]);
  return out;
}

MixerKind to_mixer(const std::string& s) {
  if (s == "qmix") return MixerKind::qmix;
  if (s == "vdn") return MixerKind::vdn;
  throw ConfigError("mixer must be qmix or vdn, got '" + s + "'");
}

std::string mixer_name(MixerKind k) { return k == MixerKind::qmix ? "qmix" : "vdn"; }

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct KeyDef {
  std::string key;
  Setter set;
  Getter get;
  std::string kind;  // environment kind the key applies to; empty for all
};

#define RESQ_NUM(path, field)                                                         \
  KeyDef {                                                                            \
    path, [](ExperimentConfig& c, const std::string& v) { c.field = to_double(v); }, \
        [](const ExperimentConfig& c) { return fmt(c.field); }, ""                   \
  }
#define RESQ_SIZE(path, field)                                                      \
  KeyDef {                                                                          \
    path, [](ExperimentConfig& c, const std::string& v) { c.field = to_size(v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }, ""      \
  }

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = [] {
    std::vector<KeyDef> t;
    // [env]
    t.push_back({"env.kind",
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v != "matrix" && v != "gridworld") throw ConfigError("kind must be matrix or gridworld");
                   c.env.kind = v;
                 },
                 [](const ExperimentConfig& c) { return c.env.kind; }, ""});
    t.push_back({"env.label", [](ExperimentConfig& c, const std::string& v) { c.env_label = v; },
                 [](const ExperimentConfig& c) { return c.env_label; }, ""});
    t.push_back(RESQ_NUM("env.sticky", env.sticky));
    KeyDef m;
    m = RESQ_SIZE("env.n_agents", env.matrix.n_agents);
    m.kind = "matrix";
    t.push_back(m);
    m = RESQ_SIZE("env.n_actions", env.matrix.n_actions);
    m.kind = "matrix";
    t.push_back(m);
    t.push_back({"env.payoff",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.env.matrix.payoff.clear();
                   for (const std::string& x : split_list(v)) c.env.matrix.payoff.push_back(to_double(x));
                 },
                 [](const ExperimentConfig& c) { return join(c.env.matrix.payoff, fmt); }, "matrix"});
    m = RESQ_NUM("env.noise_std", env.matrix.noise_std);
    m.kind = "matrix";
    t.push_back(m);
    m = RESQ_SIZE("env.horizon", env.matrix.horizon);
    m.kind = "matrix";
    t.push_back(m);
    const auto grid_int = [](const std::string& key, int GridWorldSpec::*field) {
      return KeyDef{key, [field](ExperimentConfig& c, const std::string& v) { c.env.grid.*field = to_int(v); },
                    [field](const ExperimentConfig& c) { return std::to_string(c.env.grid.*field); }, "gridworld"};
    };
    const auto grid_size = [](const std::string& key, std::size_t GridWorldSpec::*field) {
      return KeyDef{key, [field](ExperimentConfig& c, const std::string& v) { c.env.grid.*field = to_size(v); },
                    [field](const ExperimentConfig& c) { return std::to_string(c.env.grid.*field); }, "gridworld"};
    };
    const auto grid_num = [](const std::string& key, double GridWorldSpec::*field) {
      return KeyDef{key, [field](ExperimentConfig& c, const std::string& v) { c.env.grid.*field = to_double(v); },
                    [field](const ExperimentConfig& c) { return fmt(c.env.grid.*field); }, "gridworld"};
    };
    t.push_back(grid_int("env.side", &GridWorldSpec::side));
    t.push_back(grid_size("env.n_predators", &GridWorldSpec::n_predators));
    t.push_back(grid_num("env.capture_reward", &GridWorldSpec::capture_reward));
    t.push_back(grid_num("env.step_cost", &GridWorldSpec::step_cost));
    t.push_back(grid_int("env.capture_radius", &GridWorldSpec::capture_radius));
    t.push_back(grid_size("env.captors_needed", &GridWorldSpec::captors_needed));
    t.push_back(grid_size("env.episode_limit", &GridWorldSpec::episode_limit));
    t.push_back(grid_int("env.prey_speed", &GridWorldSpec::prey_speed));
    t.push_back({"env.partial_obs",
                 [](ExperimentConfig& c, const std::string& v) { c.env.grid.partial_obs = to_bool(v); },
                 [](const ExperimentConfig& c) { return std::string(c.env.grid.partial_obs ? "true" : "false"); },
                 "gridworld"});
    t.push_back(grid_int("env.view_radius", &GridWorldSpec::view_radius));

    // [algorithm]; the preset itself is resolved before the other keys
    t.push_back({"algorithm.preset", [](ExperimentConfig&, const std::string&) {},
                 [](const ExperimentConfig& c) { return c.preset; }, ""});
    t.push_back({"algorithm.target",
                 [](ExperimentConfig& c, const std::string& v) { c.train.loss.target = parse_target_variant(v); },
                 [](const ExperimentConfig& c) { return to_string(c.train.loss.target); }, ""});
    t.push_back({"algorithm.regularizer",
                 [](ExperimentConfig& c, const std::string& v) { c.train.loss.regularizer = parse_regularizer(v); },
                 [](const ExperimentConfig& c) { return to_string(c.train.loss.regularizer); }, ""});
    t.push_back(RESQ_NUM("algorithm.lambda", train.loss.lambda));
    t.push_back(RESQ_NUM("algorithm.beta", train.loss.beta));
    t.push_back(RESQ_SIZE("algorithm.n_steps", train.loss.n_steps));
    t.push_back({"algorithm.double_q",
                 [](ExperimentConfig& c, const std::string& v) { c.train.loss.double_q = to_bool(v); },
                 [](const ExperimentConfig& c) { return std::string(c.train.loss.double_q ? "true" : "false"); }, ""});
    t.push_back({"algorithm.mixer", [](ExperimentConfig& c, const std::string& v) { c.train.mixer = to_mixer(v); },
                 [](const ExperimentConfig& c) { return mixer_name(c.train.mixer); }, ""});

    // [train]
    t.push_back(RESQ_NUM("train.gamma", train.gamma));
    t.push_back(RESQ_NUM("train.lr", train.lr));
    t.push_back(RESQ_NUM("train.max_grad_norm", train.max_grad_norm));
    t.push_back(RESQ_SIZE("train.batch_size", train.batch_size));
    t.push_back(RESQ_SIZE("train.buffer_capacity", train.buffer_capacity));
    t.push_back(RESQ_NUM("train.warmup_ratio", train.warmup_ratio));
    t.push_back(RESQ_NUM("train.epsilon_start", train.epsilon_start));
    t.push_back(RESQ_NUM("train.epsilon_finish", train.epsilon_finish));
    t.push_back(RESQ_SIZE("train.epsilon_anneal_steps", train.epsilon_anneal_steps));
    t.push_back(RESQ_SIZE("train.target_update_interval", train.target_update_interval));
    t.push_back(RESQ_SIZE("train.total_steps", train.total_steps));
    t.push_back(RESQ_SIZE("train.eval_interval", train.eval_interval));
    t.push_back(RESQ_SIZE("train.eval_episodes", train.eval_episodes));
    t.push_back(RESQ_SIZE("train.bias_states", train.bias_states));
    t.push_back(RESQ_SIZE("train.bias_rollouts", train.bias_rollouts));
    t.push_back(RESQ_SIZE("train.checkpoint_interval", train.checkpoint_interval));
    t.push_back({"train.seed", [](ExperimentConfig& c, const std::string& v) { c.train.seed = to_u64(v); },
                 [](const ExperimentConfig& c) { return std::to_string(c.train.seed); }, ""});
    t.push_back(RESQ_SIZE("train.agent_hidden", train.agent_hidden));
    t.push_back({"train.recurrent", [](ExperimentConfig& c, const std::string& v) { c.train.recurrent = to_bool(v); },
                 [](const ExperimentConfig& c) { return std::string(c.train.recurrent ? "true" : "false"); }, ""});
    t.push_back(RESQ_SIZE("train.mixing_embed", train.mixing_embed));
    t.push_back(RESQ_SIZE("train.hypernet_hidden", train.hypernet_hidden));

    // [run]
    t.push_back({"run.seeds",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.seeds.clear();
                   for (const std::string& x : split_list(v)) c.seeds.push_back(to_u64(x));
                 },
                 [](const ExperimentConfig& c) {
                   return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
                 },
                 ""});
    t.push_back({"run.out", [](ExperimentConfig& c, const std::string& v) { c.out = v; },
                 [](const ExperimentConfig& c) { return c.out; }, ""});
    t.push_back(RESQ_SIZE("run.jobs", jobs));
    return t;
  }();
  return table;
}

#undef RESQ_NUM
#undef RESQ_SIZE

const KeyDef* find_key(const std::string& key) {
  for (const KeyDef& d : key_table()) {
    if (d.key == key) return &d;
  }
  return nullptr;
}

bool on_grid(double lambda) {
  return std::any_of(kLambdaGrid.begin(), kLambdaGrid.end(), [&](double g) { return std::abs(g - lambda) < 1e-12; });
}

}  // namespace

const std::vector<Preset>& preset_table() {
  using TV = TargetVariant;
  using R = Regularizer;
  static const std::vector<Preset> table = {
      {"qmix", TV::double_dqn, R::none, 0.0, MixerKind::qmix, 800, "QMIX with double-DQN targets"},
      {"vdn", TV::double_dqn, R::none, 0.0, MixerKind::vdn, 200, "additive mixing"},
      {"qmix_cdq", TV::cdq_agent, R::none, 0.0, MixerKind::qmix, 800, "clipped double Q per agent"},
      {"qmix_cdq_joint", TV::cdq_joint, R::none, 0.0, MixerKind::qmix, 800, "clipped double Q on Q_tot"},
      {"qmix_gradreg", TV::double_dqn, R::gradreg, 5e-2, MixerKind::qmix, 800, "penalty on mixer partials"},
      {"qmix_l2", TV::double_dqn, R::l2, 1e-2, MixerKind::qmix, 800, "L2 weight penalty"},
      {"re_qmix", TV::double_dqn, R::return_mc, 5e-2, MixerKind::qmix, 800, "return regularizer"},
      {"re_plus_qmix", TV::double_dqn, R::return_clipped, 5e-2, MixerKind::qmix, 800, "clipped return regularizer"},
      {"re_qmix_nstep", TV::double_dqn, R::nstep, 5e-2, MixerKind::qmix, 800, "N-step return regularizer"},
      {"s_qmix", TV::softmax_subspace, R::none, 0.0, MixerKind::qmix, 800, "subspace softmax target"},
      {"res_qmix", TV::softmax_subspace, R::return_mc, 5e-2, MixerKind::qmix, 800,
       "subspace softmax target plus return regularizer"},
      {"res_rs", TV::softmax_random, R::return_mc, 5e-2, MixerKind::qmix, 800,
       "softmax over randomly sampled joint actions plus return regularizer"},
      {"res_dc", TV::softmax_exact, R::return_mc, 5e-2, MixerKind::qmix, 800,
       "softmax over all joint actions plus return regularizer"},
      {"softmax_per_agent", TV::softmax_per_agent, R::return_mc, 5e-2, MixerKind::qmix, 800,
       "per-agent softmax mixed by f_s plus return regularizer"},
  };
  return table;
}

const Preset& find_preset(const std::string& name) {
  for (const Preset& p : preset_table()) {
    if (p.name == name) return p;
  }
  std::string names;
  for (const Preset& p : preset_table()) names += (names.empty() ? "" : ", ") + p.name;
  throw ConfigError("unknown preset '" + name + "' (known: " + names + ")");
}

std::string ExperimentConfig::label() const {
  if (!env_label.empty()) return env_label;
  std::string out = env.kind;
  if (env.kind == "matrix" && env.matrix.noise_std > 0.0) out += "_noise" + fmt(env.matrix.noise_std);
  if (env.sticky > 0.0) out += "_sticky" + fmt(env.sticky);
  return out;
}

std::string ExperimentConfig::method() const {
  const Preset& p = find_preset(preset);
  if (train.loss.regularizer != Regularizer::none && train.loss.lambda != p.lambda) {
    return preset + "_lam" + fmt(train.loss.lambda);
  }
  return preset;
}

std::vector<Assignment> parse_ini(const std::string& text, const std::string& source) {
  std::vector<Assignment> out;
  std::string section;
  std::istringstream in(text);
  std::size_t number = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++number;
    const std::string where = source + ":" + std::to_string(number);
    std::string line = raw;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header: " + raw);
      section = trim(line.substr(1, line.size() - 2));
      if (section != "env" && section != "algorithm" && section != "train" && section != "run") {
        throw ConfigError(where + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value: " + raw);
    if (section.empty()) throw ConfigError(where + ": key outside any section: " + raw);
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!find_key(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    if (value.empty()) throw ConfigError(where + ": empty value for '" + key + "'");
    out.push_back({key, value, where});
  }
  return out;
}

std::vector<Assignment> read_ini(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_ini(ss.str(), path.string());
}

ExperimentConfig resolve_config(const std::vector<Assignment>& assignments, const std::string& preset_override) {
  ExperimentConfig c;
  for (const Assignment& a : assignments) {
    if (!find_key(a.key)) throw ConfigError(a.origin + ": unknown key '" + a.key + "'");
    if (a.key == "algorithm.preset") c.preset = a.value;
  }
  if (!preset_override.empty()) c.preset = preset_override;
  const Preset& p = find_preset(c.preset);
  c.train.loss.target = p.target;
  c.train.loss.regularizer = p.regularizer;
  c.train.loss.lambda = p.lambda;
  c.train.mixer = p.mixer;
  c.train.target_update_interval = p.target_update_interval;

  for (const Assignment& a : assignments) {
    try {
      find_key(a.key)->set(c, a.value);
    } catch (const ConfigError& e) {
      throw ConfigError(a.origin + ": " + a.key + ": " + e.what());
    }
  }
  for (const Assignment& a : assignments) {
    const KeyDef* d = find_key(a.key);
    if (!d->kind.empty() && d->kind != c.env.kind) {
      throw ConfigError(a.origin + ": '" + a.key + "' applies to kind = " + d->kind + " only");
    }
  }

  try {
    c.train.validate();
    if (!(c.env.sticky >= 0.0 && c.env.sticky < 1.0)) throw ConfigError("env.sticky must lie in [0, 1)");
    if (c.seeds.empty()) throw ConfigError("run.seeds must not be empty");
    make_env(c.env, c.train.gamma);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid environment: ") + e.what());
  }
  if (c.train.loss.regularizer != Regularizer::none && c.train.loss.regularizer != Regularizer::l2 &&
      c.train.loss.regularizer != Regularizer::gradreg && !on_grid(c.train.loss.lambda)) {
    c.warnings.push_back("lambda = " + fmt(c.train.loss.lambda) +
                         " is outside the tuning grid {0.01, 0.05, 0.1, 0.5}");
  }
  if (c.train.bias_states > 0 && c.train.bias_states < 100) {
    c.warnings.push_back("bias_states = " + std::to_string(c.train.bias_states) +
                         " is below the recommended 100 bias states");
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<Assignment>& overrides,
                             const std::string& preset_override) {
  std::vector<Assignment> all;
  if (!path.empty()) all = read_ini(path);
  all.insert(all.end(), overrides.begin(), overrides.end());
  return resolve_config(all, preset_override);
}

std::string to_ini(const ExperimentConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const KeyDef& d : key_table()) {
    if (!d.kind.empty() && d.kind != config.env.kind) continue;
    const std::string value = d.get(config);
    if (value.empty()) continue;
    const auto dot = d.key.find('.');
    const std::string sec = d.key.substr(0, dot);
    if (sec != section) {
      out << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
      section = sec;
    }
    out << d.key.substr(dot + 1) << " = " << value << '\n';
  }
  return out.str();
}

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const KeyDef& d : key_table()) out.push_back(d.key);
  return out;
}

std::filesystem::path output_root() {
  const char* root = std::getenv("RESQ_OUT_ROOT");
  return root && *root ? std::filesystem::path(root) : std::filesystem::path("runs");
}

std::filesystem::path default_run_dir(const ExperimentConfig& config, std::uint64_t seed) {
  const std::filesystem::path base = config.out.empty() ? output_root() : std::filesystem::path(config.out);
  return base / config.label() / config.method() / ("seed_" + std::to_string(seed));
}

}  // namespace resq::cli
