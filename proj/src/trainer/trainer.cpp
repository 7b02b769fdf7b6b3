#include "resq/trainer/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "resq/diagnostics/bias.hpp"
#include "resq/error.hpp"
#include "resq/factorization/checkpoint.hpp"
#include "resq/trainer/rollout.hpp"

namespace resq {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum Stream : std::uint64_t { kEvalStream = 1, kStateStream = 2, kRolloutStream = 3, kModelStream = 4 };

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace

std::size_t TrainConfig::warmup_steps() const {
  return static_cast<std::size_t>(std::llround(warmup_ratio * static_cast<double>(total_steps)));
}

void TrainConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite non-negative number");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (buffer_capacity < batch_size) throw ConfigError("buffer_capacity must be at least batch_size");
  if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) throw ConfigError("warmup_ratio must lie in [0, 1]");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_finish >= 0.0 && epsilon_finish <= 1.0)) {
    throw ConfigError("epsilon values must lie in [0, 1]");
  }
  if (target_update_interval == 0) throw ConfigError("target_update_interval must be positive");
  if (eval_interval == 0) throw ConfigError("eval_interval must be positive");
  if (bias_rollouts == 0) throw ConfigError("bias_rollouts must be positive");
  if (agent_hidden == 0 || mixing_embed == 0 || hypernet_hidden == 0) throw ConfigError("network widths must be positive");
  LossConfig l = loss;
  l.gamma = gamma;
  l.validate();
}

ModelConfig model_config(const TrainConfig& config, const EnvSpec& spec) {
  ModelConfig m;
  m.agent = {spec.obs_dim, spec.n_actions, spec.n_agents, config.agent_hidden, config.recurrent};
  m.mixer = {config.mixer, spec.n_agents, spec.state_dim, config.mixing_embed, config.hypernet_hidden};
  return m;
}

std::string metrics_header() {
  return "env_step,episode,mean_return,std_return,loss,est_value,true_value,norm_bias,epsilon,seed";
}

std::string metrics_line(const MetricsRow& r) {
  std::ostringstream out;
  out << r.env_step << ',' << r.episode << ',' << format_double(r.mean_return) << ',' << format_double(r.std_return)
      << ',' << format_double(r.loss) << ',' << format_double(r.est_value) << ',' << format_double(r.true_value)
      << ',' << format_double(r.norm_bias) << ',' << format_double(r.epsilon) << ',' << r.seed;
  return out.str();
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Trainer::Trainer(TrainConfig config, EnvConfig env)
    : config_(std::move(config)), env_config_(std::move(env)), buffer_(std::max<std::size_t>(config_.buffer_capacity, 1)) {
  config_.validate();
  config_.loss.gamma = config_.gamma;
  env_ = make_env(env_config_, config_.gamma);
  model_ = FactorizedQModel(model_config(config_, env_->spec()), derive_seed(config_.seed, kModelStream));
  optim_.learning_rate = config_.lr;
  optim_.max_grad_norm = config_.max_grad_norm > 0.0 ? std::optional<double>(config_.max_grad_norm) : std::nullopt;
  rng_.seed(config_.seed);
}

double Trainer::epsilon() const {
  return epsilon_value(env_steps_, config_.epsilon_start, config_.epsilon_finish, config_.epsilon_anneal_steps);
}

void Trainer::step_episode() {
  const double eps = epsilon();
  const std::uint64_t episode_seed = rng_();
  Episode episode = collect_episode(*env_, model_, eps, episode_seed, rng_, config_.gamma);
  env_steps_ += episode.length;
  ++episodes_;
  buffer_.add(std::move(episode));
  if (env_steps_ >= config_.warmup_steps() && buffer_.size() >= config_.batch_size) {
    const TrainStats stats = train_step();
    loss_sum_ += stats.loss;
    ++loss_count_;
  }
  if (++since_sync_ >= config_.target_update_interval) {
    model_.sync_target();
    since_sync_ = 0;
  }
}

TrainStats Trainer::train_step() {
  const std::vector<const Episode*> picked = buffer_.sample(config_.batch_size, rng_);
  const EpisodeBatch batch = make_batch(picked);
  ad::Tape tape;
  const TDComputation td = compute_loss(config_.loss, model_, batch, tape, &rng_);
  tape.backward(td.loss);
  TrainStats stats{td.loss.item(), td.td_loss, td.regularizer, 0.0};
  stats.grad_norm = ad::rmsprop_step(model_.parameters(Copy::online), optim_);
  ++updates_;
  return stats;
}

MetricsRow Trainer::measure() {
  MetricsRow row;
  row.env_step = rows_ * config_.eval_interval;
  row.episode = episodes_;
  row.seed = config_.seed;
  row.epsilon = epsilon();
  row.loss = loss_count_ > 0 ? loss_sum_ / static_cast<double>(loss_count_) : kNaN;
  const EvalResult eval = evaluate_policy(*env_, model_, config_.eval_episodes,
                                          derive_seed(config_.seed, kEvalStream * 1000003 + rows_), config_.gamma);
  row.mean_return = config_.eval_episodes > 0 ? eval.mean_return : kNaN;
  row.std_return = config_.eval_episodes > 0 ? eval.std_return : kNaN;
  row.est_value = row.true_value = row.norm_bias = kNaN;
  if (!buffer_.empty() && config_.bias_states > 0) {
    std::mt19937_64 pick(derive_seed(config_.seed, kStateStream * 1000003 + rows_));
    const std::vector<StateSample> samples = sample_states(buffer_, config_.bias_states, pick);
    const BiasRecord bias = normalized_bias(
        estimated_value(model_, samples),
        true_value_mc(*env_, model_, samples, config_.bias_rollouts, config_.gamma,
                      derive_seed(config_.seed, kRolloutStream * 1000003 + rows_)));
    row.est_value = bias.estimated;
    row.true_value = bias.true_value;
    row.norm_bias = bias.normalized;
  }
  return row;
}

bool Trainer::finished() const {
  return config_.total_steps == 0 || (env_steps_ >= config_.total_steps && rows_ * config_.eval_interval > config_.total_steps);
}

void Trainer::run(const std::function<bool(const MetricsRow&)>& on_row) {
  if (config_.total_steps == 0) return;
  while (true) {
    while (rows_ * config_.eval_interval <= config_.total_steps && env_steps_ >= rows_ * config_.eval_interval) {
      metrics_.push_back(measure());
      ++rows_;
      loss_sum_ = 0.0;
      loss_count_ = 0;
      if (on_row && !on_row(metrics_.back())) return;
    }
    if (env_steps_ >= config_.total_steps) break;
    step_episode();
  }
}

namespace {

nlohmann::json row_json(const MetricsRow& r) {
  const auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  return {r.env_step, r.episode, num(r.mean_return), num(r.std_return), num(r.loss), num(r.est_value),
          num(r.true_value), num(r.norm_bias), num(r.epsilon), r.seed};
}

MetricsRow json_row(const nlohmann::json& j) {
  const auto num = [&](std::size_t i) { return j.at(i).is_null() ? kNaN : j.at(i).get<double>(); };
  return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>(), num(2), num(3), num(4), num(5), num(6), num(7),
          num(8), j.at(9).get<std::uint64_t>()};
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& stem) {
  std::vector<NamedArray> arrays = model_arrays(model_);
  for (std::size_t i = 0; i < optim_.square_avg.size(); ++i) {
    const ad::Tensor& t = optim_.square_avg[i];
    arrays.push_back({"optim." + std::to_string(i), t.shape(), {t.data().begin(), t.data().end()}});
  }
  for (NamedArray& a : buffer_.to_arrays()) arrays.push_back(std::move(a));

  std::ostringstream rng_state;
  rng_state << rng_;
  nlohmann::json extra;
  extra["env_steps"] = env_steps_;
  extra["episodes"] = episodes_;
  extra["updates"] = updates_;
  extra["since_sync"] = since_sync_;
  extra["rows"] = rows_;
  extra["loss_sum"] = loss_sum_;
  extra["loss_count"] = loss_count_;
  extra["rng"] = rng_state.str();
  extra["optim_slots"] = optim_.square_avg.size();
  extra["seed"] = config_.seed;
  extra["metrics"] = nlohmann::json::array();
  for (const MetricsRow& r : metrics_) extra["metrics"].push_back(row_json(r));
  save_archive(stem, arrays, extra);
}

void Trainer::load_checkpoint(const std::filesystem::path& stem) {
  nlohmann::json extra;
  const std::vector<NamedArray> arrays = load_archive(stem, &extra);
  if (extra.at("seed").get<std::uint64_t>() != config_.seed) throw ConfigError("checkpoint was written with another seed");
  restore_model(model_, arrays);
  const std::size_t slots = extra.at("optim_slots").get<std::size_t>();
  optim_.square_avg.clear();
  for (std::size_t i = 0; i < slots; ++i) {
    const std::string name = "optim." + std::to_string(i);
    bool found = false;
    for (const NamedArray& a : arrays) {
      if (a.name == name) {
        optim_.square_avg.emplace_back(a.shape, a.data);
        found = true;
        break;
      }
    }
    if (!found) throw ContractError("checkpoint lacks " + name);
  }
  buffer_ = ReplayBuffer::from_arrays(config_.buffer_capacity, arrays);
  env_steps_ = extra.at("env_steps").get<std::size_t>();
  episodes_ = extra.at("episodes").get<std::size_t>();
  updates_ = extra.at("updates").get<std::size_t>();
  since_sync_ = extra.at("since_sync").get<std::size_t>();
  rows_ = extra.at("rows").get<std::size_t>();
  loss_sum_ = extra.at("loss_sum").get<double>();
  loss_count_ = extra.at("loss_count").get<std::size_t>();
  std::istringstream rng_state(extra.at("rng").get<std::string>());
  rng_state >> rng_;
  metrics_.clear();
  for (const auto& r : extra.at("metrics")) metrics_.push_back(json_row(r));
}

std::vector<MetricsRow> run_experiment(const TrainConfig& config, const EnvConfig& env,
                                       const std::filesystem::path& out_dir, bool resume) {
  std::filesystem::create_directories(out_dir);
  Trainer trainer(config, env);
  const std::filesystem::path checkpoint = out_dir / "checkpoint";
  if (resume && std::filesystem::exists(checkpoint.string() + ".json")) trainer.load_checkpoint(checkpoint);

  const auto write_metrics = [&] {
    std::ofstream csv(out_dir / "metrics.csv", std::ios::trunc);
    csv << metrics_header() << '\n';
    for (const MetricsRow& r : trainer.metrics()) csv << metrics_line(r) << '\n';
    if (!csv) throw std::runtime_error("cannot write " + (out_dir / "metrics.csv").string());
  };
  write_metrics();
  std::size_t last_checkpoint = trainer.env_steps();
  trainer.run([&](const MetricsRow&) {
    write_metrics();
    if (config.checkpoint_interval > 0 && trainer.env_steps() >= last_checkpoint + config.checkpoint_interval) {
      trainer.save_checkpoint(checkpoint);
      last_checkpoint = trainer.env_steps();
    }
    return true;
  });
  save_model(trainer.model(), out_dir / "model");
  return trainer.metrics();
}

}  // namespace resq
