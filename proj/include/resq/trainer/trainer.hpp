#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "resq/autodiff/optim.hpp"
#include "resq/envs/factory.hpp"
#include "resq/factorization/model.hpp"
#include "resq/operators/loss.hpp"
#include "resq/trainer/replay.hpp"

namespace resq {

struct TrainConfig {
  double gamma = 0.99;
  double lr = 5e-4;
  double max_grad_norm = 10.0;  // <= 0 disables clipping
  std::size_t batch_size = 32;       // episodes
  std::size_t buffer_capacity = 5000;  // episodes
  /// Learning starts after warmup_ratio * total_steps environment steps.
  double warmup_ratio = 0.025;
  double epsilon_start = 1.0;
  double epsilon_finish = 0.05;
  std::size_t epsilon_anneal_steps = 50000;
  std::size_t target_update_interval = 200;  // episodes
  std::size_t total_steps = 50000;
  std::size_t eval_interval = 1000;
  std::size_t eval_episodes = 32;
  std::size_t bias_states = 100;
  std::size_t bias_rollouts = 20;
  std::size_t checkpoint_interval = 0;  // env steps; 0 disables
  std::uint64_t seed = 1;

  LossConfig loss;
  MixerKind mixer = MixerKind::qmix;
  std::size_t agent_hidden = 64;
  bool recurrent = false;
  std::size_t mixing_embed = 32;
  std::size_t hypernet_hidden = 64;

  std::size_t warmup_steps() const;
  void validate() const;
};

ModelConfig model_config(const TrainConfig& config, const EnvSpec& spec);

struct TrainStats {
  double loss = 0.0;
  double td_loss = 0.0;
  double regularizer = 0.0;
  double grad_norm = 0.0;
};

struct MetricsRow {
  std::size_t env_step = 0;
  std::size_t episode = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  double loss = 0.0;  // mean since the previous row, NaN if no update ran
  double est_value = 0.0;
  double true_value = 0.0;
  double norm_bias = 0.0;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
};

std::string metrics_header();
std::string metrics_line(const MetricsRow& row);

/// Deterministic 64-bit mix used to derive independent seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Episode-based training loop: collect one ε-greedy episode, store it, then
/// take one gradient step on a batch of stored episodes once warm.
class Trainer {
 public:
  Trainer(TrainConfig config, EnvConfig env);

  const TrainConfig& config() const { return config_; }
  const EnvConfig& env_config() const { return env_config_; }
  FactorizedQModel& model() { return model_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const Env& env() const { return *env_; }
  std::size_t env_steps() const { return env_steps_; }
  std::size_t episodes() const { return episodes_; }
  std::size_t updates() const { return updates_; }
  double epsilon() const;
  const std::vector<MetricsRow>& metrics() const { return metrics_; }

  /// Collects one episode, trains if warm, syncs the target when due.
  void step_episode();
  /// One gradient update on a sampled batch. Requires buffer().size() >= batch_size.
  TrainStats train_step();
  /// Metrics at the current point; leaves model, buffer and RNG untouched.
  MetricsRow measure();
  /// Runs to total_steps, appending metrics rows. `on_row` fires after each
  /// row; returning false stops the run there.
  void run(const std::function<bool(const MetricsRow&)>& on_row = {});
  bool finished() const;

  void save_checkpoint(const std::filesystem::path& stem);
  void load_checkpoint(const std::filesystem::path& stem);

 private:
  TrainConfig config_;
  EnvConfig env_config_;
  std::unique_ptr<Env> env_;
  FactorizedQModel model_;
  ad::RmsPropState optim_;
  ReplayBuffer buffer_;
  std::mt19937_64 rng_;
  std::size_t env_steps_ = 0, episodes_ = 0, updates_ = 0, since_sync_ = 0, rows_ = 0;
  double loss_sum_ = 0.0;
  std::size_t loss_count_ = 0;
  std::vector<MetricsRow> metrics_;
};

/// Trains and writes `metrics.csv` plus `model` into `out_dir`. With
/// checkpoint_interval set, `checkpoint` is refreshed at metrics rows and a
/// present checkpoint is resumed when `resume` is true.
std::vector<MetricsRow> run_experiment(const TrainConfig& config, const EnvConfig& env,
                                       const std::filesystem::path& out_dir, bool resume = false);

}  // namespace resq
