#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "resq/error.hpp"
#include "resq/factorization/joint_value.hpp"
#include "resq/trainer/rollout.hpp"
#include "resq/trainer/trainer.hpp"

using namespace resq;

namespace {

EnvConfig grid_env() {
  EnvConfig e;
  e.kind = "gridworld";
  return e;
}

TrainConfig small_config(std::size_t total) {
  TrainConfig c;
  c.total_steps = total;
  c.batch_size = 4;
  c.buffer_capacity = 50;
  c.warmup_ratio = 0.0;
  c.eval_interval = 100;
  c.eval_episodes = 4;
  c.bias_states = 10;
  c.bias_rollouts = 3;
  c.epsilon_anneal_steps = total;
  c.target_update_interval = 5;
  c.agent_hidden = 16;
  c.mixing_embed = 8;
  c.hypernet_hidden = 16;
  return c;
}

std::vector<std::vector<double>> values(FactorizedQModel& m, Copy which) {
  std::vector<std::vector<double>> out;
  for (ad::Parameter* p : m.parameters(which)) out.emplace_back(p->value.data().begin(), p->value.data().end());
  return out;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("resq_trainer_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

std::size_t count_lines(const std::filesystem::path& file) {
  std::ifstream in(file);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("epsilon schedule") {
  CHECK(epsilon_value(0, 1.0, 0.05, 50000) == 1.0);
  CHECK(epsilon_value(50000, 1.0, 0.05, 50000) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(epsilon_value(25000, 1.0, 0.05, 50000) == doctest::Approx(0.525).epsilon(1e-15));
  CHECK(epsilon_value(10'000'000, 1.0, 0.05, 50000) == 0.05);
  for (std::size_t s = 0; s < 60000; s += 997) {
    const double e = epsilon_value(s, 1.0, 0.05, 50000);
    CHECK(e >= 0.05);
    CHECK(e <= 1.0);
  }
}

TEST_CASE("replay buffer") {
  ReplayBuffer buffer(3);
  for (std::size_t i = 0; i < 5; ++i) {
    Episode e;
    e.n_agents = 1;
    e.obs_dim = 1;
    e.state_dim = 1;
    e.length = i + 1;
    e.observations.assign(i + 2, static_cast<double>(i));
    e.states.assign(i + 2, static_cast<double>(i));
    e.actions.assign(i + 1, 0);
    e.rewards.assign(i + 1, 1.0);
    e.terminated.assign(i + 1, 0);
    e.terminated.back() = 1;
    e.returns.assign(i + 1, 0.5);
    e.snapshots.assign(i + 1, std::vector<int>{static_cast<int>(i), 7});
    buffer.add(std::move(e));
  }
  REQUIRE(buffer.size() == 3);
  CHECK(buffer[0].length == 3);  // FIFO: the two oldest went first
  CHECK(buffer[2].length == 5);
  CHECK(buffer.transitions() == 12);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto picked = buffer.sample(3, rng);
    REQUIRE(picked.size() == 3);
    CHECK(picked[0] != picked[1]);
    CHECK(picked[0] != picked[2]);
    CHECK(picked[1] != picked[2]);
  }
  CHECK_THROWS_AS(buffer.sample(4, rng), ContractError);
  CHECK_THROWS_AS(buffer.add(Episode{}), ContractError);

  std::vector<int> hits(3, 0);
  for (int trial = 0; trial < 30000; ++trial) {
    const Episode* e = buffer.sample(1, rng)[0];
    for (std::size_t i = 0; i < 3; ++i) hits[i] += e == &buffer[i];
  }
  for (int h : hits) CHECK(std::abs(h - 10000) < 400);

  const ReplayBuffer copy = ReplayBuffer::from_arrays(3, buffer.to_arrays());
  REQUIRE(copy.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(copy[i].length == buffer[i].length);
    CHECK(copy[i].observations == buffer[i].observations);
    CHECK(copy[i].states == buffer[i].states);
    CHECK(copy[i].actions == buffer[i].actions);
    CHECK(copy[i].rewards == buffer[i].rewards);
    CHECK(copy[i].terminated == buffer[i].terminated);
    CHECK(copy[i].returns == buffer[i].returns);
    CHECK(copy[i].snapshots == buffer[i].snapshots);
  }
}

TEST_CASE("collect_episode records a consistent trajectory") {
  for (bool recurrent : {false, true}) {
    auto env = make_env(grid_env(), 0.99);
    TrainConfig c = small_config(100);
    c.recurrent = recurrent;
    FactorizedQModel model(model_config(c, env->spec()), 11);
    std::mt19937_64 rng(5);
    const Episode e = collect_episode(*env, model, 0.0, 42, rng, 0.99);
    REQUIRE(e.length == 25);
    CHECK(e.observations.size() == 26 * 3 * env->spec().obs_dim);
    CHECK(e.states.size() == 26 * env->spec().state_dim);
    CHECK(e.snapshots.size() == 25);
    CHECK(e.terminated.back() == 1);

    // ε = 0: every recorded joint action is the IGM argmax of the utilities.
    ad::Tensor hidden = model.initial_hidden(3);
    std::vector<int> last(3, -1);
    for (std::size_t t = 0; t < e.length; ++t) {
      std::vector<std::vector<double>> obs(3);
      for (std::size_t a = 0; a < 3; ++a) obs[a].assign(e.observation(t, a).begin(), e.observation(t, a).end());
      const Utilities u = model.agent_utilities(obs, last, hidden);
      const auto greedy = igm_argmax(u.q.data(), 3, 5);
      const auto taken = e.joint_action(t);
      CHECK(std::vector<int>(taken.begin(), taken.end()) == greedy);
      last = greedy;
      hidden = u.hidden;
    }

    double r0 = 0.0, discount = 1.0;
    for (double r : e.rewards) {
      r0 += discount * r;
      discount *= 0.99;
    }
    CHECK(e.returns[0] == doctest::Approx(r0).epsilon(1e-12));
  }
}

TEST_CASE("epsilon one explores uniformly") {
  auto env = make_env(grid_env(), 0.99);
  TrainConfig c = small_config(100);
  FactorizedQModel model(model_config(c, env->spec()), 2);
  std::mt19937_64 rng(17);
  std::vector<double> counts(5, 0.0);
  double total = 0.0;
  while (total < 1e4) {
    const Episode e = collect_episode(*env, model, 1.0, rng(), rng, 0.99);
    for (int u : e.actions) {
      counts[static_cast<std::size_t>(u)] += 1.0;
      total += 1.0;
    }
  }
  double chi2 = 0.0;
  for (double n : counts) chi2 += (n - total / 5) * (n - total / 5) / (total / 5);
  CHECK(chi2 < 13.2767);  // χ²(4) critical value at 0.01
}

TEST_CASE("evaluate_policy") {
  auto env = make_env(grid_env(), 0.99);
  TrainConfig c = small_config(100);
  FactorizedQModel model(model_config(c, env->spec()), 9);
  const auto before = values(model, Copy::online);
  const EvalResult a = evaluate_policy(*env, model, 16, 123, 0.99);
  const EvalResult b = evaluate_policy(*env, model, 16, 123, 0.99);
  CHECK(a.mean_return == b.mean_return);
  CHECK(a.mean_discounted == b.mean_discounted);
  CHECK(values(model, Copy::online) == before);

  // Same start state every episode: a deterministic env gives zero spread.
  EnvConfig matrix;
  matrix.matrix.horizon = 3;
  auto game = make_env(matrix, 0.99);
  FactorizedQModel m2(model_config(c, game->spec()), 4);
  const EvalResult z = evaluate_policy(*game, m2, 20, 7, 0.99);
  CHECK(z.std_return == 0.0);
  CHECK(z.std_discounted == 0.0);

  // Uniform random policy on the one-step game: E[r] = (8 - 12 - 12 + 0) / 4 = -4.
  auto one_shot = make_env(EnvConfig{}, 0.99);
  FactorizedQModel m3(model_config(c, one_shot->spec()), 4);
  std::vector<Lane> lanes;
  for (int i = 0; i < 20000; ++i) lanes.push_back(make_lane(*one_shot, static_cast<std::uint64_t>(i)));
  std::mt19937_64 rng(8);
  run_lanes(lanes, m3, 1.0, rng, 0.99);
  double sum = 0.0, sq = 0.0;
  for (const Lane& l : lanes) sum += l.undiscounted;
  const double mean = sum / 20000.0;
  for (const Lane& l : lanes) sq += (l.undiscounted - mean) * (l.undiscounted - mean);
  const double se = std::sqrt(sq / 19999.0 / 20000.0);
  CHECK(std::abs(mean + 4.0) < 3.0 * se);
}

TEST_CASE("training is deterministic per seed") {
  const TrainConfig c = small_config(400);
  Trainer a(c, grid_env()), b(c, grid_env());
  a.run();
  b.run();
  CHECK(a.updates() > 0);
  CHECK(values(a.model(), Copy::online) == values(b.model(), Copy::online));
  CHECK(values(a.model(), Copy::target) == values(b.model(), Copy::target));
  REQUIRE(a.metrics().size() == b.metrics().size());
  for (std::size_t i = 0; i < a.metrics().size(); ++i) CHECK(metrics_line(a.metrics()[i]) == metrics_line(b.metrics()[i]));

  TrainConfig other = c;
  other.seed = 2;
  Trainer d(other, grid_env());
  d.run();
  CHECK(values(a.model(), Copy::online) != values(d.model(), Copy::online));
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  TrainConfig c = small_config(300);
  c.lr = 0.0;
  Trainer t(c, grid_env());
  const auto before = values(t.model(), Copy::online);
  for (int i = 0; i < 6; ++i) t.step_episode();
  const TrainStats s = t.train_step();
  CHECK(std::isfinite(s.loss));
  CHECK(t.updates() >= 3);
  CHECK(values(t.model(), Copy::online) == before);
}

TEST_CASE("target parameters change only at sync points") {
  TrainConfig c = small_config(1000);
  c.target_update_interval = 3;
  Trainer t(c, grid_env());
  auto target = values(t.model(), Copy::target);
  for (int i = 1; i <= 12; ++i) {
    t.step_episode();
    const auto now = values(t.model(), Copy::target);
    if (i % 3 == 0) {
      CHECK(now == values(t.model(), Copy::online));
    } else {
      CHECK(now == target);
    }
    target = now;
  }
}

TEST_CASE("bandit converges to its reward") {
  TrainConfig c;
  c.gamma = 0.0;
  c.total_steps = 2000;
  c.mixer = MixerKind::vdn;
  c.target_update_interval = 200;
  EnvConfig e;
  e.matrix.n_agents = 1;
  e.matrix.n_actions = 1;
  e.matrix.payoff = {1.0};
  Trainer t(c, e);
  for (int i = 0; i < 2000; ++i) t.step_episode();
  REQUIRE(t.env_steps() == 2000);
  auto fresh = t.env().clone();
  fresh->reset(0);
  const auto obs = fresh->observations();
  const Utilities u = t.model().agent_utilities(obs, std::vector<int>{-1}, {});
  CHECK(std::abs(u.q[0] - 1.0) < 0.01);
}

TEST_CASE("run_experiment output") {
  SUBCASE("zero steps writes only the header") {
    const auto dir = scratch("zero");
    TrainConfig c = small_config(0);
    const auto rows = run_experiment(c, grid_env(), dir);
    CHECK(rows.empty());
    CHECK(count_lines(dir / "metrics.csv") == 1);
    std::ifstream in(dir / "metrics.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == metrics_header());
  }
  SUBCASE("one row per interval plus the initial row") {
    for (std::size_t total : {250u, 300u, 99u}) {
      const auto dir = scratch("rows");
      TrainConfig c = small_config(total);
      const auto rows = run_experiment(c, grid_env(), dir);
      CHECK(rows.size() == total / c.eval_interval + 1);
      CHECK(count_lines(dir / "metrics.csv") == rows.size() + 1);
      CHECK(std::filesystem::exists(dir / "model.json"));
    }
  }
}

TEST_CASE("resuming from a checkpoint reproduces the run") {
  for (bool sticky : {false, true}) {
    TrainConfig c = small_config(600);
    EnvConfig env = grid_env();
    if (sticky) env.sticky = 0.25;
    Trainer full(c, env);
    full.run();

    const auto dir = scratch("resume");
    std::filesystem::create_directories(dir);
    {
      Trainer first(c, env);
      first.run([&](const MetricsRow&) { return first.metrics().size() < 3; });
      REQUIRE(first.metrics().size() == 3);
      first.save_checkpoint(dir / "checkpoint");
    }
    Trainer resumed(c, env);
    resumed.load_checkpoint(dir / "checkpoint");
    resumed.run();
    CHECK(resumed.env_steps() == full.env_steps());
    CHECK(resumed.updates() == full.updates());
    CHECK(values(resumed.model(), Copy::online) == values(full.model(), Copy::online));
    CHECK(values(resumed.model(), Copy::target) == values(full.model(), Copy::target));
    REQUIRE(resumed.metrics().size() == full.metrics().size());
    for (std::size_t i = 0; i < full.metrics().size(); ++i) {
      CHECK(metrics_line(resumed.metrics()[i]) == metrics_line(full.metrics()[i]));
    }

    TrainConfig wrong = c;
    wrong.seed = 99;
    Trainer mismatch(wrong, env);
    CHECK_THROWS_AS(mismatch.load_checkpoint(dir / "checkpoint"), ConfigError);
  }
}

TEST_CASE("configuration validation") {
  TrainConfig c;
  c.gamma = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.buffer_capacity = 10;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.epsilon_finish = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.total_steps = 1000;
  c.warmup_ratio = 0.05;
  CHECK(c.warmup_steps() == 50);
  CHECK_NOTHROW(TrainConfig{}.validate());
}
