#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "resq/diagnostics/bias.hpp"
#include "resq/diagnostics/probes.hpp"
#include "resq/diagnostics/report.hpp"
#include "resq/diagnostics/verify.hpp"
#include "resq/envs/factory.hpp"
#include "resq/error.hpp"
#include "resq/operators/softmax.hpp"
#include "resq/trainer/rollout.hpp"

using namespace resq;

namespace {

ModelConfig config_for(const EnvSpec& spec, MixerKind kind, bool recurrent = false) {
  ModelConfig c;
  c.agent = {spec.obs_dim, spec.n_actions, spec.n_agents, 16, recurrent};
  c.mixer.kind = kind;
  c.mixer.n_agents = spec.n_agents;
  c.mixer.state_dim = spec.state_dim;
  c.mixer.embed_dim = 8;
  c.mixer.hypernet_dim = 16;
  return c;
}

// VDN model whose utilities are `bias` for every agent and observation.
FactorizedQModel constant_model(const EnvSpec& spec, const std::vector<double>& bias) {
  FactorizedQModel m(config_for(spec, MixerKind::vdn), 3);
  for (ad::Parameter* p : m.parameters()) std::fill(p->value.data().begin(), p->value.data().end(), 0.0);
  ad::Parameter* out_bias = m.agent().parameters().back();
  REQUIRE(out_bias->value.data().size() == bias.size());
  std::copy(bias.begin(), bias.end(), out_bias->value.data().begin());
  return m;
}

MatrixGameSpec repeated_game(std::size_t horizon) {
  MatrixGameSpec g;
  g.horizon = horizon;
  return g;
}

ReplayBuffer filled_buffer(Env& env, FactorizedQModel& model, std::size_t episodes, double gamma, std::uint64_t seed) {
  ReplayBuffer buffer(100);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < episodes; ++i) buffer.add(collect_episode(env, model, 0.5, rng(), rng, gamma));
  return buffer;
}

void write_run(const std::filesystem::path& dir, const std::string& env, const std::string& method,
               std::uint64_t seed, const std::vector<double>& returns, bool completed = true) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "metrics.csv");
  out << metrics_header() << '\n';
  for (std::size_t i = 0; i < returns.size(); ++i) {
    MetricsRow r;
    r.env_step = i * 100;
    r.episode = i * 4;
    r.mean_return = returns[i];
    r.std_return = 0.5;
    r.loss = 1.0;
    r.est_value = returns[i] + 1.0;
    r.true_value = returns[i];
    r.norm_bias = normalized_bias(r.est_value, r.true_value).normalized;
    r.epsilon = 0.1;
    r.seed = seed;
    out << metrics_line(r) << '\n';
  }
  out.close();
  write_run_info(dir, env, method, seed, completed);
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("resq_diag_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("normalized bias") {
  CHECK(normalized_bias(110, 100).normalized == doctest::Approx(10.0));
  CHECK(normalized_bias(100, 100).normalized == 0.0);
  CHECK(normalized_bias(50, -100).normalized == doctest::Approx(150.0));
  CHECK(normalized_bias(-150, -100).normalized == doctest::Approx(-50.0));
  const BiasRecord tiny = normalized_bias(1.0, 5e-7);
  CHECK_FALSE(tiny.defined);
  CHECK(std::isnan(tiny.normalized));
  CHECK(normalized_bias(1.0, 1e-5).defined);
}

TEST_CASE("estimated value") {
  MatrixGame env(repeated_game(4), 0.9);
  const EnvSpec& spec = env.spec();

  SUBCASE("constant model gives n times the best utility") {
    FactorizedQModel m = constant_model(spec, {0.25, 1.5});
    ReplayBuffer buffer = filled_buffer(env, m, 3, 0.9, 7);
    std::mt19937_64 rng(1);
    const auto samples = sample_states(buffer, 100, rng);
    CHECK(samples.size() == 12);
    CHECK(estimated_value(m, samples) == doctest::Approx(3.0).epsilon(1e-14));
  }

  SUBCASE("single stored state") {
    MatrixGame one(MatrixGameSpec{}, 0.9);
    FactorizedQModel m(config_for(one.spec(), MixerKind::qmix), 5);
    ReplayBuffer buffer = filled_buffer(one, m, 1, 0.9, 3);
    std::mt19937_64 rng(1);
    const auto samples = sample_states(buffer, 100, rng);
    REQUIRE(samples.size() == 1);
    const Episode& e = buffer[0];
    const std::vector<std::vector<double>> obs = {{e.observation(0, 0).begin(), e.observation(0, 0).end()},
                                                  {e.observation(0, 1).begin(), e.observation(0, 1).end()}};
    const auto u = m.agent_utilities(obs, std::vector<int>{-1, -1}, m.initial_hidden(2));
    // exhaustive maximum over the 4 joint actions of Q_tot at s_0
    double best = -1e300;
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) best = std::max(best, m.q_tot(e.state(0), u.q.data(), std::vector<int>{a, b}));
    }
    CHECK(estimated_value(m, samples) == doctest::Approx(best).epsilon(1e-12));
  }

  SUBCASE("exactly 100 states are all used") {
    GridWorld grid(GridWorldSpec{}, 0.99);
    FactorizedQModel m(config_for(grid.spec(), MixerKind::qmix), 9);
    ReplayBuffer buffer = filled_buffer(grid, m, 4, 0.99, 11);
    std::size_t stored = 0;
    for (std::size_t i = 0; i < buffer.size(); ++i) stored += buffer[i].length;
    REQUIRE(stored == 100);
    std::mt19937_64 rng(2);
    const auto samples = sample_states(buffer, 100, rng);
    CHECK(samples.size() == 100);
    double sum = 0.0;
    for (std::size_t i = 0; i < buffer.size(); ++i) {
      for (std::size_t t = 0; t < buffer[i].length; ++t) {
        const AgentMemory mem = agent_memory(m, buffer[i], t);
        const auto q = mem.utilities.data();
        sum += m.q_tot(buffer[i].state(t), q, igm_argmax(q, 3, 5));
      }
    }
    CHECK(estimated_value(m, samples) == doctest::Approx(sum / 100.0).epsilon(1e-12));
  }

  SUBCASE("subsample is distinct") {
    GridWorld grid(GridWorldSpec{}, 0.99);
    FactorizedQModel m(config_for(grid.spec(), MixerKind::vdn), 9);
    ReplayBuffer buffer = filled_buffer(grid, m, 8, 0.99, 12);
    std::mt19937_64 rng(3);
    auto samples = sample_states(buffer, 100, rng);
    CHECK(samples.size() == 100);
    std::sort(samples.begin(), samples.end(), [](const StateSample& a, const StateSample& b) {
      return std::pair(a.episode, a.t) < std::pair(b.episode, b.t);
    });
    CHECK(std::adjacent_find(samples.begin(), samples.end(), [](const StateSample& a, const StateSample& b) {
            return a.episode == b.episode && a.t == b.t;
          }) == samples.end());
  }
}

TEST_CASE("true value by rollouts") {
  SUBCASE("one-shot game pays the greedy entry") {
    MatrixGame env(MatrixGameSpec{}, 0.99);
    FactorizedQModel m = constant_model(env.spec(), {1.0, 0.0});  // greedy (0, 0) pays 8
    ReplayBuffer buffer = filled_buffer(env, m, 2, 0.99, 1);
    std::mt19937_64 rng(1);
    const auto samples = sample_states(buffer, 10, rng);
    CHECK(true_value_mc(env, m, samples, 20, 0.99, 5) == doctest::Approx(8.0));
  }

  SUBCASE("repeated game closed form") {
    const double gamma = 0.9;
    MatrixGame env(repeated_game(5), gamma);
    FactorizedQModel m = constant_model(env.spec(), {0.0, 2.0});  // greedy (1, 1) pays 0
    FactorizedQModel m2 = constant_model(env.spec(), {3.0, 2.0});  // greedy (0, 0) pays 8
    ReplayBuffer buffer = filled_buffer(env, m2, 1, gamma, 2);
    for (std::size_t t = 0; t < 5; ++t) {
      const std::vector<StateSample> one = {{&buffer[0], t}};
      double expected = 0.0, discount = 1.0;
      for (std::size_t j = t; j < 5; ++j, discount *= gamma) expected += discount * 8.0;
      CHECK(true_value_mc(env, m2, one, 3, gamma, 1) == doctest::Approx(expected).epsilon(1e-12));
      CHECK(true_value_mc(env, m, one, 3, gamma, 1) == 0.0);
    }
  }

  SUBCASE("gamma zero gives the immediate greedy reward") {
    MatrixGameSpec g = repeated_game(3);
    g.noise_std = 1.0;
    MatrixGame env(g, 0.0);
    FactorizedQModel m = constant_model(env.spec(), {1.0, 0.0});
    ReplayBuffer buffer = filled_buffer(env, m, 4, 0.0, 3);
    std::mt19937_64 rng(1);
    const auto samples = sample_states(buffer, 100, rng);
    const double v = true_value_mc(env, m, samples, 400, 0.0, 9);
    // 12 states x 400 draws of N(0, 1) noise around 8
    CHECK(std::abs(v - 8.0) < 4.0 / std::sqrt(12.0 * 400.0));
  }

  SUBCASE("deterministic environment ignores the rollout count") {
    EnvConfig ec;
    ec.kind = "matrix";
    ec.matrix = repeated_game(6);
    auto env = make_env(ec, 0.99);
    REQUIRE_FALSE(env->stochastic());
    FactorizedQModel m(config_for(env->spec(), MixerKind::qmix, true), 4);
    ReplayBuffer buffer = filled_buffer(*env, m, 3, 0.99, 4);
    std::mt19937_64 rng(1);
    const auto samples = sample_states(buffer, 100, rng);
    CHECK(true_value_mc(*env, m, samples, 1, 0.99, 1) == true_value_mc(*env, m, samples, 20, 0.99, 77));
  }

  SUBCASE("stochastic environment averages the rollouts") {
    GridWorld grid(GridWorldSpec{}, 0.99);
    FactorizedQModel m(config_for(grid.spec(), MixerKind::qmix, true), 8);
    std::mt19937_64 rng(5);
    Episode e = collect_episode(grid, m, 0.0, 1234, rng, 0.99);
    const std::vector<StateSample> start = {{&e, 0}};
    const double v = true_value_mc(grid, m, start, 8, 0.99, 3);
    CHECK(v == true_value_mc(grid, m, start, 8, 0.99, 3));
    CHECK(std::abs(v) <= grid.spec().r_max / (1.0 - 0.99));
  }

  SUBCASE("missing snapshots are refused") {
    MatrixGame env(MatrixGameSpec{}, 0.99);
    FactorizedQModel m = constant_model(env.spec(), {1.0, 0.0});
    ReplayBuffer buffer = filled_buffer(env, m, 1, 0.99, 1);
    Episode stripped = buffer[0];
    stripped.snapshots.clear();
    const std::vector<StateSample> one = {{&stripped, 0}};
    CHECK_THROWS_AS(true_value_mc(env, m, one, 1, 0.99, 1), ContractError);
  }
}

TEST_CASE("uniform max overestimation") {
  const UniformMaxResult r = uniform_max_overestimation(2, 3, 200000, 4);
  CHECK(r.analytic == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(r.count == 9);
  CHECK(r.within(3.0));
  const UniformMaxResult single = uniform_max_overestimation(1, 1, 200000, 5);
  CHECK(single.analytic == 0.5);
  CHECK(std::abs(single.empirical - 0.5) < 3.0 * std::sqrt(1.0 / 12.0 / 200000.0));
  // Var[max of M uniforms] = M / ((M+1)^2 (M+2))
  CHECK(r.sigma * r.sigma == doctest::Approx(9.0 / (100.0 * 11.0)));
  CHECK(uniform_max_overestimation(3, 4, 10, 1).analytic > uniform_max_overestimation(2, 4, 10, 1).analytic);
  CHECK(uniform_max_overestimation(2, 5, 10, 1).analytic > uniform_max_overestimation(2, 4, 10, 1).analytic);
  CHECK_THROWS_AS(uniform_max_overestimation(30, 5, 1, 1), ContractError);
  CHECK_THROWS_AS(uniform_max_overestimation(2, 3, 0, 1), ContractError);
}

TEST_CASE("target operator bias ordering") {
  SUBCASE("worked example") {
    BiasProbeSpec spec;
    spec.n_agents = 2;
    spec.n_actions = 3;
    spec.variance = 1.0;
    spec.lambda = 0.5;
    spec.beta = 1.0;
    const BiasProbeResult r = thm3_ordering_check(spec);
    CHECK(r.ordering_holds());
    CHECK(r.qmix > 0.0);
    CHECK(r.res < r.re);
    // with R = V*, the return term shrinks the max bias by exactly 1/(λ+1)
    CHECK(r.re == doctest::Approx(r.qmix / 1.5).epsilon(1e-9));

    // independent Monte-Carlo of E[max] for 9 centred normals scaled to unit mean square
    std::mt19937_64 rng(99);
    std::normal_distribution<double> normal;
    double sum = 0.0, sq = 0.0;
    const int draws = 100000;
    for (int d = 0; d < draws; ++d) {
      double x[9], mean = 0.0, norm = 0.0;
      for (double& v : x) mean += (v = normal(rng));
      mean /= 9.0;
      for (double& v : x) norm += (v - mean) * (v - mean);
      double best = -1e300;
      for (double v : x) best = std::max(best, (v - mean) / std::sqrt(norm / 9.0));
      sum += best;
      sq += best * best;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sq / draws - mean * mean) / draws);
    CHECK(std::abs(r.qmix - mean) < 4.0 * std::hypot(se, r.se_qmix));
  }

  SUBCASE("lambda zero and a very sharp softmax coincide") {
    BiasProbeSpec spec;
    spec.lambda = 0.0;
    spec.beta = 1e9;
    spec.draws = 2000;
    const BiasProbeResult r = thm3_ordering_check(spec);
    CHECK(r.re == doctest::Approx(r.qmix).epsilon(1e-12));
    CHECK(r.res == doctest::Approx(r.qmix).epsilon(1e-9));
  }

  SUBCASE("no perturbation means no bias") {
    BiasProbeSpec spec;
    spec.variance = 0.0;
    spec.v_star = 3.0;
    spec.draws = 1000;
    const BiasProbeResult r = thm3_ordering_check(spec);
    CHECK(r.qmix == 0.0);
    CHECK(r.re == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(std::abs(r.res) < 1e-12);
    CHECK(r.ordering_holds());
  }

  SUBCASE("bias grows with the perturbation") {
    BiasProbeSpec small, large;
    small.variance = 0.25;
    large.variance = 4.0;
    small.draws = large.draws = 20000;
    CHECK(thm3_ordering_check(large).qmix > thm3_ordering_check(small).qmix);
  }

  CHECK_THROWS_AS(thm3_ordering_check(BiasProbeSpec{2, 3, 0.0, -1.0}), ContractError);
}

TEST_CASE("approximation schemes") {
  SUBCASE("single agent: every scheme covers all actions") {
    EnvSpec spec{1, 4, 3, 2, 1.0, 5, 0.99};
    FactorizedQModel m(config_for(spec, MixerKind::qmix), 2);
    std::mt19937_64 rng(1);
    const ad::Tensor states({6, 3}, testing::uniform_vector(18, rng));
    const auto u = testing::uniform_vector(6 * 4, rng, -2.0, 2.0);
    const auto a = approximation_scheme_compare(m, states, u, 0.5, ApproximationScheme::subspace);
    const auto b = approximation_scheme_compare(m, states, u, 0.5, ApproximationScheme::random_sample, 3);
    const auto c = approximation_scheme_compare(m, states, u, 0.5, ApproximationScheme::exact);
    for (std::size_t r = 0; r < 6; ++r) {
      CHECK(a.values[r] == doctest::Approx(c.values[r]).epsilon(1e-12));
      CHECK(b.values[r] == doctest::Approx(c.values[r]).epsilon(1e-12));
    }
  }

  SUBCASE("evaluation counts") {
    EnvSpec spec{3, 4, 5, 2, 1.0, 5, 0.99};
    FactorizedQModel m(config_for(spec, MixerKind::qmix), 2);
    std::mt19937_64 rng(1);
    const ad::Tensor states({2, 5}, testing::uniform_vector(10, rng));
    const auto u = testing::uniform_vector(2 * 12, rng);
    for (std::size_t n : approximation_scheme_compare(m, states, u, 1.0, ApproximationScheme::subspace).evaluations) {
      CHECK(n == 3 * 3 + 1);
    }
    for (std::size_t n :
         approximation_scheme_compare(m, states, u, 1.0, ApproximationScheme::random_sample).evaluations) {
      CHECK(n == 3 * 3 + 1);
    }
    for (std::size_t n : approximation_scheme_compare(m, states, u, 1.0, ApproximationScheme::exact).evaluations) {
      CHECK(n == 64);
    }
    CHECK(to_string(ApproximationScheme::random_sample) == "random_sample");
  }

  SUBCASE("exact refuses large spaces") {
    EnvSpec spec{10, 5, 2, 2, 1.0, 5, 0.99};
    FactorizedQModel m(config_for(spec, MixerKind::vdn), 2);
    std::mt19937_64 rng(1);
    const ad::Tensor states({1, 2}, testing::uniform_vector(2, rng));
    const auto u = testing::uniform_vector(50, rng);
    CHECK_THROWS_AS(approximation_scheme_compare(m, states, u, 1.0, ApproximationScheme::exact), ContractError);
    CHECK(approximation_scheme_compare(m, states, u, 1.0, ApproximationScheme::subspace).evaluations[0] == 41);
  }

  SUBCASE("subspace error stays under the gap bound") {
    EnvSpec spec{3, 3, 4, 2, 1.0, 5, 0.99};
    for (double beta : {0.05, 1.0, 5.0}) {
      double err = 0.0, bound = 0.0;
      for (std::uint64_t model_seed = 0; model_seed < 100; ++model_seed) {
        FactorizedQModel m(config_for(spec, MixerKind::qmix), model_seed);
        std::mt19937_64 rng(model_seed + 1000);
        const ad::Tensor states({1, 4}, testing::uniform_vector(4, rng));
        const auto u = testing::uniform_vector(9, rng, -3.0, 3.0);
        const double sub = approximation_scheme_compare(m, states, u, beta, ApproximationScheme::subspace).values[0];
        const double ex = approximation_scheme_compare(m, states, u, beta, ApproximationScheme::exact).values[0];
        err += std::abs(sub - ex);

        // bound 2 max|Q| m / (m + exp(β (Q* - Q'))) by enumeration
        const MixerSnapshot snap = m.mixer_snapshot(states);
        const FactorizedJointValue q(u, 3, 3, snap, 0);
        const JointAction anchor = igm_argmax(u, 3, 3);
        double best = -1e300, best_out = -1e300, max_abs = 0.0;
        std::size_t outside = 0;
        for (std::uint64_t i = 0; i < 27; ++i) {
          const JointAction a = decode_joint_action(i, 3, 3);
          const double v = q.value(a);
          best = std::max(best, v);
          max_abs = std::max(max_abs, std::abs(v));
          std::size_t diff = 0;
          for (std::size_t j = 0; j < 3; ++j) diff += a[j] != anchor[j];
          if (diff > 1) {
            ++outside;
            best_out = std::max(best_out, v);
          }
        }
        REQUIRE(outside == 20);
        const double mo = static_cast<double>(outside);
        bound += 2.0 * max_abs * mo / (mo + std::exp(beta * (best - best_out)));
      }
      CHECK(err <= bound);
    }
  }
}

TEST_CASE("report aggregation") {
  const auto root = scratch("report");

  SUBCASE("single run is its own aggregate") {
    write_run(root / "a", "grid", "res_qmix", 1, {1.0, 2.0, 3.5});
    const Report rep = emit_report({root / "a"}, root / "out");
    REQUIRE(rep.cells.size() == 1);
    const CellSummary& c = rep.cells[0];
    CHECK(c.final_return == 3.5);
    CHECK(c.final_return_std == 0.0);
    REQUIRE(c.curve.size() == 3);
    CHECK(c.curve[1].mean_return == 2.0);
    CHECK(c.curve[1].env_step == 100);
    CHECK(c.final_bias == doctest::Approx(100.0 / 3.5));
    CHECK(rep.missing.empty());
    for (const char* f : {"report.json", "report_summary.csv", "report_curves.csv", "bias.csv", "report_long.csv"}) {
      CHECK(std::filesystem::exists(root / "out" / f));
    }
  }

  SUBCASE("identical runs have zero spread") {
    write_run(root / "a", "grid", "qmix", 1, {1.0, 2.0});
    write_run(root / "b", "grid", "qmix", 2, {1.0, 2.0});
    const Report rep = build_report({root / "a", root / "b"});
    REQUIRE(rep.cells.size() == 1);
    CHECK(rep.cells[0].final_return_std == 0.0);
    CHECK(rep.cells[0].curve[0].std_return == 0.0);
    CHECK(rep.cells[0].curve[0].runs == 2);
  }

  SUBCASE("population spread and min-max normalisation") {
    write_run(root / "a", "grid", "qmix", 1, {0.0, 1.0});
    write_run(root / "b", "grid", "qmix", 2, {0.0, 3.0});
    write_run(root / "c", "grid", "res_qmix", 1, {0.0, 6.0});
    write_run(root / "d", "grid", "vdn", 1, {0.0, 4.0});
    write_run(root / "e", "matrix", "qmix", 1, {5.0});
    write_run(root / "f", "matrix", "res_qmix", 1, {1.0});
    write_run(root / "g", "matrix", "vdn", 1, {3.0});
    write_run(root / "h", "matrix", "vdn", 2, {3.0}, false);
    std::filesystem::create_directories(root / "i");
    const Report rep =
        build_report({root / "a", root / "b", root / "c", root / "d", root / "e", root / "f", root / "g", root / "h",
                      root / "i"});
    CHECK(rep.missing.size() == 2);
    auto cell = [&](const std::string& env, const std::string& method) {
      return *std::find_if(rep.cells.begin(), rep.cells.end(),
                           [&](const CellSummary& c) { return c.env == env && c.method == method; });
    };
    CHECK(cell("grid", "qmix").final_return == 2.0);
    CHECK(cell("grid", "qmix").final_return_std == 1.0);
    CHECK(cell("grid", "qmix").normalized == 0.0);
    CHECK(cell("grid", "res_qmix").normalized == 1.0);
    CHECK(cell("grid", "vdn").normalized == doctest::Approx(0.5));
    CHECK(cell("matrix", "qmix").normalized == 1.0);
    CHECK(cell("matrix", "res_qmix").normalized == 0.0);
    CHECK(cell("matrix", "vdn").normalized == doctest::Approx(0.5));
    REQUIRE(rep.normalized_mean.size() == 3);
    for (const auto& [method, score] : rep.normalized_mean) CHECK(score == doctest::Approx(0.5));
    const auto j = rep.to_json();
    CHECK(j["missing"].size() == 2);
    CHECK(j["environments"]["grid"]["vdn"]["final_return"] == 4.0);
  }

  SUBCASE("metrics round trip") {
    write_run(root / "a", "grid", "qmix", 7, {1.25, -0.5});
    const auto rows = read_metrics(root / "a" / "metrics.csv");
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].mean_return == -0.5);
    CHECK(rows[1].seed == 7);
    CHECK(rows[1].norm_bias == normalized_bias(0.5, -0.5).normalized);
  }
  std::filesystem::remove_all(root);
}

TEST_CASE("verification suites") {
  const auto results = run_suite("all");
  CHECK(results.size() == 6);
  for (const CheckResult& r : results) {
    INFO(r.name);
    CHECK(r.passed);
  }
  const auto j = theorems_json(results);
  CHECK(j.is_object());
  CHECK_THROWS_AS(run_suite("nonsense"), ConfigError);
}
