#include "resq/diagnostics/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "resq/autodiff/optim.hpp"
#include "resq/diagnostics/probes.hpp"
#include "resq/error.hpp"
#include "resq/factorization/joint_value.hpp"
#include "resq/factorization/model.hpp"
#include "resq/operators/loss.hpp"
#include "resq/operators/returns.hpp"
#include "resq/operators/softmax.hpp"

namespace resq {

using namespace ad;

namespace {

std::vector<double> uniform(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

ModelConfig small_model(std::size_t n, std::size_t k, MixerKind kind, bool recurrent) {
  ModelConfig c;
  c.agent = {3, k, n, 8, recurrent};
  c.mixer = {kind, n, 4, 6, 8};
  return c;
}

void perturb(FactorizedQModel& model, Copy which, double size, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, size);
  for (Parameter* p : model.parameters(which)) {
    for (double& v : p->value.data()) v += noise(rng);
  }
}

EpisodeBatch random_batch(const ModelConfig& cfg, const std::vector<std::size_t>& lengths, double gamma,
                          std::mt19937_64& rng, std::vector<Episode>& storage) {
  storage.clear();
  std::uniform_int_distribution<int> action(0, static_cast<int>(cfg.agent.n_actions) - 1);
  for (std::size_t len : lengths) {
    Episode e;
    e.n_agents = cfg.agent.n_agents;
    e.obs_dim = cfg.agent.obs_dim;
    e.state_dim = cfg.mixer.state_dim;
    e.length = len;
    e.observations = uniform((len + 1) * e.n_agents * e.obs_dim, rng);
    e.states = uniform((len + 1) * e.state_dim, rng);
    e.actions.resize(len * e.n_agents);
    for (int& u : e.actions) u = action(rng);
    e.rewards = uniform(len, rng);
    e.terminated.assign(len, 0);
    e.terminated.back() = 1;
    e.returns = discounted_returns(e.rewards, gamma);
    storage.push_back(std::move(e));
  }
  std::vector<const Episode*> ptrs;
  for (const Episode& e : storage) ptrs.push_back(&e);
  return make_batch(ptrs);
}

std::vector<double> flat_grads(FactorizedQModel& model, const std::function<Var(Tape&)>& loss) {
  zero_grads(model.parameters());
  Tape tape;
  tape.backward(loss(tape));
  std::vector<double> out;
  for (Parameter* p : model.parameters()) {
    if (p->has_grad()) {
      out.insert(out.end(), p->grad.data().begin(), p->grad.data().end());
    } else {
      out.insert(out.end(), p->value.size(), 0.0);
    }
  }
  zero_grads(model.parameters());
  return out;
}

}  // namespace

CheckResult verify_thm1(const VerifyOptions& options) {
  CheckResult result;
  result.name = "thm1";
  result.table_header = {"n", "K", "beta", "gap", "bound"};
  std::mt19937_64 rng(options.seed);
  const double r_max = 1.0, gamma = 0.9;
  const double q_max = r_max / (1.0 - gamma);
  std::size_t instances = 0, violations = 0;
  double worst_ratio = 0.0;
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t n : {1u, 2u, 3u}) {
    for (std::size_t k : {2u, 3u, 5u}) {
      const std::size_t size = static_cast<std::size_t>(joint_action_count(n, k));
      std::vector<std::vector<double>> tables;
      for (int i = 0; i < 1000; ++i) {
        // Alternate wide tables with tightly clustered ones, where the bound is least slack.
        const double spread = i % 2 == 0 ? q_max : q_max * 1e-2;
        const double centre = uniform(1, rng, -q_max + spread, q_max - spread)[0];
        tables.push_back(uniform(size, rng, centre - spread, centre + spread));
      }
      for (double beta : {0.0, 0.05, 1.0, 10.0}) {
        std::size_t cell_violations = 0;
        double cell_worst = 0.0;
        for (const auto& table : tables) {
          const TableJointValue q(table, n, k);
          const Thm1Result r = thm1_bound(q, beta, r_max, gamma);
          ++instances;
          if (!r.holds() || !r.premise_holds || !r.anchor_optimal) ++cell_violations;
          const double ratio = r.bound > 0.0 ? r.gap / r.bound : (r.gap > 0.0 ? INFINITY : 0.0);
          cell_worst = std::max(cell_worst, ratio);
          result.table.push_back({static_cast<double>(n), static_cast<double>(k), beta, r.gap, r.bound});
        }
        violations += cell_violations;
        worst_ratio = std::max(worst_ratio, cell_worst);
        cells.push_back({{"n", n}, {"K", k}, {"beta", beta}, {"violations", cell_violations}, {"max_gap_over_bound", cell_worst}});
        result.lines.push_back("n=" + std::to_string(n) + " K=" + std::to_string(k) + " beta=" + fmt(beta) +
                               ": max gap/bound " + fmt(cell_worst) + ", violations " + std::to_string(cell_violations));
      }
    }
  }

  // Evaluation counts of the subspace and exact operators on random factorized values.
  bool counts_ok = true;
  nlohmann::json counts = nlohmann::json::array();
  for (auto [n, k] : std::vector<std::pair<std::size_t, std::size_t>>{{1, 5}, {2, 3}, {3, 5}, {4, 4}, {5, 5}}) {
    Mixer m({MixerKind::qmix, n, 4, 6, 8});
    m.init(rng);
    Tape tape(false);
    MixerSnapshot snap(m.weights(tape, tape.constant(Tensor({1, 4}, uniform(4, rng)))), n);
    const auto utilities = uniform(n * k, rng);
    FactorizedJointValue q(utilities, n, k, snap, 0);
    q.reset_evaluations();
    softmax_subspace(q, q, 0.05);
    const std::size_t sub = q.evaluations();
    q.reset_evaluations();
    softmax_exact(q, q, 0.05);
    const std::size_t exact = q.evaluations();
    const std::size_t expect_sub = n * (k - 1) + 1, expect_exact = static_cast<std::size_t>(joint_action_count(n, k));
    counts_ok = counts_ok && sub == expect_sub && exact == expect_exact;
    counts.push_back({{"n", n}, {"K", k}, {"subspace", sub}, {"exact", exact}});
    result.lines.push_back("n=" + std::to_string(n) + " K=" + std::to_string(k) + ": subspace evaluations " +
                           std::to_string(sub) + " (n(K-1)+1 = " + std::to_string(expect_sub) + "), exact " +
                           std::to_string(exact) + " (K^n = " + std::to_string(expect_exact) + ")");
  }

  result.passed = violations == 0 && counts_ok;
  result.measured = {{"instances", instances},         {"violations", violations}, {"max_gap_over_bound", worst_ratio},
                     {"cells", cells},                 {"evaluation_counts", counts}, {"counts_ok", counts_ok},
                     {"r_max", r_max},                 {"gamma", gamma}};
  result.lines.insert(result.lines.begin(), "instances " + std::to_string(instances) + ", violations " +
                                                std::to_string(violations) + ", max gap/bound " + fmt(worst_ratio));
  return result;
}

CheckResult verify_thm2(const VerifyOptions& options) {
  CheckResult result;
  result.name = "thm2";
  std::mt19937_64 rng(options.seed + 2);
  double worst = 0.0;
  nlohmann::json per_lambda = nlohmann::json::object();
  std::vector<Episode> storage;
  for (double lambda : {0.0, 0.05, 0.5, 5.0}) {
    double lambda_worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const ModelConfig cfg = small_model(2 + trial % 2, 3, trial % 5 == 0 ? MixerKind::vdn : MixerKind::qmix, trial % 3 == 0);
      FactorizedQModel model(cfg, options.seed + 100 + static_cast<std::uint64_t>(trial));
      perturb(model, Copy::online, 0.1, rng);
      const EpisodeBatch batch = random_batch(cfg, {4, 2, 3}, 0.95, rng, storage);
      LossConfig lc;
      lc.gamma = 0.95;
      lc.target = TargetVariant::softmax_subspace;
      lc.beta = 0.05;
      lc.regularizer = Regularizer::return_mc;
      lc.lambda = lambda;
      const auto g_res = flat_grads(model, [&](Tape& t) { return compute_loss(lc, model, batch, t).loss; });
      const auto g_mixed = flat_grads(model, [&](Tape& t) {
        TDComputation td = compute_loss(lc, model, batch, t);
        std::vector<double> y(td.targets.size());
        for (std::size_t r = 0; r < y.size(); ++r) {
          y[r] = theorem2_target(batch.rewards[r], td.discounts[r], td.next_values[r], batch.returns[r], lambda);
        }
        Var err = t.constant(Tensor({y.size(), 1}, y)) - td.forward.mixed.q_tot;
        return scale(masked_mean(square(err), batch), lambda + 1.0);
      });
      double diff = 0.0, norm = 0.0;
      for (std::size_t i = 0; i < g_res.size(); ++i) {
        diff = std::max(diff, std::fabs(g_res[i] - g_mixed[i]));
        norm = std::max(norm, std::fabs(g_mixed[i]));
      }
      lambda_worst = std::max(lambda_worst, norm > 0.0 ? diff / norm : diff);
    }
    per_lambda[fmt(lambda)] = lambda_worst;
    worst = std::max(worst, lambda_worst);
    result.lines.push_back("lambda=" + fmt(lambda) + ": max relative gradient discrepancy " + fmt(lambda_worst) +
                           " over 100 batches (tolerance 1e-8)");
  }
  result.passed = worst <= 1e-8;
  result.measured = {{"max_relative_error", worst}, {"per_lambda", per_lambda}, {"tolerance", 1e-8}, {"batches", 100}};
  return result;
}

CheckResult verify_thm3(const VerifyOptions& options) {
  CheckResult result;
  result.name = "thm3";
  result.table_header = {"C", "lambda", "beta", "B_QMIX", "B_RE", "B_RES"};
  bool ok = true;
  nlohmann::json cells = nlohmann::json::array();
  std::uint64_t stream = 0;
  for (double c : {0.25, 1.0, 4.0}) {
    for (double lambda : {0.0, 0.1, 1.0}) {
      for (double beta : {0.05, 1.0}) {
        BiasProbeSpec spec;
        spec.variance = c;
        spec.lambda = lambda;
        spec.beta = beta;
        spec.draws = 100000;
        spec.seed = options.seed + 3 + 7919 * ++stream;
        const BiasProbeResult r = thm3_ordering_check(spec);
        const bool holds = r.ordering_holds(3.0);
        ok = ok && holds;
        result.table.push_back({c, lambda, beta, r.qmix, r.re, r.res});
        cells.push_back({{"C", c}, {"lambda", lambda}, {"beta", beta}, {"B_QMIX", r.qmix}, {"B_RE", r.re},
                         {"B_RES", r.res}, {"se_QMIX", r.se_qmix}, {"holds", holds}});
        result.lines.push_back("C=" + fmt(c) + " lambda=" + fmt(lambda) + " beta=" + fmt(beta) + ": B_RES " + fmt(r.res) +
                               " <= B_RE " + fmt(r.re) + " <= B_QMIX " + fmt(r.qmix) + (holds ? "  ok" : "  VIOLATED"));
      }
    }
  }
  result.passed = ok;
  result.measured = {{"joint_actions", 9}, {"draws", 100000}, {"cells", cells}};
  return result;
}

CheckResult verify_uniform(const VerifyOptions& options) {
  CheckResult result;
  result.name = "uniform";
  bool ok = true;
  nlohmann::json cells = nlohmann::json::array();
  for (auto [n, k] : std::vector<std::pair<std::size_t, std::size_t>>{{1, 2}, {2, 3}, {3, 4}}) {
    const UniformMaxResult r = uniform_max_overestimation(n, k, 1'000'000, options.seed + 4 + n);
    const double tol = 3.0 * r.sigma / std::sqrt(static_cast<double>(r.samples));
    const bool within = r.within(3.0);
    ok = ok && within;
    cells.push_back({{"n", n}, {"K", k}, {"analytic", r.analytic}, {"empirical", r.empirical}, {"tolerance", tol}});
    result.lines.push_back("n=" + std::to_string(n) + " K=" + std::to_string(k) + ": analytic " + fmt(r.analytic) +
                           ", empirical " + fmt(r.empirical) + ", |diff| " + fmt(std::abs(r.empirical - r.analytic)) +
                           " <= " + fmt(tol) + (within ? "  ok" : "  FAILED"));
  }
  const bool exact = uniform_max_overestimation(2, 3, 1, options.seed).analytic == 0.9;
  result.lines.push_back(std::string("n=2 K=3 analytic equals 0.9 exactly: ") + (exact ? "yes" : "no"));
  result.passed = ok && exact;
  result.measured = {{"cells", cells}, {"n2_k3_is_0.9", exact}};
  return result;
}

CheckResult verify_gradcheck(const VerifyOptions& options) {
  CheckResult result;
  result.name = "gradcheck";
  std::mt19937_64 rng(options.seed + 5);
  nlohmann::json checks = nlohmann::json::object();
  double worst = 0.0;
  const auto record = [&](const std::string& name, double err) {
    checks[name] = err;
    worst = std::max(worst, err);
    result.lines.push_back(name + ": max relative error " + fmt(err) + " (tolerance 1e-4)");
  };

  {
    Linear fc("fc", 5, 4);
    fc.init(rng);
    const Tensor x({6, 5}, uniform(30, rng));
    ParameterRefs p;
    fc.collect(p);
    record("linear", finite_diff_check([&](Tape& t) { return mean(square(fc.forward(t, t.constant(x)))); }, p));
  }
  {
    GruCell gru("gru", 5, 6);
    gru.init(rng);
    const Tensor x({4, 5}, uniform(20, rng)), h({4, 6}, uniform(24, rng));
    ParameterRefs p;
    gru.collect(p);
    record("gru_cell", finite_diff_check(
                           [&](Tape& t) { return mean(square(gru.forward(t, t.constant(x), t.constant(h)))); }, p));
  }
  for (bool recurrent : {false, true}) {
    AgentNet net({4, 3, 2, 8, recurrent});
    net.init(rng);
    const Tensor x({6, net.config().input_width()}, uniform(6 * net.config().input_width(), rng));
    const Tensor h({6, 8}, uniform(48, rng));
    record(recurrent ? "agent_net_recurrent" : "agent_net_feedforward",
           finite_diff_check(
               [&](Tape& t) {
                 auto out = net.forward(t, t.constant(x), t.constant(h));
                 return recurrent ? mean(square(out.q)) + mean(square(out.hidden)) : mean(square(out.q));
               },
               net.parameters()));
  }
  {
    Mixer m({MixerKind::qmix, 3, 5, 8, 16});
    m.init(rng);
    const Tensor states({6, 5}, uniform(30, rng)), q({6, 3}, uniform(18, rng, -2, 2)), y({6, 1}, uniform(6, rng));
    record("qmix_mixer", finite_diff_check(
                             [&](Tape& t) {
                               MixingWeights w = m.weights(t, t.constant(states));
                               return mean(square(m.mix(w, t.constant(q)).q_tot - t.constant(y)));
                             },
                             m.parameters()));
  }
  std::vector<Episode> storage;
  const std::pair<Regularizer, double> regs[] = {{Regularizer::none, 0.0},          {Regularizer::return_mc, 0.5},
                                                 {Regularizer::return_clipped, 0.5}, {Regularizer::nstep, 0.5},
                                                 {Regularizer::gradreg, 0.5},        {Regularizer::l2, 0.01}};
  for (bool recurrent : {false, true}) {
    for (auto [reg, lambda] : regs) {
      const ModelConfig cfg = small_model(2, 3, MixerKind::qmix, recurrent);
      FactorizedQModel model(cfg, options.seed + 11);
      perturb(model, Copy::online, 0.1, rng);
      const EpisodeBatch batch = random_batch(cfg, {3, 2}, 0.9, rng, storage);
      LossConfig lc;
      lc.gamma = 0.9;
      lc.regularizer = reg;
      lc.lambda = lambda;
      lc.n_steps = 2;
      record(std::string("td_loss_") + to_string(reg) + (recurrent ? "_recurrent" : "_feedforward"),
             finite_diff_check([&](Tape& t) { return compute_loss(lc, model, batch, t).loss; }, model.parameters()));
    }
  }

  std::size_t negative = 0, inputs = 0;
  double min_partial = INFINITY;
  for (int mixer = 0; mixer < 100; ++mixer) {
    const std::size_t n = 2 + static_cast<std::size_t>(mixer) % 3;
    Mixer m({MixerKind::qmix, n, 5, 8, 16});
    m.init(rng);
    for (int i = 0; i < 100; ++i) {
      for (double g : monotone_grads(m, uniform(n, rng, -5, 5), uniform(5, rng, -2, 2))) {
        negative += g < 0.0;
        min_partial = std::min(min_partial, g);
      }
      ++inputs;
    }
  }
  result.lines.push_back("mixer partials over " + std::to_string(inputs) + " random inputs: min " + fmt(min_partial) +
                         ", negative " + std::to_string(negative));
  result.passed = worst <= 1e-4 && negative == 0;
  result.measured = {{"max_relative_error", worst}, {"checks", checks},         {"tolerance", 1e-4},
                     {"partial_inputs", inputs},    {"negative_partials", negative}, {"min_partial", min_partial}};
  return result;
}

CheckResult verify_igm(const VerifyOptions& options) {
  CheckResult result;
  result.name = "igm";
  std::mt19937_64 rng(options.seed + 6);
  std::size_t mismatches = 0, same_action = 0;
  const int models = 1000;
  for (int trial = 0; trial < models; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial) % 3, k = 2 + static_cast<std::size_t>(trial / 3) % 4;
    FactorizedQModel model(small_model(n, k, trial % 7 == 0 ? MixerKind::vdn : MixerKind::qmix, false),
                           options.seed + 1000 + static_cast<std::uint64_t>(trial));
    perturb(model, Copy::online, 0.3, rng);
    std::vector<std::vector<double>> obs(n);
    for (auto& o : obs) o = uniform(3, rng);
    const Tensor q = model.agent_utilities(obs, std::vector<int>(n, -1), {}).q;
    const Tensor s({1, 4}, uniform(4, rng));
    const MixerSnapshot snap = model.mixer_snapshot(s);
    const FactorizedJointValue value(q.data(), n, k, snap, 0);
    const JointAction greedy = value.greedy();
    double best = -INFINITY;
    JointAction best_action;
    for (const JointAction& u : enumerate_joint_actions(n, k)) {
      const double v = value.value(u);
      if (v > best) {
        best = v;
        best_action = u;
      }
    }
    const double g = value.value(greedy);
    mismatches += g < best - 1e-12 * (1.0 + std::abs(best));
    same_action += greedy == best_action;
  }
  result.passed = mismatches == 0;
  result.measured = {{"models", models}, {"value_mismatches", mismatches}, {"identical_actions", same_action}};
  result.lines.push_back(std::to_string(models) + " random models: IGM value below exhaustive max in " +
                         std::to_string(mismatches) + " cases; identical joint action in " + std::to_string(same_action));
  return result;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"thm1", "thm2", "thm3", "uniform", "gradcheck", "igm", "all"};
  return names;
}

std::vector<CheckResult> run_suite(const std::string& name, const VerifyOptions& options) {
  using Fn = CheckResult (*)(const VerifyOptions&);
  const std::vector<std::pair<std::string, Fn>> suites = {{"thm1", verify_thm1},       {"thm2", verify_thm2},
                                                          {"thm3", verify_thm3},       {"uniform", verify_uniform},
                                                          {"gradcheck", verify_gradcheck}, {"igm", verify_igm}};
  std::vector<CheckResult> out;
  for (const auto& [suite, fn] : suites) {
    if (name == "all" || name == suite) out.push_back(fn(options));
  }
  if (out.empty()) throw ConfigError("unknown verification suite '" + name + "'");
  return out;
}

nlohmann::json theorems_json(const std::vector<CheckResult>& results) {
  nlohmann::json j;
  bool all = true;
  j["checks"] = nlohmann::json::array();
  for (const CheckResult& r : results) {
    all = all && r.passed;
    j["checks"].push_back({{"name", r.name}, {"passed", r.passed}, {"measured", r.measured}});
  }
  j["passed"] = all;
  return j;
}

}  // namespace resq
