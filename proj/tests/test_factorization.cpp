#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "resq/autodiff/optim.hpp"
#include "resq/error.hpp"
#include "resq/factorization/checkpoint.hpp"
#include "resq/factorization/model.hpp"

using namespace resq;
using namespace resq::ad;

namespace {

std::vector<double> uniform_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

void force_layer(Linear& layer, std::span<const double> bias) {
  layer.weight.value.fill(0.0);
  std::copy(bias.begin(), bias.end(), layer.bias.value.data().begin());
}

// Drives every hypernetwork output to a fixed raw value regardless of the state.
void force_mixer(Mixer& m, std::vector<double> w1, std::vector<double> b1, std::vector<double> w2, double b2) {
  force_layer(m.w1_out, w1);
  force_layer(m.b1_out, b1);
  force_layer(m.w2_out, w2);
  const std::vector<double> b2v{b2};
  force_layer(m.b2_out, b2v);
}

ModelConfig small_config(std::size_t n, std::size_t k, MixerKind kind = MixerKind::qmix, bool recurrent = false) {
  ModelConfig c;
  c.agent = {4, k, n, 16, recurrent};
  c.mixer = {kind, n, 5, 8, 16};
  return c;
}

}  // namespace

TEST_CASE("agent utilities") {
  ModelConfig cfg = small_config(3, 4);
  FactorizedQModel model(cfg, 1);
  std::mt19937_64 rng(2);
  std::vector<std::vector<double>> obs(3, uniform_vector(4, rng));
  const std::vector<int> last = {0, -1, 3};

  SUBCASE("zero-weight network outputs its bias") {
    for (Parameter* p : model.parameters()) p->value.fill(0.0);
    AgentNet& net = model.agent();
    ParameterRefs params = net.parameters();
    Parameter* out_bias = params.back();
    out_bias->value = Tensor::vector({0.5, -1.0, 2.0, 0.25});
    Utilities u = model.agent_utilities(obs, last, {});
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t k = 0; k < 4; ++k) CHECK(u.q(a, k) == out_bias->value[k]);
    }
  }

  SUBCASE("feedforward mode ignores the hidden state") {
    Utilities a = model.agent_utilities(obs, last, model.initial_hidden(3));
    Tensor h({3, 16});
    for (double& v : h.data()) v = 3.0;
    Utilities b = model.agent_utilities(obs, last, h);
    CHECK(a.q == b.q);
  }

  SUBCASE("shared parameters give identical utilities for identical inputs") {
    Tensor inputs({2, cfg.agent.input_width()});
    write_agent_input(obs[0], 2, 1, cfg.agent, inputs.row(0));
    write_agent_input(obs[0], 2, 1, cfg.agent, inputs.row(1));
    Tape tape(false);
    Tensor q = model.agent().forward(tape, tape.constant(inputs), tape.constant(model.initial_hidden(2))).q.value();
    for (std::size_t k = 0; k < 4; ++k) CHECK(q(0, k) == q(1, k));
  }

  SUBCASE("wrong observation width is rejected") {
    std::vector<std::vector<double>> bad(3, std::vector<double>(5, 0.0));
    CHECK_THROWS_AS(model.agent_utilities(bad, last, {}), DimensionError);
  }

  SUBCASE("recurrent mode advances the hidden state") {
    FactorizedQModel rnn(small_config(3, 4, MixerKind::qmix, true), 3);
    Utilities first = rnn.agent_utilities(obs, last, {});
    Utilities second = rnn.agent_utilities(obs, last, first.hidden);
    CHECK(first.hidden != rnn.initial_hidden(3));
    CHECK(first.q != second.q);
  }
}

TEST_CASE("vdn mixing") {
  CHECK(vdn_mix(std::vector<double>{1, 2, 3}) == 6.0);
  CHECK(vdn_mix(std::vector<double>{0, 0}) == 0.0);
  std::mt19937_64 rng(4);
  std::vector<double> q = {0.5, 0.25, 2.0, -1.0};  // exact binary fractions, order-independent sums
  const double base = vdn_mix(q);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(q.begin(), q.end(), rng);
    CHECK(vdn_mix(q) == base);
  }
}

TEST_CASE("qmix mixing") {
  std::mt19937_64 rng(5);

  SUBCASE("zero mixing weights leave only the state bias") {
    Mixer m({MixerKind::qmix, 3, 5, 4, 8});
    m.init(rng);
    force_mixer(m, std::vector<double>(12, 0.0), uniform_vector(4, rng), std::vector<double>(4, 0.0), 1.75);
    for (int i = 0; i < 10; ++i) CHECK(qmix_mix(m, uniform_vector(3, rng, -5, 5), uniform_vector(5, rng)) == 1.75);
  }

  SUBCASE("one agent, one hidden unit by hand") {
    Mixer m({MixerKind::qmix, 1, 2, 1, 4});
    m.init(rng);
    force_mixer(m, {-2.0}, {0.0}, {1.0}, 0.0);
    CHECK(qmix_mix(m, std::vector<double>{1.0}, std::vector<double>{0.3, -0.7}) == doctest::Approx(2.0).epsilon(1e-15));
  }

  SUBCASE("raising any utility never lowers Q_tot") {
    for (int trial = 0; trial < 200; ++trial) {
      Mixer m({MixerKind::qmix, 3, 5, 8, 16});
      m.init(rng);
      const auto s = uniform_vector(5, rng);
      auto q = uniform_vector(3, rng, -3, 3);
      const double base = qmix_mix(m, q, s);
      for (std::size_t a = 0; a < 3; ++a) {
        auto up = q;
        up[a] += 0.1;
        CHECK(qmix_mix(m, up, s) >= base);
      }
    }
  }

  SUBCASE("an identity-weight mixer reproduces VDN") {
    Mixer m({MixerKind::qmix, 3, 5, 1, 4});
    m.init(rng);
    force_mixer(m, {1.0, 1.0, 1.0}, {50.0}, {1.0}, -50.0);
    for (int i = 0; i < 50; ++i) {
      const auto q = uniform_vector(3, rng);
      CHECK(std::fabs(qmix_mix(m, q, uniform_vector(5, rng)) - vdn_mix(q)) <= 1e-12);
      for (double g : monotone_grads(m, q, uniform_vector(5, rng))) CHECK(g == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("mixer partial derivatives") {
  std::mt19937_64 rng(6);

  SUBCASE("zero-weight mixer has zero partials") {
    Mixer m({MixerKind::qmix, 2, 5, 4, 8});
    m.init(rng);
    force_mixer(m, std::vector<double>(8, 0.0), std::vector<double>(4, 0.0), std::vector<double>(4, 0.0), 0.0);
    for (double g : monotone_grads(m, uniform_vector(2, rng), uniform_vector(5, rng))) CHECK(g == 0.0);
  }

  SUBCASE("vdn partials are one") {
    Mixer m({MixerKind::vdn, 3, 5, 4, 8});
    for (double g : monotone_grads(m, uniform_vector(3, rng), uniform_vector(5, rng))) CHECK(g == 1.0);
  }

  SUBCASE("autodiff partials are non-negative and match finite differences and the closed form") {
    for (int trial = 0; trial < 100; ++trial) {
      Mixer m({MixerKind::qmix, 3, 5, 8, 16});
      m.init(rng);
      const auto s = uniform_vector(5, rng);
      const auto q = uniform_vector(3, rng, -2, 2);
      const auto grads = monotone_grads(m, q, s);

      Tape tape(false);
      Tensor st({1, 5}, s);
      MixingWeights w = m.weights(tape, tape.constant(st));
      MixerSnapshot snap(w, 3);
      const auto closed = snap.partials(0, q);
      Var qv = tape.constant(Tensor({1, 3}, q));
      const Tensor graph = m.partials(w, m.mix(w, qv), qv).value();

      for (std::size_t a = 0; a < 3; ++a) {
        CHECK(grads[a] >= 0.0);
        auto up = q, down = q;
        up[a] += 1e-5;
        down[a] -= 1e-5;
        const double fd = (qmix_mix(m, up, s) - qmix_mix(m, down, s)) / 2e-5;
        CHECK(std::fabs(grads[a] - fd) / (std::fabs(fd) + 1e-8) <= 1e-4);
        CHECK(closed[a] == doctest::Approx(grads[a]).epsilon(1e-12));
        CHECK(graph[a] == doctest::Approx(grads[a]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("full mixer loss gradients match central differences") {
  std::mt19937_64 rng(7);
  Mixer m({MixerKind::qmix, 3, 5, 8, 16});
  m.init(rng);
  Tensor states({6, 5}, uniform_vector(30, rng));
  Tensor q({6, 3}, uniform_vector(18, rng, -2, 2));
  Tensor targets({6, 1}, uniform_vector(6, rng));
  const LossBuilder loss = [&](Tape& t) {
    MixingWeights w = m.weights(t, t.constant(states));
    Var qt = m.mix(w, t.constant(q)).q_tot;
    return mean(square(qt - t.constant(targets)));
  };
  CHECK(finite_diff_check(loss, m.parameters()) <= 1e-4);
}

TEST_CASE("igm argmax") {
  CHECK(igm_argmax(std::vector<double>{0.1, 0.9, 0.3, 0.2}, 2, 2) == JointAction{1, 0});
  CHECK(igm_argmax(std::vector<double>(6, 0.7), 3, 2) == JointAction{0, 0, 0});

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + trial % 3, k = 2 + trial % 4;
    Mixer m({MixerKind::qmix, n, 5, 8, 16});
    m.init(rng);
    Tensor st({1, 5}, uniform_vector(5, rng));
    Tape tape(false);
    MixerSnapshot snap(m.weights(tape, tape.constant(st)), n);
    const auto utilities = uniform_vector(n * k, rng, -2, 2);
    FactorizedJointValue value(utilities, n, k, snap, 0);
    const std::uint64_t total = joint_action_count(n, k);
    std::uint64_t best = 0;
    double best_value = -1e300;
    for (std::uint64_t i = 0; i < total; ++i) {
      const double v = value.value(decode_joint_action(i, n, k));
      if (v > best_value) {
        best_value = v;
        best = i;
      }
    }
    CHECK(value.greedy() == decode_joint_action(best, n, k));
  }
}

TEST_CASE("target synchronisation") {
  FactorizedQModel model(small_config(2, 3), 10);
  std::mt19937_64 rng(11);
  const auto online = model.parameters(Copy::online);
  const auto target = model.parameters(Copy::target);
  for (std::size_t i = 0; i < online.size(); ++i) CHECK(online[i]->value == target[i]->value);

  const auto check_equal_values = [&] {
    for (int i = 0; i < 100; ++i) {
      const auto s = uniform_vector(5, rng);
      const auto util = uniform_vector(6, rng);
      const JointAction u = {static_cast<int>(rng() % 3), static_cast<int>(rng() % 3)};
      CHECK(model.q_tot(s, util, u, Copy::online) == model.q_tot(s, util, u, Copy::target));
    }
  };
  check_equal_values();

  for (Parameter* p : online) {
    p->grad = Tensor(p->value.shape(), 0.1);
  }
  RmsPropState opt;
  rmsprop_step(online, opt);
  for (std::size_t i = 0; i < online.size(); ++i) CHECK(online[i]->value != target[i]->value);
  const auto saved = target[0]->value;
  model.sync_target();
  for (std::size_t i = 0; i < online.size(); ++i) CHECK(online[i]->value == target[i]->value);
  check_equal_values();

  for (Parameter* p : online) p->grad = Tensor(p->value.shape(), -0.3);
  rmsprop_step(online, opt);
  CHECK(target[0]->value != online[0]->value);
  CHECK(target[0]->value != saved);
}

TEST_CASE("checkpoint round trip restores parameters bit-exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "resq_ckpt_test";
  std::filesystem::remove_all(dir);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    FactorizedQModel a(small_config(3, 4, seed == 2 ? MixerKind::vdn : MixerKind::qmix, seed == 3), seed);
    FactorizedQModel b(small_config(3, 4, seed == 2 ? MixerKind::vdn : MixerKind::qmix, seed == 3), seed + 100);
    save_model(a, dir / "model");
    load_model(b, dir / "model");
    const auto pa = a.parameters(), pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  }
  nlohmann::json extra;
  save_archive(dir / "arr", {{"x", {2}, {1.5, -0.0}}}, {{"note", "hi"}});
  const auto loaded = load_archive(dir / "arr", &extra);
  CHECK(loaded[0].data[0] == 1.5);
  CHECK(std::signbit(loaded[0].data[1]));
  CHECK(extra["note"] == "hi");

  FactorizedQModel wrong(small_config(2, 4), 1);
  CHECK_THROWS(load_model(wrong, dir / "model"));
  std::filesystem::remove_all(dir);
}
