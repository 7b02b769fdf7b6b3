#include <cmath>
#include <random>

#include "doctest.h"
#include "resq/autodiff/nn.hpp"
#include "resq/autodiff/optim.hpp"
#include "resq/autodiff/tape.hpp"
#include "resq/error.hpp"

using namespace resq;
using namespace resq::ad;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

// Values bounded away from the kinks of relu/abs so central differences stay on one side.
Tensor away_from_zero(Shape shape, std::mt19937_64& rng) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (double& v : t.data()) v = (v < 0 ? -0.05 : 0.05) + v;
  return t;
}

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("linear forward matches hand values and a naive triple loop") {
  Tape tape(false);
  Var y = linear(tape.constant(Tensor::matrix({{1, 2}})), tape.constant(Tensor::matrix({{1, 0}, {0, 1}})),
                 tape.constant(Tensor::vector({0, 0})));
  CHECK(y.value() == Tensor::matrix({{1, 2}}));

  Var z = linear(tape.constant(Tensor::matrix({{1, 1}})), tape.constant(Tensor::matrix({{2}, {3}})),
                 tape.constant(Tensor::vector({1})));
  CHECK(z.item() == 6.0);

  std::mt19937_64 rng(7);
  Tensor x = random_tensor({3, 4}, rng), w = random_tensor({4, 2}, rng), b = random_tensor({2}, rng);
  Var out = linear(tape.constant(x), tape.constant(w), tape.constant(b));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = b[j];
      for (std::size_t k = 0; k < 4; ++k) acc += x(i, k) * w(k, j);
      CHECK(std::fabs(out.value()(i, j) - acc) <= 1e-12);
    }
  }
}

TEST_CASE("linear rejects non-conforming shapes") {
  Tape tape;
  CHECK_THROWS_AS(linear(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 2})), tape.constant(Tensor({2}))),
                  DimensionError);
  CHECK_THROWS_AS(linear(tape.constant(Tensor({2, 3})), tape.constant(Tensor({3, 2})), tape.constant(Tensor({3}))),
                  DimensionError);
}

TEST_CASE("activations") {
  Tape tape(false);
  Var x = tape.constant(Tensor::vector({-2.0, 3.0, 0.0, -1.0, -1.5}));
  const Tensor r = relu(x).value();
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 3.0);
  const Tensor e = elu(x).value();
  CHECK(e[2] == 0.0);
  CHECK(e[3] == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-14));
  CHECK(e[3] == doctest::Approx(-0.6321).epsilon(1e-4));
  CHECK(abs(x).value()[4] == 1.5);
  CHECK(sigmoid(x).value()[2] == 0.5);
  CHECK(tanh(x).value()[1] == doctest::Approx(std::tanh(3.0)));
  CHECK(activation(x, Activation::abs).value()[0] == 2.0);
}

TEST_CASE("gru cell gate algebra") {
  std::mt19937_64 rng(3);
  GruCell cell("gru", 3, 4);  // zero weights and biases
  Tape tape(false);
  Tensor h = random_tensor({2, 4}, rng);
  Var out = cell.forward(tape, tape.constant(random_tensor({2, 3}, rng)), tape.constant(h));
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(out.value()[i] == doctest::Approx(0.5 * h[i]).epsilon(1e-15));

  cell.init(rng);
  Var zero = cell.forward(tape, tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 4})));
  for (double v : zero.value().data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(cell.forward(tape, tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 5}))), DimensionError);
}

TEST_CASE("gru cell matches a step-by-step scalar oracle") {
  std::mt19937_64 rng(11);
  const std::size_t in = 3, hidden = 4, batch = 2;
  GruCell cell("gru", in, hidden);
  cell.init(rng);
  for (Linear* l : {&cell.input_reset, &cell.input_update, &cell.input_candidate, &cell.hidden_reset,
                    &cell.hidden_update, &cell.hidden_candidate}) {
    l->bias.value = random_tensor({hidden}, rng);
  }
  Tensor x = random_tensor({batch, in}, rng), h = random_tensor({batch, hidden}, rng);
  Tape tape(false);
  const Tensor out = cell.forward(tape, tape.constant(x), tape.constant(h)).value();

  const auto affine = [](const Linear& l, const Tensor& v, std::size_t row, std::size_t j) {
    double acc = l.bias.value[j];
    for (std::size_t k = 0; k < l.in_features(); ++k) acc += v(row, k) * l.weight.value(k, j);
    return acc;
  };
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < hidden; ++j) {
      const double r = sigmoid_ref(affine(cell.input_reset, x, b, j) + affine(cell.hidden_reset, h, b, j));
      const double z = sigmoid_ref(affine(cell.input_update, x, b, j) + affine(cell.hidden_update, h, b, j));
      const double c = std::tanh(affine(cell.input_candidate, x, b, j) + r * affine(cell.hidden_candidate, h, b, j));
      const double expected = (1.0 - z) * c + z * h(b, j);
      CHECK(std::fabs(out(b, j) - expected) <= 1e-12);
    }
  }
}

TEST_CASE("backward basics") {
  Parameter x("x", Tensor::vector({0.3, -1.0, 2.0}));
  {
    Tape tape;
    tape.backward(sum(tape.parameter(x)));
  }
  CHECK(x.grad == Tensor::vector({1, 1, 1}));

  Parameter y("y", Tensor::scalar(3.0));
  {
    Tape tape;
    tape.backward(square(scale(tape.parameter(y), 2.0)));
  }
  CHECK(y.grad.item() == 24.0);

  // Accumulates across tapes until zeroed.
  {
    Tape tape;
    tape.backward(square(scale(tape.parameter(y), 2.0)));
  }
  CHECK(y.grad.item() == 48.0);
  y.zero_grad();
  CHECK(y.grad.item() == 0.0);

  Tape tape;
  CHECK_THROWS_AS(tape.backward(tape.parameter(x)), ContractError);
}

TEST_CASE("every primitive matches central differences on random instances") {
  std::mt19937_64 rng(2024);
  const std::size_t rows = 3, cols = 4, n = 2;
  for (int trial = 0; trial < 100; ++trial) {
    Parameter a("a", away_from_zero({rows, cols}, rng));
    Parameter b("b", away_from_zero({rows, cols}, rng));
    Parameter w("w", random_tensor({cols, 2}, rng));
    Parameter bias("bias", random_tensor({2}, rng));
    Parameter q("q", random_tensor({rows, n}, rng));
    Parameter hyper("hyper", random_tensor({rows, n * cols}, rng));
    const Tensor weights = random_tensor({rows, cols}, rng);
    const std::vector<int> idx = {1, 3, 0};

    const auto project = [&](Tape& t, Var v) { return sum(v * t.constant(weights)); };
    const std::vector<std::pair<const char*, LossBuilder>> cases = {
        {"add", [&](Tape& t) { return project(t, t.parameter(a) + t.parameter(b)); }},
        {"sub", [&](Tape& t) { return project(t, t.parameter(a) - t.parameter(b)); }},
        {"mul", [&](Tape& t) { return project(t, t.parameter(a) * t.parameter(b)); }},
        {"scale", [&](Tape& t) { return project(t, scale(t.parameter(a), -1.7)); }},
        {"add_scalar", [&](Tape& t) { return project(t, add_scalar(t.parameter(a), 0.4)); }},
        {"square", [&](Tape& t) { return project(t, square(t.parameter(a))); }},
        {"relu", [&](Tape& t) { return project(t, relu(t.parameter(a))); }},
        {"elu", [&](Tape& t) { return project(t, elu(t.parameter(a))); }},
        {"elu_derivative", [&](Tape& t) { return project(t, elu_derivative(t.parameter(a))); }},
        {"abs", [&](Tape& t) { return project(t, abs(t.parameter(a))); }},
        {"sigmoid", [&](Tape& t) { return project(t, sigmoid(t.parameter(a))); }},
        {"tanh", [&](Tape& t) { return project(t, tanh(t.parameter(a))); }},
        {"mean", [&](Tape& t) { return mean(square(t.parameter(a))); }},
        {"sum_cols", [&](Tape& t) { return sum(square(sum_cols(t.parameter(a)))); }},
        {"gather_cols", [&](Tape& t) { return sum(square(gather_cols(t.parameter(a), idx))); }},
        {"slice_rows", [&](Tape& t) { return sum(square(slice_rows(t.parameter(a), 1, 2))); }},
        {"concat_rows",
         [&](Tape& t) {
           const std::vector<Var> parts = {t.parameter(a), t.constant(weights), t.parameter(b)};
           return sum(square(concat_rows(parts)));
         }},
        {"reshape", [&](Tape& t) { return sum(square(reshape(t.parameter(a), {cols, rows}))); }},
        {"matmul", [&](Tape& t) { return sum(square(matmul(t.parameter(a), t.parameter(w)))); }},
        {"linear",
         [&](Tape& t) { return sum(square(linear(t.parameter(a), t.parameter(w), t.parameter(bias)))); }},
        {"row_vecmat",
         [&](Tape& t) { return project(t, square(row_vecmat(t.parameter(q), t.parameter(hyper), n))); }},
        {"row_matvec", [&](Tape& t) { return sum(square(row_matvec(t.parameter(hyper), t.parameter(a), n))); }},
    };
    ParameterRefs all = {&a, &b, &w, &bias, &q, &hyper};
    for (const auto& [name, loss] : cases) {
      const double err = finite_diff_check(loss, all);
      INFO(name << " trial " << trial);
      CHECK(err <= 1e-4);
    }
  }
}

TEST_CASE("composed network gradients match central differences") {
  std::mt19937_64 rng(5);
  Linear fc1("fc1", 5, 8), fc2("fc2", 8, 3);
  GruCell gru("gru", 8, 8);
  fc1.init(rng);
  fc2.init(rng);
  gru.init(rng);
  const Tensor x = random_tensor({4, 5}, rng), h = random_tensor({4, 8}, rng);
  ParameterRefs params;
  fc1.collect(params);
  gru.collect(params);
  fc2.collect(params);
  const LossBuilder loss = [&](Tape& t) {
    Var hidden = relu(fc1.forward(t, t.constant(x)));
    Var next = gru.forward(t, hidden, t.constant(h));
    return mean(square(fc2.forward(t, next)));
  };
  CHECK(finite_diff_check(loss, params) <= 1e-4);
}

TEST_CASE("finite_diff_check on linear and constant functions") {
  std::mt19937_64 rng(9);
  Parameter p("p", random_tensor({3, 3}, rng));
  const Tensor c = random_tensor({3, 3}, rng);
  CHECK(finite_diff_check([&](Tape& t) { return sum(t.parameter(p) * t.constant(c)); }, {&p}) <= 1e-9);

  Tape tape;
  Var constant = add_scalar(scale(sum(tape.parameter(p)), 0.0), 2.0);
  tape.backward(constant);
  for (double g : p.grad.data()) CHECK(g == 0.0);
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(13);
  Linear layer("l", 3, 2);
  layer.init(rng);
  ParameterRefs params;
  layer.collect(params);
  const Tensor x = random_tensor({5, 3}, rng);
  const auto first = [&](Tape& t) { return mean(square(layer.forward(t, t.constant(x)))); };
  const auto second = [&](Tape& t) { return sum(tanh(layer.forward(t, t.constant(x)))); };

  std::vector<Tensor> separate;
  zero_grads(params);
  {
    Tape t;
    t.backward(first(t));
  }
  {
    Tape t;
    t.backward(second(t));
  }
  for (Parameter* p : params) separate.push_back(p->grad);

  zero_grads(params);
  {
    Tape t;
    t.backward(first(t) + second(t));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t k = 0; k < separate[i].size(); ++k) {
      CHECK(params[i]->grad[k] == doctest::Approx(separate[i][k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("forward passes are deterministic") {
  const auto run = [] {
    std::mt19937_64 rng(99);
    Linear l("l", 4, 4);
    l.init(rng);
    Tape t(false);
    return tanh(l.forward(t, t.constant(random_tensor({3, 4}, rng)))).value();
  };
  CHECK(run() == run());
}

TEST_CASE("rmsprop step") {
  Parameter p("p", Tensor::scalar(1.0));
  RmsPropState state;
  state.max_grad_norm.reset();
  p.zero_grad();
  rmsprop_step({&p}, state);
  CHECK(p.value.item() == 1.0);

  Parameter q("q", Tensor::scalar(0.0));
  RmsPropState fresh;
  q.grad = Tensor::scalar(1.0);
  rmsprop_step({&q}, fresh);
  CHECK(q.value.item() == doctest::Approx(-5e-4 / (std::sqrt(0.01) + 1e-5)).epsilon(1e-12));
  CHECK(q.value.item() == doctest::Approx(-4.9995e-3).epsilon(1e-4));
  CHECK(q.grad.item() == 0.0);
  CHECK(fresh.square_avg[0].item() >= 0.0);

  Parameter missing("missing", Tensor::scalar(0.0));
  CHECK_THROWS_AS(rmsprop_step({&missing}, fresh), ContractError);
}

TEST_CASE("rmsprop descends a quadratic bowl") {
  Parameter p("p", Tensor::scalar(2.0));
  RmsPropState state;
  state.learning_rate = 1e-2;
  double previous = 4.0;
  for (int step = 0; step < 100; ++step) {
    Tape t;
    t.backward(square(t.parameter(p)));
    rmsprop_step({&p}, state);
    const double f = p.value.item() * p.value.item();
    CHECK(f < previous);
    previous = f;
  }
}

TEST_CASE("rmsprop clips by global norm") {
  Parameter a("a", Tensor::vector({0, 0})), b("b", Tensor::vector({0}));
  a.grad = Tensor::vector({30, 40});
  b.grad = Tensor::vector({0});
  RmsPropState state;
  state.max_grad_norm = 10.0;
  CHECK(rmsprop_step({&a, &b}, state) == doctest::Approx(50.0));
  // Clipped grads are (6, 8): v = 0.01 * g^2.
  CHECK(state.square_avg[0][0] == doctest::Approx(0.36));
  CHECK(state.square_avg[0][1] == doctest::Approx(0.64));
}
