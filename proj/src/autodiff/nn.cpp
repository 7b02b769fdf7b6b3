#include "resq/autodiff/nn.hpp"

#include <cmath>

#include "resq/error.hpp"

namespace resq::ad {

Linear::Linear(const std::string& name, std::size_t in, std::size_t out)
    : weight(name + ".weight", Tensor({in, out})), bias(name + ".bias", Tensor({out})) {}

void Linear::init(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : weight.value.data()) w = dist(rng);
  bias.value.fill(0.0);
}

Var Linear::forward(Tape& tape, Var x) { return linear(x, tape.parameter(weight), tape.parameter(bias)); }

void Linear::collect(ParameterRefs& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

GruCell::GruCell(const std::string& name, std::size_t in, std::size_t hidden)
    : input_reset(name + ".input_reset", in, hidden),
      input_update(name + ".input_update", in, hidden),
      input_candidate(name + ".input_candidate", in, hidden),
      hidden_reset(name + ".hidden_reset", hidden, hidden),
      hidden_update(name + ".hidden_update", hidden, hidden),
      hidden_candidate(name + ".hidden_candidate", hidden, hidden) {}

void GruCell::init(std::mt19937_64& rng) {
  for (Linear* l : {&input_reset, &input_update, &input_candidate, &hidden_reset, &hidden_update, &hidden_candidate}) {
    l->init(rng);
  }
}

Var GruCell::forward(Tape& tape, Var x, Var h) {
  if (h.value().rank() != 2 || h.value().cols() != hidden_size() || h.value().rows() != x.value().rows()) {
    throw DimensionError("gru_cell: hidden state " + shape_string(h.shape()) + " does not match hidden size " +
                         std::to_string(hidden_size()));
  }
  Var reset = sigmoid(input_reset.forward(tape, x) + hidden_reset.forward(tape, h));
  Var update = sigmoid(input_update.forward(tape, x) + hidden_update.forward(tape, h));
  Var candidate = tanh(input_candidate.forward(tape, x) + reset * hidden_candidate.forward(tape, h));
  return add_scalar(-update, 1.0) * candidate + update * h;
}

void GruCell::collect(ParameterRefs& out) {
  for (Linear* l : {&input_reset, &input_update, &input_candidate, &hidden_reset, &hidden_update, &hidden_candidate}) {
    l->collect(out);
  }
}

}  // namespace resq::ad
