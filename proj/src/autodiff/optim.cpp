#include "resq/autodiff/optim.hpp"

#include <algorithm>
#include <cmath>

#include "resq/error.hpp"

namespace resq::ad {

double global_grad_norm(const ParameterRefs& params) {
  double total = 0.0;
  for (const Parameter* p : params) {
    if (!p->has_grad()) continue;
    for (double g : p->grad.data()) total += g * g;
  }
  return std::sqrt(total);
}

double rmsprop_step(const ParameterRefs& params, RmsPropState& state) {
  for (const Parameter* p : params) {
    if (!p->has_grad()) throw ContractError("rmsprop_step: parameter " + p->name + " has no gradient");
  }
  if (state.square_avg.empty()) {
    for (const Parameter* p : params) state.square_avg.emplace_back(p->value.shape());
  }
  if (state.square_avg.size() != params.size()) throw DimensionError("rmsprop_step: state/parameter count mismatch");

  const double norm = global_grad_norm(params);
  double clip = 1.0;
  if (state.max_grad_norm && norm > *state.max_grad_norm) clip = *state.max_grad_norm / norm;

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Tensor& v = state.square_avg[i];
    if (!v.same_shape(p.value)) throw DimensionError("rmsprop_step: state shape mismatch for " + p.name);
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k] * clip;
      v[k] = state.decay * v[k] + (1.0 - state.decay) * g * g;
      p.value[k] -= state.learning_rate * g / (std::sqrt(v[k]) + state.epsilon);
    }
    p.grad.fill(0.0);
  }
  return norm;
}

double finite_diff_check(const LossBuilder& loss, const ParameterRefs& params, double step, double floor) {
  zero_grads(params);
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  const auto evaluate = [&] {
    Tape tape(false);
    return loss(tape).item();
  };

  double worst = 0.0;
  for (Parameter* p : params) {
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double original = p->value[k];
      p->value[k] = original + step;
      const double up = evaluate();
      p->value[k] = original - step;
      const double down = evaluate();
      p->value[k] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double err = std::fabs(p->grad[k] - numeric) / std::max(std::fabs(numeric), floor);
      worst = std::max(worst, err);
    }
  }
  zero_grads(params);
  return worst;
}

}  // namespace resq::ad
