#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "resq/autodiff/tape.hpp"

namespace resq::ad {

struct RmsPropState {
  double learning_rate = 5e-4;
  double decay = 0.99;
  double epsilon = 1e-5;
  std::optional<double> max_grad_norm = 10.0;
  std::vector<Tensor> square_avg;  // lazily shaped like the parameters
};

/// v <- decay*v + (1-decay)*g^2;  p <- p - lr*g/(sqrt(v)+eps);  grads zeroed.
/// Returns the global gradient norm measured before clipping.
double rmsprop_step(const ParameterRefs& params, RmsPropState& state);

double global_grad_norm(const ParameterRefs& params);

/// Builds a scalar loss on the supplied tape.
using LossBuilder = std::function<Var(Tape&)>;

/// Max over parameter elements of |autodiff - central difference| / max(|central difference|, floor).
/// Gradients smaller than `floor` are thus compared in absolute terms, above the
/// rounding noise of the difference quotient. Leaves values unchanged and grads zeroed.
double finite_diff_check(const LossBuilder& loss, const ParameterRefs& params, double step = 1e-5,
                         double floor = 1e-6);

}  // namespace resq::ad
