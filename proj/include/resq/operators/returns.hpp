#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace resq {

/// R_t = r_t + γ R_{t+1}, R_T = 0.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

/// Σ_{k<N} γ^k r_{t+k} + γ^N · bootstrap, where `rewards` runs from r_t to the
/// end of the episode. The sum stops at the episode end; past a terminal end
/// nothing is bootstrapped. When the end is not terminal the tail value is
/// `bootstrap`, discounted by the number of rewards actually summed.
double n_step_target(std::span<const double> rewards, double gamma, std::size_t n_steps, double bootstrap,
                     bool ends_terminal = true);

/// Target whose plain squared error, at learning rate (λ+1)α, reproduces the
/// return-regularized softmax loss: (r + γ·sm)/(λ+1) + λ R_t/(λ+1).
double theorem2_target(double reward, double gamma, double softmax_value, double return_value, double lambda);

}  // namespace resq
