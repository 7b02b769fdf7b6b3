#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "resq/factorization/model.hpp"

namespace resq {

struct UniformMaxResult {
  double analytic = 0.0;   // K^n / (K^n + 1)
  double empirical = 0.0;  // mean max of K^n uniform draws
  double sigma = 0.0;      // standard deviation of one max
  std::size_t samples = 0;
  std::uint64_t count = 0;  // K^n
  bool within(double k_sigma = 3.0) const;
};

/// E[max of K^n independent U(0,1)] against its closed form.
UniformMaxResult uniform_max_overestimation(std::size_t n_agents, std::size_t n_actions, std::size_t samples,
                                            std::uint64_t seed);

struct BiasProbeSpec {
  std::size_t n_agents = 2;
  std::size_t n_actions = 3;
  double v_star = 0.0;
  double variance = 1.0;  // C = mean over joint actions of (Q̄ - V*)^2
  double lambda = 0.5;
  double beta = 1.0;
  std::size_t draws = 100000;
  std::uint64_t seed = 1;
};

/// Monte-Carlo biases E[T Q̄] - V* of the three target operators when every
/// joint action is optimal with value V* and the estimate carries a zero-sum
/// perturbation whose mean square is exactly C. R is set to V*.
struct BiasProbeResult {
  double qmix = 0.0, re = 0.0, res = 0.0;
  double se_qmix = 0.0;
  double se_res_re = 0.0;  // standard error of the paired difference RES - RE
  double se_re_qmix = 0.0;
  /// B_RES <= B_RE <= B_QMIX up to `k_sigma` paired standard errors, and B_QMIX > 0 when C > 0.
  bool ordering_holds(double k_sigma = 3.0) const;
  double variance = 0.0;
};

BiasProbeResult thm3_ordering_check(const BiasProbeSpec& spec);

enum class ApproximationScheme { subspace, random_sample, exact };
std::string to_string(ApproximationScheme s);

struct SchemeValues {
  std::vector<double> values;            // one softmax value per state
  std::vector<std::size_t> evaluations;  // Q_tot evaluations per state
};

/// Softmax of Q_tot at each state under one approximation. `utilities` holds
/// one [n, K] block per state row of `states`; the online copy supplies both
/// weights and values.
SchemeValues approximation_scheme_compare(FactorizedQModel& model, const ad::Tensor& states,
                                          std::span<const double> utilities, double beta,
                                          ApproximationScheme scheme, std::uint64_t seed = 1);

}  // namespace resq
