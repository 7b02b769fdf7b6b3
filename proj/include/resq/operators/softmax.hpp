#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "resq/factorization/joint_value.hpp"

namespace resq {

/// Largest joint action space that is enumerated exactly.
inline constexpr std::uint64_t kEnumerationGuard = 1'000'000;

/// Joint actions that differ from the anchor û in at most one agent.
struct ActionSubspace {
  JointAction anchor;
  std::vector<JointAction> members;  // anchor first, then agent-by-agent deviations
};

ActionSubspace build_action_subspace(const JointAction& anchor, std::size_t n_actions);
/// Subspace anchored at the IGM argmax of utilities [n, K].
ActionSubspace build_action_subspace(std::span<const double> utilities, std::size_t n_agents, std::size_t n_actions);

/// Σ softmax_β(weights)(i) · values(i), with the weights shifted by their max.
double softmax_value(std::span<const double> values, std::span<const double> weights, double beta);
inline double softmax_value(std::span<const double> values, double beta) { return softmax_value(values, values, beta); }

/// Softmax over an explicit set of joint actions. Weights come from `weights`,
/// averaged quantities from `values`; passing the same object evaluates once.
double softmax_over(std::span<const JointAction> set, const JointValueFunction& weights,
                    const JointValueFunction& values, double beta);

/// sm over Û built around weights.greedy().
double softmax_subspace(const JointValueFunction& weights, const JointValueFunction& values, double beta);
/// sm over every joint action. Refuses spaces larger than kEnumerationGuard.
double softmax_exact(const JointValueFunction& weights, const JointValueFunction& values, double beta);
/// sm over n(K-1)+1 joint actions drawn uniformly without replacement.
double softmax_random(const JointValueFunction& weights, const JointValueFunction& values, double beta,
                      std::mt19937_64& rng);
/// f_s(sm(Q_1), ..., sm(Q_n)): each agent's utilities are softmaxed, then mixed by `values`.
double softmax_per_agent(const FactorizedJointValue& weights, const FactorizedJointValue& values, double beta);

/// All K^n joint actions in index order, or a ContractError past the guard.
std::vector<JointAction> enumerate_joint_actions(std::size_t n_agents, std::size_t n_actions,
                                                 std::uint64_t guard = kEnumerationGuard);

/// Subspace-vs-exact softmax gap and its closed-form bound
///   (2 R_max / (1-γ)) · m / (m + exp(β (Q(u*) - Q(u')))),  m = |U - Û|,
/// where u* is the best joint action and u' the best outside Û.
struct Thm1Result {
  double gap = 0.0;          // |sm_Û - sm_U|, evaluated in a cancellation-free form
  double direct_gap = 0.0;   // the same difference computed naively
  double bound = 0.0;
  double tight_bound = 0.0;  // bound with 2 R_max / (1-γ) replaced by 2 max|Q|
  bool premise_holds = true; // |Q| <= R_max / (1-γ) everywhere
  bool anchor_optimal = true;
  std::size_t outside = 0;   // m
  bool holds() const { return gap <= bound * (1.0 + 1e-12); }
};

Thm1Result thm1_bound(const JointValueFunction& q, double beta, double r_max, double gamma);

}  // namespace resq
