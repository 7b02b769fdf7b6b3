#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "resq/autodiff/tape.hpp"
#include "resq/factorization/model.hpp"
#include "resq/trainer/episode.hpp"

namespace resq {

enum class TargetVariant {
  max,
  double_dqn,
  cdq_agent,
  cdq_joint,
  softmax_subspace,
  softmax_exact,
  softmax_per_agent,
  softmax_random,
};

enum class Regularizer { none, return_mc, return_clipped, nstep, gradreg, l2 };

struct LossConfig {
  double gamma = 0.99;
  TargetVariant target = TargetVariant::double_dqn;
  double beta = 0.05;
  Regularizer regularizer = Regularizer::none;
  double lambda = 0.0;
  std::size_t n_steps = 3;
  /// Softmax variants weight by the online network and average the target
  /// network; when false both roles use the target network.
  bool double_q = true;

  void validate() const;
};

std::string to_string(TargetVariant v);
std::string to_string(Regularizer r);
TargetVariant parse_target_variant(const std::string& s);
Regularizer parse_regularizer(const std::string& s);

/// Bootstrapped value of the next state under `config.target`. `online` and
/// `target` view the same state through the two parameter copies.
/// `rng` is only read by softmax_random.
double target_value(const LossConfig& config, const FactorizedJointValue& online, const FactorizedJointValue& target,
                    std::mt19937_64* rng = nullptr);

/// Online forward pass over a batch, recorded on `tape`.
struct QForward {
  ad::Var utilities;     // [(T+1)·B·n, K], rows ordered (t, b, agent)
  ad::Var chosen;        // [T·B, n], utilities of the taken actions
  MixingWeights weights;  // for the states at t < T
  MixOutput mixed;       // q_tot [T·B, 1]
};

QForward forward_online(FactorizedQModel& model, const EpisodeBatch& batch, ad::Tape& tape);
/// Agent utilities for every (t, b, agent) of the batch without gradient.
ad::Tensor batch_utilities(FactorizedQModel& model, const EpisodeBatch& batch, Copy which);

/// Per-row quantities are indexed like EpisodeBatch rows (t, b); padded rows hold 0.
struct TDComputation {
  ad::Var loss;
  double td_loss = 0.0;      // masked mean of δ²
  double regularizer = 0.0;  // regularizer term, already scaled by λ
  std::size_t valid = 0;     // Σ mask
  QForward forward;
  std::vector<double> targets;      // y = r + γ (1 - d) · next
  std::vector<double> next_values;  // target operator at s'
  std::vector<double> discounts;    // γ (1 - d)
  std::vector<double> q_tot;        // Q_tot(s, u)
  std::vector<double> baselines;    // N-step baselines when used
};

TDComputation compute_loss(const LossConfig& config, FactorizedQModel& model, const EpisodeBatch& batch,
                           ad::Tape& tape, std::mt19937_64* rng = nullptr);

/// Masked mean over rows of a [T·B, 1] expression.
ad::Var masked_mean(ad::Var per_row, const EpisodeBatch& batch);

}  // namespace resq
