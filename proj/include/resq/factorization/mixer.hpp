#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "resq/autodiff/nn.hpp"

namespace resq {

enum class MixerKind { vdn, qmix };

struct MixerConfig {
  MixerKind kind = MixerKind::qmix;
  std::size_t n_agents = 0;
  std::size_t state_dim = 0;
  std::size_t embed_dim = 32;
  std::size_t hypernet_dim = 64;
};

/// State-conditioned mixing weights for a batch of states. Mixing weights are
/// already passed through |.|, so every entry of w1 and w2 is non-negative.
struct MixingWeights {
  ad::Var w1;  // [R, n*E], row-major (agent, unit)
  ad::Var b1;  // [R, E]
  ad::Var w2;  // [R, E]
  ad::Var b2;  // [R, 1]
};

struct MixOutput {
  ad::Var q_tot;       // [R, 1]
  ad::Var hidden_pre;  // [R, E]; invalid for VDN
};

/// Monotonic mixing network f_s. VDN sums utilities; QMIX uses hypernetworks
/// that map the global state to the weights of a one-hidden-layer mixer:
///   Q_tot = |W2(s)|^T ELU(|W1(s)|^T q + b1(s)) + b2(s).
class Mixer {
 public:
  Mixer() = default;
  explicit Mixer(const MixerConfig& config);

  const MixerConfig& config() const { return config_; }
  MixerKind kind() const { return config_.kind; }
  void init(std::mt19937_64& rng);

  /// Hypernetwork pass; states [R, state_dim]. Not used by VDN.
  MixingWeights weights(ad::Tape& tape, ad::Var states);
  /// q [R, n] -> Q_tot [R, 1]. `weights` is ignored for VDN.
  MixOutput mix(const MixingWeights& weights, ad::Var q) const;
  /// Closed-form dQ_tot/dq [R, n] as a differentiable expression.
  ad::Var partials(const MixingWeights& weights, const MixOutput& mixed, ad::Var q) const;

  ad::ParameterRefs parameters();

  // Hypernetwork layers, exposed for tests that force specific mixer weights.
  ad::Linear w1_hidden, w1_out;
  ad::Linear w2_hidden, w2_out;
  ad::Linear b1_out;
  ad::Linear b2_hidden, b2_out;

 private:
  MixerConfig config_;
};

/// Materialized mixing weights for a batch of states, evaluable without a tape.
class MixerSnapshot {
 public:
  MixerSnapshot() = default;
  /// VDN snapshot (no weights).
  MixerSnapshot(std::size_t n_agents, std::size_t rows);
  /// QMIX snapshot from recorded weights.
  explicit MixerSnapshot(const MixingWeights& weights, std::size_t n_agents);

  MixerKind kind() const { return kind_; }
  std::size_t rows() const { return rows_; }
  std::size_t agents() const { return n_; }

  double mix(std::size_t row, std::span<const double> q) const;
  /// Exact dQ_tot/dq at (row, q).
  std::vector<double> partials(std::size_t row, std::span<const double> q) const;

 private:
  MixerKind kind_ = MixerKind::vdn;
  std::size_t n_ = 0, embed_ = 0, rows_ = 0;
  ad::Tensor w1_, b1_, w2_, b2_;
};

double vdn_mix(std::span<const double> q);

}  // namespace resq
