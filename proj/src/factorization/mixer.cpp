#include "resq/factorization/mixer.hpp"

#include <cmath>
#include <numeric>

#include "resq/error.hpp"

namespace resq {

using namespace ad;

Mixer::Mixer(const MixerConfig& config) : config_(config) {
  if (config.kind != MixerKind::qmix) return;
  const std::size_t s = config.state_dim, h = config.hypernet_dim, e = config.embed_dim, n = config.n_agents;
  w1_hidden = Linear("mixer.w1_hidden", s, h);
  w1_out = Linear("mixer.w1_out", h, n * e);
  w2_hidden = Linear("mixer.w2_hidden", s, h);
  w2_out = Linear("mixer.w2_out", h, e);
  b1_out = Linear("mixer.b1_out", s, e);
  b2_hidden = Linear("mixer.b2_hidden", s, e);
  b2_out = Linear("mixer.b2_out", e, 1);
}

void Mixer::init(std::mt19937_64& rng) {
  if (config_.kind != MixerKind::qmix) return;
  for (Linear* l : {&w1_hidden, &w1_out, &w2_hidden, &w2_out, &b1_out, &b2_hidden, &b2_out}) l->init(rng);
}

MixingWeights Mixer::weights(Tape& tape, Var states) {
  if (config_.kind != MixerKind::qmix) return {};
  if (states.value().rank() != 2 || states.value().cols() != config_.state_dim) {
    throw DimensionError("mixer states " + shape_string(states.shape()) + " do not have width " +
                         std::to_string(config_.state_dim));
  }
  MixingWeights w;
  w.w1 = abs(w1_out.forward(tape, relu(w1_hidden.forward(tape, states))));
  w.w2 = abs(w2_out.forward(tape, relu(w2_hidden.forward(tape, states))));
  w.b1 = b1_out.forward(tape, states);
  w.b2 = b2_out.forward(tape, relu(b2_hidden.forward(tape, states)));
  return w;
}

MixOutput Mixer::mix(const MixingWeights& weights, Var q) const {
  if (q.value().rank() != 2 || q.value().cols() != config_.n_agents) {
    throw DimensionError("mixer utilities " + shape_string(q.shape()) + " do not have " +
                         std::to_string(config_.n_agents) + " columns");
  }
  if (config_.kind == MixerKind::vdn) return {sum_cols(q), {}};
  Var pre = row_vecmat(q, weights.w1, config_.n_agents) + weights.b1;
  Var q_tot = sum_cols(elu(pre) * weights.w2) + weights.b2;
  return {q_tot, pre};
}

Var Mixer::partials(const MixingWeights& weights, const MixOutput& mixed, Var q) const {
  if (config_.kind == MixerKind::vdn) {
    Tensor ones(q.value().shape(), 1.0);
    return q.tape().constant(std::move(ones));
  }
  return row_matvec(weights.w1, elu_derivative(mixed.hidden_pre) * weights.w2, config_.n_agents);
}

ParameterRefs Mixer::parameters() {
  ParameterRefs out;
  if (config_.kind != MixerKind::qmix) return out;
  for (Linear* l : {&w1_hidden, &w1_out, &w2_hidden, &w2_out, &b1_out, &b2_hidden, &b2_out}) l->collect(out);
  return out;
}

MixerSnapshot::MixerSnapshot(std::size_t n_agents, std::size_t rows)
    : kind_(MixerKind::vdn), n_(n_agents), rows_(rows) {}

MixerSnapshot::MixerSnapshot(const MixingWeights& weights, std::size_t n_agents)
    : kind_(MixerKind::qmix),
      n_(n_agents),
      embed_(weights.b1.value().cols()),
      rows_(weights.b1.value().rows()),
      w1_(weights.w1.value()),
      b1_(weights.b1.value()),
      w2_(weights.w2.value()),
      b2_(weights.b2.value()) {}

double MixerSnapshot::mix(std::size_t row, std::span<const double> q) const {
  if (q.size() != n_) throw DimensionError("mixer snapshot: expected " + std::to_string(n_) + " utilities");
  if (kind_ == MixerKind::vdn) return vdn_mix(q);
  const double* w1 = w1_.data().data() + row * n_ * embed_;
  const double* b1 = b1_.data().data() + row * embed_;
  const double* w2 = w2_.data().data() + row * embed_;
  double out = b2_[row];
  for (std::size_t e = 0; e < embed_; ++e) {
    double pre = b1[e];
    for (std::size_t a = 0; a < n_; ++a) pre += q[a] * w1[a * embed_ + e];
    out += w2[e] * (pre > 0.0 ? pre : std::expm1(pre));
  }
  return out;
}

std::vector<double> MixerSnapshot::partials(std::size_t row, std::span<const double> q) const {
  if (kind_ == MixerKind::vdn) return std::vector<double>(n_, 1.0);
  const double* w1 = w1_.data().data() + row * n_ * embed_;
  const double* b1 = b1_.data().data() + row * embed_;
  const double* w2 = w2_.data().data() + row * embed_;
  std::vector<double> out(n_, 0.0);
  for (std::size_t e = 0; e < embed_; ++e) {
    double pre = b1[e];
    for (std::size_t a = 0; a < n_; ++a) pre += q[a] * w1[a * embed_ + e];
    const double slope = (pre > 0.0 ? 1.0 : std::exp(pre)) * w2[e];
    for (std::size_t a = 0; a < n_; ++a) out[a] += w1[a * embed_ + e] * slope;
  }
  return out;
}

double vdn_mix(std::span<const double> q) { return std::accumulate(q.begin(), q.end(), 0.0); }

}  // namespace resq
