#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "resq/autodiff/tape.hpp"

namespace resq::ad {

/// Fully connected layer. Weights stored [in, out] so the forward pass is x W + b.
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out);

  std::size_t in_features() const { return weight.value.rows(); }
  std::size_t out_features() const { return weight.value.cols(); }

  /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero bias.
  void init(std::mt19937_64& rng);
  Var forward(Tape& tape, Var x);
  void collect(ParameterRefs& out);
};

/// GRU cell with the reset gate applied to the recurrent candidate term:
///   r  = sigmoid(x Wxr + h Whr + br)
///   z  = sigmoid(x Wxz + h Whz + bz)
///   c  = tanh(x Wxc + bxc + r * (h Whc + bhc))
///   h' = (1 - z) * c + z * h
struct GruCell {
  Linear input_reset, input_update, input_candidate;
  Linear hidden_reset, hidden_update, hidden_candidate;

  GruCell() = default;
  GruCell(const std::string& name, std::size_t in, std::size_t hidden);

  std::size_t hidden_size() const { return hidden_reset.out_features(); }

  void init(std::mt19937_64& rng);
  Var forward(Tape& tape, Var x, Var h);
  void collect(ParameterRefs& out);
};

}  // namespace resq::ad
