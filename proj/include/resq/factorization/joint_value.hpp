#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "resq/factorization/mixer.hpp"

namespace resq {

using JointAction = std::vector<int>;

/// Per-agent greedy actions; ties go to the lowest action index.
/// `utilities` is row-major [n_agents, n_actions].
JointAction igm_argmax(std::span<const double> utilities, std::size_t n_agents, std::size_t n_actions);

/// Number of joint actions K^n, or 0 when it exceeds `limit`.
std::uint64_t joint_action_count(std::size_t n_agents, std::size_t n_actions, std::uint64_t limit = 1ULL << 40);

/// Decodes a joint action from its index; agent 0 is the most significant digit.
JointAction decode_joint_action(std::uint64_t index, std::size_t n_agents, std::size_t n_actions);

/// Q_tot(s, .) for one fixed state. Counts how many joint actions were evaluated.
class JointValueFunction {
 public:
  virtual ~JointValueFunction() = default;

  virtual std::size_t agents() const = 0;
  virtual std::size_t actions() const = 0;
  virtual double value(std::span<const int> joint_action) const = 0;
  /// Greedy joint action û.
  virtual JointAction greedy() const = 0;

  std::size_t evaluations() const noexcept { return evaluations_; }
  void reset_evaluations() const noexcept { evaluations_ = 0; }

 protected:
  mutable std::size_t evaluations_ = 0;
};

/// Q_tot built from agent utilities and a mixer row: Q_tot(u) = f_s(Q_1(u_1), ..., Q_n(u_n)).
/// The greedy action comes from per-agent argmaxes (IGM).
class FactorizedJointValue final : public JointValueFunction {
 public:
  FactorizedJointValue(std::span<const double> utilities, std::size_t n_agents, std::size_t n_actions,
                       const MixerSnapshot& mixer, std::size_t row);

  std::size_t agents() const override { return n_; }
  std::size_t actions() const override { return k_; }
  double value(std::span<const int> joint_action) const override;
  JointAction greedy() const override;

  double utility(std::size_t agent, int action) const { return utilities_[agent * k_ + static_cast<std::size_t>(action)]; }
  std::span<const double> utilities() const { return utilities_; }
  /// f_s applied to an arbitrary utility vector (not counted as a joint-action evaluation).
  double mix(std::span<const double> q) const { return mixer_->mix(row_, q); }

 private:
  std::span<const double> utilities_;
  std::size_t n_, k_;
  const MixerSnapshot* mixer_;
  std::size_t row_;
};

/// Explicit table over all K^n joint actions. The greedy action is the exhaustive argmax.
class TableJointValue final : public JointValueFunction {
 public:
  TableJointValue(std::vector<double> table, std::size_t n_agents, std::size_t n_actions);

  std::size_t agents() const override { return n_; }
  std::size_t actions() const override { return k_; }
  double value(std::span<const int> joint_action) const override;
  JointAction greedy() const override;

  const std::vector<double>& table() const { return table_; }

 private:
  std::vector<double> table_;
  std::size_t n_, k_;
};

std::uint64_t encode_joint_action(std::span<const int> joint_action, std::size_t n_actions);

}  // namespace resq
