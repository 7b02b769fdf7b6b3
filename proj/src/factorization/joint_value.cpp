#include "resq/factorization/joint_value.hpp"

#include <string>

#include "resq/error.hpp"

namespace resq {

JointAction igm_argmax(std::span<const double> utilities, std::size_t n_agents, std::size_t n_actions) {
  if (utilities.size() != n_agents * n_actions) throw DimensionError("igm_argmax: utilities must be [n, K]");
  JointAction out(n_agents, 0);
  for (std::size_t a = 0; a < n_agents; ++a) {
    const double* row = utilities.data() + a * n_actions;
    int best = 0;
    for (std::size_t k = 1; k < n_actions; ++k) {
      if (row[k] > row[best]) best = static_cast<int>(k);
    }
    out[a] = best;
  }
  return out;
}

std::uint64_t joint_action_count(std::size_t n_agents, std::size_t n_actions, std::uint64_t limit) {
  std::uint64_t count = 1;
  for (std::size_t a = 0; a < n_agents; ++a) {
    if (n_actions != 0 && count > limit / n_actions) return 0;
    count *= n_actions;
  }
  return count > limit ? 0 : count;
}

JointAction decode_joint_action(std::uint64_t index, std::size_t n_agents, std::size_t n_actions) {
  JointAction u(n_agents, 0);
  for (std::size_t a = n_agents; a-- > 0;) {
    u[a] = static_cast<int>(index % n_actions);
    index /= n_actions;
  }
  return u;
}

std::uint64_t encode_joint_action(std::span<const int> joint_action, std::size_t n_actions) {
  std::uint64_t index = 0;
  for (int u : joint_action) index = index * n_actions + static_cast<std::uint64_t>(u);
  return index;
}

FactorizedJointValue::FactorizedJointValue(std::span<const double> utilities, std::size_t n_agents,
                                           std::size_t n_actions, const MixerSnapshot& mixer, std::size_t row)
    : utilities_(utilities), n_(n_agents), k_(n_actions), mixer_(&mixer), row_(row) {
  if (utilities.size() != n_agents * n_actions) throw DimensionError("factorized value: utilities must be [n, K]");
  if (mixer.agents() != n_agents || row >= mixer.rows()) throw DimensionError("factorized value: mixer row mismatch");
}

double FactorizedJointValue::value(std::span<const int> joint_action) const {
  if (joint_action.size() != n_) throw DimensionError("joint action has the wrong number of agents");
  ++evaluations_;
  double q[64];
  std::vector<double> heap;
  double* buf = q;
  if (n_ > 64) {
    heap.resize(n_);
    buf = heap.data();
  }
  for (std::size_t a = 0; a < n_; ++a) {
    const int u = joint_action[a];
    if (u < 0 || static_cast<std::size_t>(u) >= k_) throw DimensionError("joint action out of range");
    buf[a] = utilities_[a * k_ + static_cast<std::size_t>(u)];
  }
  return mixer_->mix(row_, std::span<const double>(buf, n_));
}

JointAction FactorizedJointValue::greedy() const { return igm_argmax(utilities_, n_, k_); }

TableJointValue::TableJointValue(std::vector<double> table, std::size_t n_agents, std::size_t n_actions)
    : table_(std::move(table)), n_(n_agents), k_(n_actions) {
  if (table_.size() != joint_action_count(n_agents, n_actions)) {
    throw DimensionError("value table must hold K^n = " + std::to_string(joint_action_count(n_agents, n_actions)) +
                         " entries");
  }
}

double TableJointValue::value(std::span<const int> joint_action) const {
  if (joint_action.size() != n_) throw DimensionError("joint action has the wrong number of agents");
  ++evaluations_;
  return table_[encode_joint_action(joint_action, k_)];
}

JointAction TableJointValue::greedy() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < table_.size(); ++i) {
    if (table_[i] > table_[best]) best = i;
  }
  return decode_joint_action(best, n_, k_);
}

}  // namespace resq
