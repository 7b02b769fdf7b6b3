#include "resq/operators/softmax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "resq/error.hpp"

namespace resq {

namespace {

bool within_one(std::span<const int> u, std::span<const int> anchor) {
  std::size_t diff = 0;
  for (std::size_t a = 0; a < u.size(); ++a) diff += u[a] != anchor[a];
  return diff <= 1;
}

// log Σ exp(β q_i) and the matching weighted mean of q.
struct LogMean {
  double log_mass = -std::numeric_limits<double>::infinity();
  double mean = 0.0;
};

LogMean log_mean(std::span<const double> q, double beta) {
  LogMean out;
  if (q.empty()) return out;
  const double top = *std::max_element(q.begin(), q.end());
  double mass = 0.0, weighted = 0.0;
  for (double v : q) {
    const double w = std::exp(beta * (v - top));
    mass += w;
    weighted += w * v;
  }
  out.log_mass = std::log(mass) + beta * top;
  out.mean = weighted / mass;
  return out;
}

}  // namespace

ActionSubspace build_action_subspace(const JointAction& anchor, std::size_t n_actions) {
  ActionSubspace out;
  out.anchor = anchor;
  out.members.push_back(anchor);
  for (std::size_t a = 0; a < anchor.size(); ++a) {
    for (std::size_t k = 0; k < n_actions; ++k) {
      if (static_cast<int>(k) == anchor[a]) continue;
      JointAction u = anchor;
      u[a] = static_cast<int>(k);
      out.members.push_back(std::move(u));
    }
  }
  return out;
}

ActionSubspace build_action_subspace(std::span<const double> utilities, std::size_t n_agents, std::size_t n_actions) {
  return build_action_subspace(igm_argmax(utilities, n_agents, n_actions), n_actions);
}

double softmax_value(std::span<const double> values, std::span<const double> weights, double beta) {
  if (values.empty()) throw ContractError("softmax over an empty set");
  if (values.size() != weights.size()) throw DimensionError("softmax: values and weights differ in length");
  if (!(beta >= 0.0)) throw ContractError("softmax: inverse temperature must be non-negative");
  const double top = *std::max_element(weights.begin(), weights.end());
  double mass = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double w = std::exp(beta * (weights[i] - top));
    mass += w;
    acc += w * values[i];
  }
  return acc / mass;
}

double softmax_over(std::span<const JointAction> set, const JointValueFunction& weights,
                    const JointValueFunction& values, double beta) {
  std::vector<double> v(set.size()), w;
  for (std::size_t i = 0; i < set.size(); ++i) v[i] = values.value(set[i]);
  if (&weights == &values) return softmax_value(v, v, beta);
  w.resize(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) w[i] = weights.value(set[i]);
  return softmax_value(v, w, beta);
}

double softmax_subspace(const JointValueFunction& weights, const JointValueFunction& values, double beta) {
  const ActionSubspace sub = build_action_subspace(weights.greedy(), weights.actions());
  return softmax_over(sub.members, weights, values, beta);
}

std::vector<JointAction> enumerate_joint_actions(std::size_t n_agents, std::size_t n_actions, std::uint64_t guard) {
  const std::uint64_t total = joint_action_count(n_agents, n_actions, guard);
  if (total == 0) {
    throw ContractError("joint action space " + std::to_string(n_actions) + "^" + std::to_string(n_agents) +
                        " exceeds the enumeration guard of " + std::to_string(guard));
  }
  std::vector<JointAction> out;
  out.reserve(total);
  for (std::uint64_t i = 0; i < total; ++i) out.push_back(decode_joint_action(i, n_agents, n_actions));
  return out;
}

double softmax_exact(const JointValueFunction& weights, const JointValueFunction& values, double beta) {
  return softmax_over(enumerate_joint_actions(weights.agents(), weights.actions()), weights, values, beta);
}

double softmax_random(const JointValueFunction& weights, const JointValueFunction& values, double beta,
                      std::mt19937_64& rng) {
  const std::size_t n = weights.agents(), k = weights.actions();
  const std::uint64_t total = joint_action_count(n, k, std::uint64_t{1} << 62);
  if (total == 0) throw ContractError("joint action space too large to index");
  const std::uint64_t want = std::min<std::uint64_t>(total, n * (k - 1) + 1);
  // Floyd's algorithm: `want` distinct indices from [0, total).
  std::set<std::uint64_t> picked;
  for (std::uint64_t j = total - want; j < total; ++j) {
    const std::uint64_t t = std::uniform_int_distribution<std::uint64_t>(0, j)(rng);
    if (!picked.insert(t).second) picked.insert(j);
  }
  std::vector<JointAction> set;
  set.reserve(picked.size());
  for (std::uint64_t i : picked) set.push_back(decode_joint_action(i, n, k));
  return softmax_over(set, weights, values, beta);
}

double softmax_per_agent(const FactorizedJointValue& weights, const FactorizedJointValue& values, double beta) {
  const std::size_t n = values.agents(), k = values.actions();
  std::vector<double> per_agent(n);
  for (std::size_t a = 0; a < n; ++a) {
    per_agent[a] = softmax_value(values.utilities().subspan(a * k, k), weights.utilities().subspan(a * k, k), beta);
  }
  return values.mix(per_agent);
}

Thm1Result thm1_bound(const JointValueFunction& q, double beta, double r_max, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("thm1_bound: discount must lie in [0, 1)");
  const std::size_t n = q.agents(), k = q.actions();
  const std::vector<JointAction> all = enumerate_joint_actions(n, k);
  const JointAction anchor = q.greedy();

  std::vector<double> inside, outside, every;
  every.reserve(all.size());
  double best = -std::numeric_limits<double>::infinity();
  double best_outside = -std::numeric_limits<double>::infinity();
  double largest_abs = 0.0;
  for (const JointAction& u : all) {
    const double v = q.value(u);
    every.push_back(v);
    best = std::max(best, v);
    largest_abs = std::max(largest_abs, std::fabs(v));
    if (within_one(u, anchor)) {
      inside.push_back(v);
    } else {
      outside.push_back(v);
      best_outside = std::max(best_outside, v);
    }
  }

  Thm1Result out;
  out.outside = outside.size();
  out.anchor_optimal = q.value(anchor) == best;
  const double scale = 2.0 * r_max / (1.0 - gamma);
  out.premise_holds = largest_abs <= r_max / (1.0 - gamma);
  out.direct_gap = std::fabs(softmax_value(inside, beta) - softmax_value(every, beta));
  if (outside.empty()) return out;

  // sm_Û - sm_U = b / (a + b) · (c/a - d/b) with a, b the softmax masses inside
  // and outside Û and c/a, d/b their weighted means.
  const LogMean in = log_mean(inside, beta), out_side = log_mean(outside, beta);
  out.gap = std::fabs(in.mean - out_side.mean) / (1.0 + std::exp(in.log_mass - out_side.log_mass));
  const double m = static_cast<double>(outside.size());
  const double factor = 1.0 / (1.0 + std::exp(beta * (best - best_outside) - std::log(m)));
  out.bound = scale * factor;
  out.tight_bound = 2.0 * largest_abs * factor;
  return out;
}

}  // namespace resq
