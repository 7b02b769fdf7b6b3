#include "resq/diagnostics/probes.hpp"

#include <algorithm>
#include <cmath>

#include "resq/error.hpp"
#include "resq/factorization/joint_value.hpp"
#include "resq/operators/softmax.hpp"

namespace resq {

namespace {

// Running mean and variance (Welford).
struct Moments {
  std::size_t n = 0;
  double mean = 0.0, m2 = 0.0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double standard_error() const {
    return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  }
};

constexpr std::uint64_t kUniformGuard = 100'000'000;

}  // namespace

bool UniformMaxResult::within(double k_sigma) const {
  return std::abs(empirical - analytic) <= k_sigma * sigma / std::sqrt(static_cast<double>(samples));
}

UniformMaxResult uniform_max_overestimation(std::size_t n_agents, std::size_t n_actions, std::size_t samples,
                                            std::uint64_t seed) {
  if (n_agents == 0 || n_actions == 0 || samples == 0) throw ContractError("uniform_max_overestimation needs n, K, samples > 0");
  const std::uint64_t count = joint_action_count(n_agents, n_actions, kUniformGuard);
  if (count == 0) throw ContractError("K^n exceeds the enumeration guard");
  UniformMaxResult r;
  r.count = count;
  r.samples = samples;
  const double m = static_cast<double>(count);
  r.analytic = m / (m + 1.0);
  r.sigma = std::sqrt(m / ((m + 1.0) * (m + 1.0) * (m + 2.0)));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double sum = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    double best = 0.0;
    for (std::uint64_t i = 0; i < count; ++i) best = std::max(best, u(rng));
    sum += best;
  }
  r.empirical = sum / static_cast<double>(samples);
  return r;
}

bool BiasProbeResult::ordering_holds(double k_sigma) const {
  constexpr double kRounding = 1e-12;
  const bool res_re = res - re <= k_sigma * se_res_re + kRounding;
  const bool re_qmix = re - qmix <= k_sigma * se_re_qmix + kRounding;
  const bool positive = variance <= 0.0 || qmix > 0.0;
  return res_re && re_qmix && positive;
}

BiasProbeResult thm3_ordering_check(const BiasProbeSpec& spec) {
  if (spec.variance < 0.0 || spec.lambda < 0.0 || spec.beta < 0.0 || spec.draws == 0) {
    throw ContractError("bias probe needs C >= 0, lambda >= 0, beta >= 0 and draws > 0");
  }
  const std::uint64_t count = joint_action_count(spec.n_agents, spec.n_actions, kEnumerationGuard);
  if (count == 0) throw ContractError("bias probe joint action space exceeds the enumeration guard");
  const std::size_t m = static_cast<std::size_t>(count);

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Moments qmix, re, res, d_res_re, d_re_qmix;
  std::vector<double> noise(m);
  const double r = spec.v_star;
  for (std::size_t draw = 0; draw < spec.draws; ++draw) {
    for (double& x : noise) x = normal(rng);
    double mean = 0.0;
    for (double x : noise) mean += x;
    mean /= static_cast<double>(m);
    double norm2 = 0.0;
    for (double& x : noise) {
      x -= mean;
      norm2 += x * x;
    }
    const double scale = norm2 > 0.0 ? std::sqrt(spec.variance * static_cast<double>(m) / norm2) : 0.0;
    std::vector<double> table(m);
    for (std::size_t i = 0; i < m; ++i) table[i] = spec.v_star + scale * noise[i];
    const TableJointValue q(std::move(table), spec.n_agents, spec.n_actions);

    const double max_q = *std::max_element(q.table().begin(), q.table().end());
    const double sm = softmax_subspace(q, q, spec.beta);
    const double b_qmix = max_q - spec.v_star;
    const double b_re = (max_q + spec.lambda * r) / (spec.lambda + 1.0) - spec.v_star;
    const double b_res = (sm + spec.lambda * r) / (spec.lambda + 1.0) - spec.v_star;
    qmix.add(b_qmix);
    re.add(b_re);
    res.add(b_res);
    d_res_re.add(b_res - b_re);
    d_re_qmix.add(b_re - b_qmix);
  }
  BiasProbeResult out;
  out.qmix = qmix.mean;
  out.re = re.mean;
  out.res = res.mean;
  out.se_qmix = qmix.standard_error();
  out.se_res_re = d_res_re.standard_error();
  out.se_re_qmix = d_re_qmix.standard_error();
  out.variance = spec.variance;
  return out;
}

std::string to_string(ApproximationScheme s) {
  switch (s) {
    case ApproximationScheme::subspace: return "subspace";
    case ApproximationScheme::random_sample: return "random_sample";
    case ApproximationScheme::exact: return "exact";
  }
  return "?";
}

SchemeValues approximation_scheme_compare(FactorizedQModel& model, const ad::Tensor& states,
                                          std::span<const double> utilities, double beta,
                                          ApproximationScheme scheme, std::uint64_t seed) {
  const std::size_t n = model.n_agents(), k = model.n_actions(), rows = states.rows();
  if (utilities.size() != rows * n * k) throw DimensionError("one [n, K] utility block per state is required");
  if (scheme == ApproximationScheme::exact && joint_action_count(n, k, kEnumerationGuard) == 0) {
    throw ContractError("exact softmax refused: K^n exceeds the enumeration guard");
  }
  const MixerSnapshot snap = model.mixer_snapshot(states);
  std::mt19937_64 rng(seed);
  SchemeValues out;
  for (std::size_t r = 0; r < rows; ++r) {
    const FactorizedJointValue q(utilities.subspan(r * n * k, n * k), n, k, snap, r);
    q.reset_evaluations();
    double v = 0.0;
    switch (scheme) {
      case ApproximationScheme::subspace: v = softmax_subspace(q, q, beta); break;
      case ApproximationScheme::random_sample: v = softmax_random(q, q, beta, rng); break;
      case ApproximationScheme::exact: v = softmax_exact(q, q, beta); break;
    }
    out.values.push_back(v);
    out.evaluations.push_back(q.evaluations());
  }
  return out;
}

}  // namespace resq
