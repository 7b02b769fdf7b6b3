#include "resq/envs/sticky.hpp"

#include <stdexcept>

namespace resq {

namespace {

// Decorrelates the wrapper's coin stream from the inner environment's seed.
constexpr std::uint64_t kCoinSalt = 0x5851f42d4c957f2dULL;

}  // namespace

StickyActions::StickyActions(std::unique_ptr<Env> inner, double p) : inner_(std::move(inner)), p_(p) {
  if (!inner_) throw std::invalid_argument("sticky wrapper needs an environment");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("sticky probability must lie in [0, 1]");
  executed_.assign(inner_->spec().n_agents, -1);
}

StickyActions::StickyActions(const StickyActions& other)
    : inner_(other.inner_->clone()), p_(other.p_), executed_(other.executed_), rng_(other.rng_) {}

void StickyActions::reset(std::uint64_t seed) {
  inner_->reset(seed);
  executed_.assign(inner_->spec().n_agents, -1);
  rng_.seed(seed ^ kCoinSalt);
}

StepResult StickyActions::step(std::span<const int> actions) {
  check_actions(spec(), actions);
  std::bernoulli_distribution coin(p_);
  std::vector<int> run(actions.begin(), actions.end());
  for (std::size_t a = 0; a < run.size(); ++a) {
    // one draw per agent and step, whether or not a previous action exists
    const bool repeat = coin(rng_);
    if (executed_[a] >= 0 && repeat) run[a] = executed_[a];
  }
  executed_ = run;
  return inner_->step(run);
}

EnvSnapshot StickyActions::snapshot() const {
  EnvSnapshot s = inner_->snapshot();
  s.data.insert(s.data.end(), executed_.begin(), executed_.end());
  return s;
}

void StickyActions::restore(const EnvSnapshot& snapshot) {
  const std::size_t n = executed_.size();
  if (snapshot.data.size() < n) throw std::invalid_argument("sticky snapshot is malformed");
  EnvSnapshot inner;
  inner.data.assign(snapshot.data.begin(), snapshot.data.end() - static_cast<std::ptrdiff_t>(n));
  inner_->restore(inner);
  executed_.assign(snapshot.data.end() - static_cast<std::ptrdiff_t>(n), snapshot.data.end());
}

void StickyActions::reseed(std::uint64_t seed) {
  inner_->reseed(seed);
  rng_.seed(seed ^ kCoinSalt);
}

}  // namespace resq
