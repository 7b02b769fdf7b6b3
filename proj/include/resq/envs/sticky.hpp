#pragma once

#include <random>

#include "resq/envs/env.hpp"

namespace resq {

/// With probability p, each agent independently repeats the action it last
/// executed instead of the selected one. The first step always executes the
/// selection.
class StickyActions final : public Env {
 public:
  StickyActions(std::unique_ptr<Env> inner, double p);
  StickyActions(const StickyActions& other);

  const EnvSpec& spec() const override { return inner_->spec(); }
  void reset(std::uint64_t seed) override;
  std::vector<double> state() const override { return inner_->state(); }
  std::vector<double> observation(std::size_t agent) const override { return inner_->observation(agent); }
  StepResult step(std::span<const int> actions) override;
  std::size_t time() const override { return inner_->time(); }

  EnvSnapshot snapshot() const override;
  void restore(const EnvSnapshot& snapshot) override;
  void reseed(std::uint64_t seed) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<StickyActions>(*this); }
  bool stochastic() const override { return p_ > 0.0 || inner_->stochastic(); }
  std::string name() const override { return "sticky(" + inner_->name() + ")"; }

  double probability() const { return p_; }
  const std::vector<int>& executed() const { return executed_; }
  const Env& inner() const { return *inner_; }

 private:
  std::unique_ptr<Env> inner_;
  double p_;
  std::vector<int> executed_;  // -1 before the first step
  std::mt19937_64 rng_;
};

}  // namespace resq
