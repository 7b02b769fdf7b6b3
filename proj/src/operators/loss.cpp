#include "resq/operators/loss.hpp"

#include <algorithm>
#include <cmath>

#include "resq/error.hpp"
#include "resq/operators/returns.hpp"
#include "resq/operators/softmax.hpp"

namespace resq {

using namespace ad;

namespace {

constexpr std::pair<TargetVariant, const char*> kTargetNames[] = {
    {TargetVariant::max, "max"},
    {TargetVariant::double_dqn, "double_dqn"},
    {TargetVariant::cdq_agent, "cdq_agent"},
    {TargetVariant::cdq_joint, "cdq_joint"},
    {TargetVariant::softmax_subspace, "softmax_subspace"},
    {TargetVariant::softmax_exact, "softmax_exact"},
    {TargetVariant::softmax_per_agent, "softmax_per_agent"},
    {TargetVariant::softmax_random, "softmax_random"},
};

constexpr std::pair<Regularizer, const char*> kRegularizerNames[] = {
    {Regularizer::none, "none"},       {Regularizer::return_mc, "return"}, {Regularizer::return_clipped, "return_clipped"},
    {Regularizer::nstep, "nstep"},     {Regularizer::gradreg, "gradreg"},  {Regularizer::l2, "l2"},
};

bool needs_online_mixer(const LossConfig& c) {
  switch (c.target) {
    case TargetVariant::cdq_joint:
      return true;
    case TargetVariant::softmax_subspace:
    case TargetVariant::softmax_exact:
    case TargetVariant::softmax_random:
      return c.double_q;
    default:
      return false;
  }
}

Tensor agent_inputs(const AgentNetConfig& cfg, const EpisodeBatch& batch) {
  const std::size_t n = batch.n_agents, rows = (batch.steps + 1) * batch.batch * n;
  Tensor inputs({rows, cfg.input_width()});
  for (std::size_t r = 0; r < rows; ++r) {
    const std::span<const double> obs(batch.observations.data() + r * batch.obs_dim, batch.obs_dim);
    write_agent_input(obs, batch.last_actions[r], r % n, cfg, inputs.row(r));
  }
  return inputs;
}

// Runs the agent over all steps: one pass when feedforward, unrolled over time when recurrent.
Var agent_forward(AgentNet& net, Tape& tape, const Tensor& inputs, std::size_t steps, std::size_t rows_per_step) {
  const std::size_t hidden = net.config().hidden;
  if (!net.config().recurrent) {
    return net.forward(tape, tape.constant(inputs), tape.constant(Tensor({inputs.rows(), hidden}))).q;
  }
  const std::size_t width = inputs.cols();
  Var h = tape.constant(Tensor({rows_per_step, hidden}));
  std::vector<Var> parts;
  parts.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const auto begin = inputs.data().begin() + static_cast<std::ptrdiff_t>(t * rows_per_step * width);
    Tensor x({rows_per_step, width}, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(rows_per_step * width)));
    AgentNet::Output out = net.forward(tape, tape.constant(std::move(x)), h);
    parts.push_back(out.q);
    h = out.hidden;
  }
  return concat_rows(parts);
}

Tensor state_rows(const EpisodeBatch& batch, std::size_t first_step, std::size_t steps) {
  const std::size_t width = batch.state_dim, count = steps * batch.batch;
  const auto begin = batch.states.begin() + static_cast<std::ptrdiff_t>(first_step * batch.batch * width);
  return Tensor({count, width}, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * width)));
}

void check_mask(const EpisodeBatch& batch) {
  for (std::size_t b = 0; b < batch.batch; ++b) {
    for (std::size_t t = 0; t < batch.steps; ++t) {
      const double expected = t < batch.lengths[b] ? 1.0 : 0.0;
      if (batch.mask[batch.row(t, b)] != expected) throw ContractError("inconsistent mask in episode batch");
    }
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (regularizer == Regularizer::nstep && n_steps < 1) throw ConfigError("nstep regularizer needs N >= 1");
}

std::string to_string(TargetVariant v) {
  for (auto [value, name] : kTargetNames) {
    if (value == v) return name;
  }
  throw ContractError("unknown target variant");
}

std::string to_string(Regularizer r) {
  for (auto [value, name] : kRegularizerNames) {
    if (value == r) return name;
  }
  throw ContractError("unknown regularizer");
}

TargetVariant parse_target_variant(const std::string& s) {
  for (auto [value, name] : kTargetNames) {
    if (s == name) return value;
  }
  throw ConfigError("unknown target variant '" + s + "'");
}

Regularizer parse_regularizer(const std::string& s) {
  for (auto [value, name] : kRegularizerNames) {
    if (s == name) return value;
  }
  throw ConfigError("unknown regularizer '" + s + "'");
}

double target_value(const LossConfig& config, const FactorizedJointValue& online, const FactorizedJointValue& target,
                    std::mt19937_64* rng) {
  const FactorizedJointValue& weights = config.double_q ? online : target;
  switch (config.target) {
    case TargetVariant::max:
      return target.value(target.greedy());
    case TargetVariant::double_dqn:
      return target.value(online.greedy());
    case TargetVariant::cdq_agent: {
      const JointAction u = online.greedy();
      std::vector<double> q(u.size());
      for (std::size_t a = 0; a < u.size(); ++a) q[a] = std::min(online.utility(a, u[a]), target.utility(a, u[a]));
      return target.mix(q);
    }
    case TargetVariant::cdq_joint: {
      const JointAction u = online.greedy();
      return std::min(online.value(u), target.value(u));
    }
    case TargetVariant::softmax_subspace:
      return softmax_subspace(weights, target, config.beta);
    case TargetVariant::softmax_exact:
      return softmax_exact(weights, target, config.beta);
    case TargetVariant::softmax_per_agent:
      return softmax_per_agent(weights, target, config.beta);
    case TargetVariant::softmax_random:
      if (rng == nullptr) throw ContractError("softmax_random target needs a random generator");
      return softmax_random(weights, target, config.beta, *rng);
  }
  throw ContractError("unknown target variant");
}

QForward forward_online(FactorizedQModel& model, const EpisodeBatch& batch, Tape& tape) {
  const std::size_t n = batch.n_agents, T = batch.steps, B = batch.batch;
  if (n != model.n_agents() || batch.obs_dim != model.config().agent.obs_dim ||
      batch.state_dim != model.config().mixer.state_dim) {
    throw DimensionError("episode batch does not match the model dimensions");
  }
  QForward out;
  out.utilities = agent_forward(model.agent(), tape, agent_inputs(model.config().agent, batch), T + 1, B * n);
  Var taken = gather_cols(slice_rows(out.utilities, 0, T * B * n), batch.actions);
  out.chosen = reshape(taken, {T * B, n});
  if (model.config().mixer.kind == MixerKind::qmix) {
    out.weights = model.mixer().weights(tape, tape.constant(state_rows(batch, 0, T)));
  }
  out.mixed = model.mixer().mix(out.weights, out.chosen);
  return out;
}

Tensor batch_utilities(FactorizedQModel& model, const EpisodeBatch& batch, Copy which) {
  Tape tape(false);
  return agent_forward(model.agent(which), tape, agent_inputs(model.config().agent, batch), batch.steps + 1,
                       batch.batch * batch.n_agents)
      .value();
}

Var masked_mean(Var per_row, const EpisodeBatch& batch) {
  const std::size_t rows = batch.steps * batch.batch;
  double valid = 0.0;
  for (double m : batch.mask) valid += m;
  if (valid <= 0.0) throw ContractError("episode batch has no valid steps");
  Var mask = per_row.tape().constant(Tensor({rows, 1}, batch.mask));
  return scale(sum(per_row * mask), 1.0 / valid);
}

TDComputation compute_loss(const LossConfig& config, FactorizedQModel& model, const EpisodeBatch& batch, Tape& tape,
                           std::mt19937_64* rng) {
  config.validate();
  check_mask(batch);
  const std::size_t n = batch.n_agents, K = model.n_actions(), T = batch.steps, B = batch.batch, rows = T * B;

  TDComputation out;
  out.forward = forward_online(model, batch, tape);
  const Tensor& online_util = out.forward.utilities.value();
  const Tensor target_util = batch_utilities(model, batch, Copy::target);
  const Tensor next_states = state_rows(batch, 1, T);
  const MixerSnapshot target_mix = model.mixer_snapshot(next_states, Copy::target);
  const MixerSnapshot online_mix =
      needs_online_mixer(config) ? model.mixer_snapshot(next_states, Copy::online) : MixerSnapshot(n, rows);

  const bool want_max = config.regularizer == Regularizer::nstep;
  std::vector<double> next_max(want_max ? rows : 0, 0.0);
  out.targets.assign(rows, 0.0);
  out.next_values.assign(rows, 0.0);
  out.discounts.assign(rows, 0.0);
  out.q_tot.assign(out.forward.mixed.q_tot.value().data().begin(), out.forward.mixed.q_tot.value().data().end());

  for (std::size_t r = 0; r < rows; ++r) {
    if (batch.mask[r] == 0.0) continue;
    ++out.valid;
    const std::size_t offset = (r + B) * n * K;  // the next state's utilities
    const std::span<const double> on(online_util.data().data() + offset, n * K);
    const std::span<const double> tg(target_util.data().data() + offset, n * K);
    const FactorizedJointValue online(on, n, K, online_mix, r);
    const FactorizedJointValue target(tg, n, K, target_mix, r);
    if (want_max) next_max[r] = target.value(target.greedy());
    if (batch.terminated[r]) continue;
    out.discounts[r] = config.gamma;
    out.next_values[r] = target_value(config, online, target, rng);
  }
  for (std::size_t r = 0; r < rows; ++r) out.targets[r] = batch.rewards[r] + out.discounts[r] * out.next_values[r];

  Var q_tot = out.forward.mixed.q_tot;
  Var td = masked_mean(square(tape.constant(Tensor({rows, 1}, out.targets)) - q_tot), batch);
  out.td_loss = td.item();

  Var reg;
  switch (config.regularizer) {
    case Regularizer::none:
      break;
    case Regularizer::return_mc:
      reg = masked_mean(square(q_tot - tape.constant(Tensor({rows, 1}, batch.returns))), batch);
      break;
    case Regularizer::return_clipped:
      reg = masked_mean(square(relu(q_tot - tape.constant(Tensor({rows, 1}, batch.returns)))), batch);
      break;
    case Regularizer::nstep: {
      out.baselines.assign(rows, 0.0);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t len = batch.lengths[b];
        std::vector<double> rewards(len);
        for (std::size_t t = 0; t < len; ++t) rewards[t] = batch.rewards[batch.row(t, b)];
        const bool ends_terminal = batch.terminated[batch.row(len - 1, b)] != 0;
        for (std::size_t t = 0; t < len; ++t) {
          const std::size_t k = std::min(config.n_steps, len - t);
          // next_max at row (j, b) holds the value of state j + 1
          const double boot = next_max[batch.row(t + k - 1, b)];
          out.baselines[batch.row(t, b)] =
              n_step_target(std::span<const double>(rewards).subspan(t), config.gamma, config.n_steps, boot,
                            ends_terminal);
        }
      }
      reg = masked_mean(square(q_tot - tape.constant(Tensor({rows, 1}, out.baselines))), batch);
      break;
    }
    case Regularizer::gradreg: {
      Var partials = model.mixer().partials(out.forward.weights, out.forward.mixed, out.forward.chosen);
      reg = masked_mean(sum_cols(square(partials)), batch);
      break;
    }
    case Regularizer::l2: {
      Var total;
      for (Parameter* p : model.parameters()) {
        Var term = sum(square(tape.parameter(*p)));
        total = total.valid() ? total + term : term;
      }
      reg = total;
      break;
    }
  }

  out.loss = td;
  if (reg.valid()) {
    Var scaled = scale(reg, config.lambda);
    out.regularizer = scaled.item();
    out.loss = td + scaled;
  }
  return out;
}

}  // namespace resq
