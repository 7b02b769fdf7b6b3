#include "resq/trainer/episode.hpp"

#include <algorithm>

#include "resq/error.hpp"

namespace resq {

EpisodeBatch make_batch(std::span<const Episode* const> episodes) {
  if (episodes.empty()) throw ContractError("make_batch: no episodes");
  EpisodeBatch out;
  const Episode& first = *episodes[0];
  out.batch = episodes.size();
  out.n_agents = first.n_agents;
  out.obs_dim = first.obs_dim;
  out.state_dim = first.state_dim;
  for (const Episode* e : episodes) {
    if (e->n_agents != out.n_agents || e->obs_dim != out.obs_dim || e->state_dim != out.state_dim) {
      throw DimensionError("make_batch: episodes disagree on dimensions");
    }
    if (e->length == 0) throw ContractError("make_batch: empty episode");
    out.steps = std::max(out.steps, e->length);
  }
  const std::size_t B = out.batch, T = out.steps, n = out.n_agents;
  out.observations.assign((T + 1) * B * n * out.obs_dim, 0.0);
  out.states.assign((T + 1) * B * out.state_dim, 0.0);
  out.actions.assign(T * B * n, 0);
  out.last_actions.assign((T + 1) * B * n, -1);
  out.rewards.assign(T * B, 0.0);
  out.terminated.assign(T * B, 0);
  out.mask.assign(T * B, 0.0);
  out.returns.assign(T * B, 0.0);
  out.lengths.resize(B);

  for (std::size_t b = 0; b < B; ++b) {
    const Episode& e = *episodes[b];
    out.lengths[b] = e.length;
    for (std::size_t t = 0; t <= e.length; ++t) {
      const std::size_t row = t * B + b;
      std::copy_n(e.observations.begin() + static_cast<std::ptrdiff_t>(t * n * out.obs_dim), n * out.obs_dim,
                  out.observations.begin() + static_cast<std::ptrdiff_t>(row * n * out.obs_dim));
      std::copy_n(e.states.begin() + static_cast<std::ptrdiff_t>(t * out.state_dim), out.state_dim,
                  out.states.begin() + static_cast<std::ptrdiff_t>(row * out.state_dim));
      if (t > 0) {
        std::copy_n(e.actions.begin() + static_cast<std::ptrdiff_t>((t - 1) * n), n,
                    out.last_actions.begin() + static_cast<std::ptrdiff_t>(row * n));
      }
      if (t == e.length) continue;
      std::copy_n(e.actions.begin() + static_cast<std::ptrdiff_t>(t * n), n,
                  out.actions.begin() + static_cast<std::ptrdiff_t>(row * n));
      out.rewards[row] = e.rewards[t];
      out.terminated[row] = e.terminated[t];
      out.mask[row] = 1.0;
      out.returns[row] = e.returns[t];
    }
  }
  return out;
}

}  // namespace resq
