#include "resq/trainer/replay.hpp"

#include <numeric>

#include "resq/error.hpp"

namespace resq {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ContractError("replay buffer capacity must be positive");
}

std::size_t ReplayBuffer::transitions() const {
  std::size_t total = 0;
  for (const Episode& e : episodes_) total += e.length;
  return total;
}

void ReplayBuffer::add(Episode episode) {
  if (episode.length == 0) throw ContractError("cannot store an empty episode");
  if (episodes_.size() == capacity_) episodes_.pop_front();
  episodes_.push_back(std::move(episode));
}

std::vector<const Episode*> ReplayBuffer::sample(std::size_t count, std::mt19937_64& rng) const {
  if (count > episodes_.size()) throw ContractError("replay buffer holds fewer episodes than requested");
  std::vector<std::size_t> index(episodes_.size());
  std::iota(index.begin(), index.end(), std::size_t{0});
  std::vector<const Episode*> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, index.size() - 1);
    std::swap(index[i], index[pick(rng)]);
    out.push_back(&episodes_[index[i]]);
  }
  return out;
}

namespace {

constexpr std::size_t kMetaWidth = 5;

template <class T>
void append(std::vector<double>& out, const std::vector<T>& in) {
  for (const T& v : in) out.push_back(static_cast<double>(v));
}

const NamedArray& find(const std::vector<NamedArray>& arrays, const std::string& name) {
  for (const NamedArray& a : arrays) {
    if (a.name == name) return a;
  }
  throw ContractError("archive lacks array " + name);
}

}  // namespace

std::vector<NamedArray> ReplayBuffer::to_arrays(const std::string& prefix) const {
  std::vector<double> meta, obs, states, actions, rewards, terminated, returns, snaps;
  for (const Episode& e : episodes_) {
    const std::size_t width = e.snapshots.empty() ? 0 : e.snapshots.front().size();
    for (const auto& s : e.snapshots) {
      if (s.size() != width) throw ContractError("snapshot width varies within an episode");
    }
    append(meta, std::vector<std::size_t>{e.n_agents, e.obs_dim, e.state_dim, e.length, width});
    append(obs, e.observations);
    append(states, e.states);
    append(actions, e.actions);
    append(rewards, e.rewards);
    append(terminated, e.terminated);
    append(returns, e.returns);
    for (const auto& s : e.snapshots) append(snaps, s);
  }
  const auto array = [&](const char* name, std::vector<double> data, std::size_t width = 1) {
    const std::size_t size = data.size();
    return NamedArray{prefix + name, width == 1 ? ad::Shape{size} : ad::Shape{size / width, width}, std::move(data)};
  };
  return {array("meta", std::move(meta), kMetaWidth), array("observations", std::move(obs)),
          array("states", std::move(states)),         array("actions", std::move(actions)),
          array("rewards", std::move(rewards)),       array("terminated", std::move(terminated)),
          array("returns", std::move(returns)),       array("snapshots", std::move(snaps))};
}

ReplayBuffer ReplayBuffer::from_arrays(std::size_t capacity, const std::vector<NamedArray>& arrays,
                                       const std::string& prefix) {
  ReplayBuffer buffer(capacity);
  const auto& meta = find(arrays, prefix + "meta").data;
  const auto& obs = find(arrays, prefix + "observations").data;
  const auto& states = find(arrays, prefix + "states").data;
  const auto& actions = find(arrays, prefix + "actions").data;
  const auto& rewards = find(arrays, prefix + "rewards").data;
  const auto& terminated = find(arrays, prefix + "terminated").data;
  const auto& returns = find(arrays, prefix + "returns").data;
  const auto& snaps = find(arrays, prefix + "snapshots").data;
  if (meta.size() % kMetaWidth != 0) throw ContractError("buffer metadata is malformed");

  std::size_t o = 0, s = 0, a = 0, r = 0, p = 0;
  const auto take = [](const std::vector<double>& src, std::size_t& at, std::size_t count) {
    if (at + count > src.size()) throw ContractError("buffer archive is truncated");
    std::vector<double> out(src.begin() + static_cast<std::ptrdiff_t>(at),
                            src.begin() + static_cast<std::ptrdiff_t>(at + count));
    at += count;
    return out;
  };
  for (std::size_t i = 0; i < meta.size(); i += kMetaWidth) {
    Episode e;
    e.n_agents = static_cast<std::size_t>(meta[i]);
    e.obs_dim = static_cast<std::size_t>(meta[i + 1]);
    e.state_dim = static_cast<std::size_t>(meta[i + 2]);
    e.length = static_cast<std::size_t>(meta[i + 3]);
    const auto width = static_cast<std::size_t>(meta[i + 4]);
    e.observations = take(obs, o, (e.length + 1) * e.n_agents * e.obs_dim);
    e.states = take(states, s, (e.length + 1) * e.state_dim);
    for (double v : take(actions, a, e.length * e.n_agents)) e.actions.push_back(static_cast<int>(v));
    std::size_t r2 = r, r3 = r;
    e.rewards = take(rewards, r, e.length);
    for (double v : take(terminated, r2, e.length)) e.terminated.push_back(static_cast<std::uint8_t>(v));
    e.returns = take(returns, r3, e.length);
    if (width > 0) {
      for (std::size_t t = 0; t < e.length; ++t) {
        std::vector<int> snap;
        for (double v : take(snaps, p, width)) snap.push_back(static_cast<int>(v));
        e.snapshots.push_back(std::move(snap));
      }
    }
    buffer.add(std::move(e));
  }
  return buffer;
}

}  // namespace resq
