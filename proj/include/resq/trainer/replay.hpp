#pragma once

#include <cstddef>
#include <deque>
#include <random>
#include <vector>

#include "resq/factorization/checkpoint.hpp"
#include "resq/trainer/episode.hpp"

namespace resq {

/// FIFO store of whole episodes. The oldest episode is evicted when full.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 5000);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return episodes_.size(); }
  bool empty() const { return episodes_.empty(); }
  std::size_t transitions() const;

  void add(Episode episode);
  const Episode& operator[](std::size_t i) const { return episodes_[i]; }

  /// `count` distinct episodes drawn uniformly. Throws ContractError if size() < count.
  std::vector<const Episode*> sample(std::size_t count, std::mt19937_64& rng) const;

  std::vector<NamedArray> to_arrays(const std::string& prefix = "buffer.") const;
  static ReplayBuffer from_arrays(std::size_t capacity, const std::vector<NamedArray>& arrays,
                                  const std::string& prefix = "buffer.");

 private:
  std::size_t capacity_;
  std::deque<Episode> episodes_;
};

}  // namespace resq
