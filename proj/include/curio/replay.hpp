#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <random>
#include <vector>

#include "curio/env.hpp"

namespace curio::replay {

inline constexpr int kEpisodeLength = 30;   // padded transition count
inline constexpr int kMaxEpisodes = 256;    // buffer capacity
inline constexpr int kDefaultBatch = 32;

// One episode as collected: observations o_0..o_L (length L+1), then L
// aligned actions/rewards/dones. Padding to the fixed length happens when
// batches are assembled, not in storage.
struct Episode {
  lang::Sentence command;
  std::vector<env::ObservationBundle> observations;
  std::vector<std::array<double, 4>> actions;
  std::vector<double> rewards;
  std::vector<double> dones;

  int length() const { return static_cast<int>(actions.size()); }
  void validate() const;  // throws std::invalid_argument on malformed episodes
};

// FIFO buffer of whole episodes; the oldest episode is evicted when full.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity = kMaxEpisodes) : capacity_(capacity) {}

  void push(Episode episode);

  // Uniform sample of batch_size episode indices: with replacement while the
  // buffer holds fewer than batch_size episodes, without replacement
  // otherwise. Throws std::logic_error when empty.
  std::vector<int> sample_indices(int batch_size, std::mt19937_64& rng) const;
  std::vector<const Episode*> sample(int batch_size, std::mt19937_64& rng) const;
  std::vector<const Episode*> sample(int batch_size, uint64_t seed) const;

  int size() const { return static_cast<int>(episodes_.size()); }
  int capacity() const { return capacity_; }
  const Episode& episode(int i) const { return episodes_[static_cast<size_t>(i)]; }

 private:
  int capacity_;
  std::deque<Episode> episodes_;
};

}  // namespace curio::replay
