#include "curio/replay.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace curio::replay {

void Episode::validate() const {
  const auto steps = actions.size();
  if (steps == 0 || steps > kEpisodeLength)
    throw std::invalid_argument("episode must hold 1..30 transitions");
  if (observations.size() != steps + 1)
    throw std::invalid_argument("episode needs one more observation than transitions");
  if (rewards.size() != steps || dones.size() != steps)
    throw std::invalid_argument("episode field lengths disagree");
  for (size_t t = 0; t + 1 < steps; ++t)
    if (dones[t] != 0.0) throw std::invalid_argument("done before the final transition");
  if (dones.back() != 1.0) throw std::invalid_argument("final transition must be done");
}

void ReplayBuffer::push(Episode episode) {
  episode.validate();
  episodes_.push_back(std::move(episode));
  while (static_cast<int>(episodes_.size()) > capacity_) episodes_.pop_front();
}

std::vector<int> ReplayBuffer::sample_indices(int batch_size, std::mt19937_64& rng) const {
  if (episodes_.empty()) throw std::logic_error("sample from an empty replay buffer");
  std::vector<int> indices;
  indices.reserve(static_cast<size_t>(batch_size));
  const int n = size();
  if (n < batch_size) {
    std::uniform_int_distribution<int> dist(0, n - 1);
    for (int i = 0; i < batch_size; ++i) indices.push_back(dist(rng));
  } else {
    // Partial Fisher-Yates: first batch_size entries of a uniform permutation.
    std::vector<int> all(static_cast<size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    for (int i = 0; i < batch_size; ++i) {
      std::uniform_int_distribution<int> dist(i, n - 1);
      std::swap(all[static_cast<size_t>(i)], all[static_cast<size_t>(dist(rng))]);
      indices.push_back(all[static_cast<size_t>(i)]);
    }
  }
  return indices;
}

std::vector<const Episode*> ReplayBuffer::sample(int batch_size, std::mt19937_64& rng) const {
  std::vector<const Episode*> out;
  for (int idx : sample_indices(batch_size, rng)) out.push_back(&episodes_[static_cast<size_t>(idx)]);
  return out;
}

std::vector<const Episode*> ReplayBuffer::sample(int batch_size, uint64_t seed) const {
  std::mt19937_64 rng(seed);
  return sample(batch_size, rng);
}

}  // namespace curio::replay
