#pragma once

#include <torch/torch.h>

#include <json.hpp>
#include <map>
#include <string>

namespace curio::checkpoint {

// Single-file container: magic + version, a JSON manifest listing tensor
// names, shapes and byte offsets, then raw little-endian float64 data.
struct Checkpoint {
  std::map<std::string, torch::Tensor> tensors;
  nlohmann::json meta;
};

void save(const std::string& path, const Checkpoint& ckpt);
Checkpoint load(const std::string& path);

// Collect/restore parameters and buffers of a module under a name prefix.
void collect(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module);
void restore(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module);

}  // namespace curio::checkpoint
