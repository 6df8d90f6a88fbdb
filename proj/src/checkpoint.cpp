#include "curio/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace curio::checkpoint {

namespace {
constexpr char kMagic[8] = {'C', 'U', 'R', 'I', 'O', 'C', 'K', '1'};

void write_u64(std::ostream& out, uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

uint64_t read_u64(std::istream& in) {
  char buf[8];
  in.read(buf, 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}
}  // namespace

void save(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["endianness"] = "little";
  manifest["dtype"] = "f64";
  manifest["meta"] = ckpt.meta;
  auto& list = manifest["tensors"] = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, tensor] : ckpt.tensors) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = std::vector<int64_t>(tensor.sizes().begin(), tensor.sizes().end());
    entry["offset"] = offset;
    entry["numel"] = tensor.numel();
    list.push_back(entry);
    offset += static_cast<uint64_t>(tensor.numel()) * sizeof(double);
  }
  const std::string manifest_text = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, manifest_text.size());
  out.write(manifest_text.data(), static_cast<std::streamsize>(manifest_text.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    auto contiguous = tensor.detach().to(torch::kFloat64).contiguous();
    out.write(reinterpret_cast<const char*>(contiguous.data_ptr<double>()),
              static_cast<std::streamsize>(contiguous.numel() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("short write on checkpoint: " + path);
}

Checkpoint load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const uint64_t manifest_len = read_u64(in);
  std::string manifest_text(manifest_len, '\0');
  in.read(manifest_text.data(), static_cast<std::streamsize>(manifest_len));
  const auto manifest = nlohmann::json::parse(manifest_text);
  if (manifest.at("version").get<int>() != 1)
    throw std::runtime_error("unsupported checkpoint version");

  Checkpoint ckpt;
  ckpt.meta = manifest.value("meta", nlohmann::json::object());
  const std::streampos data_start = in.tellg();
  for (const auto& entry : manifest.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    const auto offset = entry.at("offset").get<uint64_t>();
    const auto numel = entry.at("numel").get<int64_t>();
    auto tensor = torch::empty(shape, torch::kFloat64);
    in.seekg(data_start + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(tensor.data_ptr<double>()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    ckpt.tensors[name] = tensor;
  }
  return ckpt;
}

void collect(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& p : module.named_parameters())
    ckpt.tensors[prefix + "." + p.key()] = p.value().detach().clone();
  for (const auto& b : module.named_buffers())
    ckpt.tensors[prefix + "." + b.key()] = b.value().detach().clone();
}

void restore(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  auto apply = [&](const std::string& name, torch::Tensor value) {
    const auto it = ckpt.tensors.find(prefix + "." + name);
    if (it == ckpt.tensors.end())
      throw std::runtime_error("checkpoint missing tensor: " + prefix + "." + name);
    if (!it->second.sizes().equals(value.sizes()))
      throw std::runtime_error("checkpoint shape mismatch for " + prefix + "." + name);
    value.copy_(it->second);
  };
  for (const auto& p : module.named_parameters()) apply(p.key(), p.value());
  for (const auto& b : module.named_buffers()) apply(b.key(), b.value());
}

}  // namespace curio::checkpoint
