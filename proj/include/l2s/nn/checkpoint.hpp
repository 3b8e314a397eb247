#pragma once

#include <filesystem>
#include <json.hpp>

#include "l2s/nn/layers.hpp"

namespace l2s::nn {

// Single-file checkpoint container: "L2CP", u32 version, JSON metadata
// string, u32 tensor count, then per tensor: name, u32 ndim, dims, f64 data.
inline constexpr uint32_t kCheckpointVersion = 1;

inline void checkpoint_save(const std::filesystem::path& path, const ParamStore& params,
                            const nlohmann::json& metadata) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open for writing: ", path.string());
  write_magic(os, "L2CP");
  write_u32(os, kCheckpointVersion);
  write_string(os, metadata.dump());
  write_u32(os, uint32_t(params.all().size()));
  for (const auto& [name, t] : params.all()) {
    write_string(os, name);
    write_u32(os, uint32_t(t->shape.size()));
    for (int d : t->shape) write_u32(os, uint32_t(d));
    for (double v : t->value) write_f64(os, v);
  }
  require(os.good(), "checkpoint write failed: ", path.string());
}

struct LoadedCheckpoint {
  nlohmann::json metadata;
  std::map<std::string, std::pair<std::vector<int>, std::vector<double>>> tensors;
};

inline LoadedCheckpoint checkpoint_load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open: ", path.string());
  expect_magic(is, "L2CP", path.string());
  uint32_t version = read_u32(is);
  require(version == kCheckpointVersion, "unsupported checkpoint version ", version);
  LoadedCheckpoint ck;
  ck.metadata = nlohmann::json::parse(read_string(is));
  uint32_t count = read_u32(is);
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = read_string(is);
    uint32_t ndim = read_u32(is);
    require(ndim <= 8, "corrupt checkpoint tensor rank");
    std::vector<int> shape(ndim);
    size_t numel = 1;
    for (auto& d : shape) {
      d = int(read_u32(is));
      numel *= size_t(d);
    }
    std::vector<double> data(numel);
    for (double& v : data) v = read_f64(is);
    require(bool(is), "truncated checkpoint: ", path.string());
    ck.tensors[name] = {std::move(shape), std::move(data)};
  }
  return ck;
}

// Restore every parameter of `params` from the loaded container; names and
// shapes must match exactly.
inline void restore_params(ParamStore& params, const LoadedCheckpoint& ck) {
  for (const auto& [name, t] : params.all()) {
    auto it = ck.tensors.find(name);
    require(it != ck.tensors.end(), "checkpoint is missing parameter ", name);
    require(it->second.first == t->shape, "checkpoint shape mismatch for ", name);
    t->value = it->second.second;
  }
  require(ck.tensors.size() == params.all().size(),
          "checkpoint has extra parameters not present in the model");
}

}  // namespace l2s::nn
