#pragma once

#include "fd/layers.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace fd {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Manifest half of a checkpoint. `extra` carries role-specific data such as
/// the view registry, dims and the label map.
struct CheckpointInfo {
  std::string config_hash;
  std::string kind;
  int epoch = 0;
  nlohmann::json metrics = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();
};

/// File layout: "FDCK", u32 version, u64 manifest length, manifest JSON, then
/// every tensor as little-endian float32 in manifest order.
struct Checkpoint {
  CheckpointInfo info;
  std::map<std::string, Matrix<float>> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Reads a checkpoint; refuses it when `expected_hash` is given and differs
/// from the stored config hash.
Checkpoint read_checkpoint(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_hash = std::nullopt);

template <typename T>
Checkpoint make_checkpoint(const CheckpointInfo& info, const ParamList<T>& params) {
  Checkpoint c;
  c.info = info;
  for (const Param<T>* p : params) {
    if (c.tensors.count(p->name)) throw CheckpointError("duplicate parameter name " + p->name);
    c.tensors[p->name] = p->value.template cast<float>();
  }
  return c;
}

/// Copies stored tensors into `params` by name. With `require_all`, every
/// param must be present in the checkpoint. Returns the number copied.
template <typename T>
std::size_t load_params(const Checkpoint& c, const ParamList<T>& params, bool require_all = true) {
  std::size_t loaded = 0;
  for (Param<T>* p : params) {
    const auto it = c.tensors.find(p->name);
    if (it == c.tensors.end()) {
      if (require_all) throw CheckpointError("checkpoint lacks parameter " + p->name);
      continue;
    }
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw CheckpointError("shape mismatch for parameter " + p->name);
    p->value = it->second.template cast<T>();
    p->zero_grad();
    p->momentum.setZero();
    ++loaded;
  }
  return loaded;
}

}  // namespace fd
