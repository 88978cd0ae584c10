#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <torch/torch.h>

#include "json.hpp"

namespace a3gan {

inline constexpr const char* kCheckpointFormat = "a3gan-ckpt-v1";

/// In-memory view of a checkpoint archive: named arrays plus a JSON manifest.
///
/// On disk the archive is an 8-byte magic, a little-endian u64 header length,
/// a JSON header {format, metadata, tensors: [{name, dtype, shape, offset,
/// nbytes}]}, and then the raw little-endian array bytes.
struct Checkpoint {
    nlohmann::json metadata = nlohmann::json::object();
    std::map<std::string, torch::Tensor> tensors;

    bool contains(const std::string& name) const { return tensors.count(name) != 0; }
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies every parameter and buffer of `module` into `ckpt` under
/// `<prefix>/<submodule>/<tensor-role>`.
void store_module(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module);

/// Inverse of store_module. Missing names or shape mismatches raise
/// ConfigurationError.
void restore_module(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module);

/// "conv1.weight" -> "<prefix>/conv1/weight".
std::string checkpoint_key(const std::string& prefix, const std::string& torch_name);

}  // namespace a3gan
