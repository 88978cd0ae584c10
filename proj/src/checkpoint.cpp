#include "a3gan/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>

#include "a3gan/errors.hpp"

namespace a3gan {

namespace {

constexpr std::array<char, 8> kMagic{'A', '3', 'G', 'A', 'N', 'C', 'K', '1'};

std::string dtype_name(torch::ScalarType t) {
    switch (t) {
        case torch::kFloat32: return "float32";
        case torch::kFloat64: return "float64";
        case torch::kInt64: return "int64";
        default: throw ArgumentError("checkpoint: unsupported dtype " + std::string(c10::toString(t)));
    }
}

torch::ScalarType dtype_from_name(const std::string& s) {
    if (s == "float32") return torch::kFloat32;
    if (s == "float64") return torch::kFloat64;
    if (s == "int64") return torch::kInt64;
    throw IoError("checkpoint: unknown dtype '" + s + "'");
}

}  // namespace

std::string checkpoint_key(const std::string& prefix, const std::string& torch_name) {
    std::string key = torch_name;
    std::replace(key.begin(), key.end(), '.', '/');
    return prefix.empty() ? key : prefix + "/" + key;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    nlohmann::json header;
    header["format"] = kCheckpointFormat;
    header["metadata"] = ckpt.metadata;
    header["tensors"] = nlohmann::json::array();
    std::vector<torch::Tensor> blobs;
    uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        auto c = t.detach().to(torch::kCPU).contiguous();
        const auto nbytes = static_cast<uint64_t>(c.numel()) * c.element_size();
        header["tensors"].push_back({{"name", name},
                                     {"dtype", dtype_name(c.scalar_type())},
                                     {"shape", c.sizes().vec()},
                                     {"offset", offset},
                                     {"nbytes", nbytes}});
        offset += nbytes;
        blobs.push_back(std::move(c));
    }
    const std::string text = header.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("checkpoint: cannot open '" + tmp + "' for writing");
        out.write(kMagic.data(), kMagic.size());
        const uint64_t len = text.size();
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& b : blobs) {
            out.write(static_cast<const char*>(b.data_ptr()),
                      static_cast<std::streamsize>(b.numel() * b.element_size()));
        }
        out.flush();
        if (!out) throw IoError("checkpoint: write to '" + tmp + "' failed");
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open '" + path.string() + "'");
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw IoError("checkpoint: '" + path.string() + "' is not an a3gan checkpoint");
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError("checkpoint: truncated header in '" + path.string() + "'");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint: malformed header: " + std::string(e.what()));
    }
    if (header.value("format", "") != kCheckpointFormat) {
        throw IoError("checkpoint: unsupported format '" + header.value("format", "") + "'");
    }
    Checkpoint ckpt;
    ckpt.metadata = header["metadata"];
    const auto data_start = static_cast<std::streamoff>(sizeof(kMagic) + sizeof(len) + len);
    for (const auto& entry : header["tensors"]) {
        const auto shape = entry["shape"].get<std::vector<int64_t>>();
        auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype_from_name(entry["dtype"])));
        const auto nbytes = entry["nbytes"].get<uint64_t>();
        if (nbytes != static_cast<uint64_t>(t.numel()) * t.element_size()) {
            throw IoError("checkpoint: size mismatch for '" + entry["name"].get<std::string>() + "'");
        }
        in.seekg(data_start + static_cast<std::streamoff>(entry["offset"].get<uint64_t>()));
        in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
        if (!in) throw IoError("checkpoint: truncated data for '" + entry["name"].get<std::string>() + "'");
        ckpt.tensors.emplace(entry["name"].get<std::string>(), std::move(t));
    }
    return ckpt;
}

void store_module(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module) {
    for (const auto& item : module.named_parameters(true)) {
        ckpt.tensors[checkpoint_key(prefix, item.key())] = item.value().detach().clone();
    }
    for (const auto& item : module.named_buffers(true)) {
        ckpt.tensors[checkpoint_key(prefix, item.key())] = item.value().detach().clone();
    }
}

void restore_module(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module) {
    torch::NoGradGuard no_grad;
    auto copy_into = [&](const std::string& torch_name, torch::Tensor& dst) {
        const auto key = checkpoint_key(prefix, torch_name);
        auto it = ckpt.tensors.find(key);
        if (it == ckpt.tensors.end()) throw ConfigurationError("checkpoint: missing tensor '" + key + "'");
        if (it->second.sizes() != dst.sizes()) {
            throw ConfigurationError("checkpoint: shape mismatch for '" + key + "'");
        }
        dst.copy_(it->second);
    };
    for (auto& item : module.named_parameters(true)) copy_into(item.key(), item.value());
    for (auto& item : module.named_buffers(true)) copy_into(item.key(), item.value());
}

}  // namespace a3gan
