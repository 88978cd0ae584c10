#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <torch/torch.h>

#include "a3gan/checkpoint.hpp"

namespace a3gan {

struct EmbedderFeatures {
    torch::Tensor pool;  // [B, c, h, w]
    torch::Tensor fc;    // [B, d]
};

/// Frozen identity feature extractor. Implementations must be deterministic
/// and must never update their own parameters; gradients flow to the input.
class FeatureEmbedder {
public:
    virtual ~FeatureEmbedder() = default;
    /// images: [B, 3, H, W].
    virtual EmbedderFeatures embed(const torch::Tensor& images) const = 0;

    torch::Tensor embed_pool(const torch::Tensor& images) const { return embed(images).pool; }
    torch::Tensor embed_fc(const torch::Tensor& images) const { return embed(images).fc; }

    /// Snapshot of the parameters, for the freezing checks. Empty when the
    /// embedder has none.
    virtual std::map<std::string, torch::Tensor> parameters() const { return {}; }
    virtual std::string describe() const = 0;
};

struct EmbedderConfig {
    int64_t in_channels = 3;
    int64_t channels1 = 16;
    int64_t channels2 = 32;
    int64_t pool_channels = 64;
    int64_t fc_dim = 128;
    /// Spatial grid the pool map is averaged to before the fully connected head.
    int64_t head_grid = 4;
};

class EmbedderNetImpl : public torch::nn::Module {
public:
    explicit EmbedderNetImpl(const EmbedderConfig& cfg);
    EmbedderFeatures forward(const torch::Tensor& x);
    const EmbedderConfig& config() const { return cfg_; }

private:
    EmbedderConfig cfg_;
    torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
    torch::nn::Linear fc_{nullptr};
};

/// Three stride-2 conv blocks (pool map at H/8 x W/8 x 64) and a fully
/// connected head (128-vector). A structural stand-in for a pretrained face
/// recognition network; its features carry no identity-discrimination guarantee.
class ConvEmbedder final : public FeatureEmbedder {
public:
    ConvEmbedder(std::shared_ptr<EmbedderNetImpl> net, std::string origin);

    EmbedderFeatures embed(const torch::Tensor& images) const override;
    std::map<std::string, torch::Tensor> parameters() const override;
    std::string describe() const override { return origin_; }

    /// Casts the parameters, e.g. to double for finite-difference checks.
    void to(torch::Dtype dtype) { net_->to(dtype); }

    /// Writes the parameters under `embedder/`.
    void store(Checkpoint& ckpt) const;

private:
    std::shared_ptr<EmbedderNetImpl> net_;
    std::string origin_;
};

std::shared_ptr<ConvEmbedder> make_fixed_embedder(uint64_t seed, const EmbedderConfig& cfg = {});

/// Loads `embedder/...` tensors (plus optional `embedder` config metadata)
/// from a checkpoint archive.
std::shared_ptr<ConvEmbedder> load_embedder(const std::filesystem::path& path);

/// Parses "fixed:<seed>" or "file:<path>".
std::shared_ptr<ConvEmbedder> embedder_from_spec(const std::string& spec);

}  // namespace a3gan
