#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "a3gan/profile.hpp"

namespace a3gan {

struct GeneratorConfig {
    int64_t image_size = 64;
    int64_t in_channels = 3;
    int64_t base_channels = 32;
    int64_t n_resblocks = 4;
    int64_t attr_dim = 2;
    /// false: the attribute vector is accepted but never concatenated.
    bool embed_attributes = true;
    /// false: no mask head; the image map is returned directly as the output.
    bool use_attention = true;
    Profile profile = Profile::Desk64;

    static GeneratorConfig paper(int64_t attr_dim = 2);
    static GeneratorConfig desk(int64_t attr_dim = 2);
    static GeneratorConfig for_profile(Profile p, int64_t attr_dim = 2);

    int64_t effective_attr_dim() const { return embed_attributes ? attr_dim : 0; }
    void validate() const;
};

/// Triple produced by one generator pass. `mask` is undefined when the
/// generator runs without attention.
struct GeneratorOutput {
    torch::Tensor output;     // I_o, [B, 3, H, W]
    torch::Tensor mask;       // M_A, [B, 1, H, W] in [0, 1]
    torch::Tensor image_map;  // M_I, [B, 3, H, W] in [-1, 1]
};

/// (layer name, NCHW shape) pairs recorded during a forward pass.
using ShapeTrace = std::vector<std::pair<std::string, std::vector<int64_t>>>;

/// Replicates alpha over the spatial grid and appends it to the channel axis.
/// features: [B, c, h, w] (or [c, h, w]); alpha: [B, N] (or [N]).
torch::Tensor embed_attributes(const torch::Tensor& features, const torch::Tensor& alpha,
                               int64_t attr_dim);

/// I_o = M_A * I_y + (1 - M_A) * M_I with a single-channel mask broadcast
/// over the colour channels.
torch::Tensor fuse(const torch::Tensor& input, const torch::Tensor& mask,
                   const torch::Tensor& image_map);

class ResidualBlockImpl : public torch::nn::Module {
public:
    explicit ResidualBlockImpl(int64_t channels);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Conv2d conv_a_{nullptr}, conv_b_{nullptr};
    torch::nn::InstanceNorm2d norm_a_{nullptr}, norm_b_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Hourglass generator: 3-conv encoder, residual bottleneck, attribute
/// embedding, two upsample+conv stages, and mask/image heads fused with the
/// input.
class GeneratorImpl : public torch::nn::Module {
public:
    explicit GeneratorImpl(GeneratorConfig cfg);

    /// input: [B, 3, S, S] or [3, S, S] in [-1, 1]; alpha: [B, N] or [N].
    GeneratorOutput forward(const torch::Tensor& input, const torch::Tensor& alpha,
                            ShapeTrace* trace = nullptr);

    const GeneratorConfig& config() const { return cfg_; }
    /// Gaussian(0, 0.02) conv kernels, zero biases, unit/zero norm affines.
    void reset_parameters(uint64_t seed);

    torch::nn::Conv2d& mask_head() { return mask_head_; }

private:
    GeneratorConfig cfg_;
    torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
    torch::nn::InstanceNorm2d norm1_{nullptr}, norm2_{nullptr}, norm3_{nullptr};
    std::vector<ResidualBlock> blocks_;
    torch::nn::Conv2d up1_{nullptr}, up2_{nullptr};
    torch::nn::Conv2d mask_head_{nullptr}, image_head_{nullptr};
};
TORCH_MODULE(Generator);

/// Pixel range accepted by the generator and critic.
inline constexpr double kPixelRangeSlack = 1e-3;
void check_pixel_range(const torch::Tensor& images, const char* who);

}  // namespace a3gan
