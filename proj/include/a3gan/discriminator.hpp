#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "a3gan/generator.hpp"
#include "a3gan/profile.hpp"
#include "a3gan/wpt.hpp"

namespace a3gan {

/// Wavelet multi-pathway critic configuration.
///
/// Pathway k (k = 0, 1, 2) consumes WPT level k, i.e. a [4^k C, S/2^k, S/2^k]
/// stack. Its layers are the tail (3 - k entries) of the pre-concat schedule
/// {c, 2c, 4c}, then the attribute concat, then `n_post_layers` convs of 8c
/// channels, then a 1-channel conv. Every conv is kernel 4 / stride 2 / pad 1,
/// so each pathway ends at S / 2^(4 + n_post_layers) pixels square.
struct DiscriminatorConfig {
    int64_t image_size = 64;
    int64_t in_channels = 3;
    int64_t attr_dim = 2;
    int64_t base_channels = 32;
    int64_t n_post_layers = 0;
    /// false: a single level-0 pathway (plain patch critic).
    bool multi_pathway = true;
    /// false: the attribute vector is never concatenated.
    bool use_attributes = true;
    std::string filter = "haar";
    Profile profile = Profile::Desk64;

    static DiscriminatorConfig paper(int64_t attr_dim = 2);
    static DiscriminatorConfig desk(int64_t attr_dim = 2);
    static DiscriminatorConfig for_profile(Profile p, int64_t attr_dim = 2);
    /// Desk channel widths at an arbitrary power-of-two size; keeps the fused
    /// map at 4x4 when image_size >= 64.
    static DiscriminatorConfig desk_at(int64_t image_size, int64_t attr_dim = 2);

    int n_pathways() const { return multi_pathway ? 3 : 1; }
    int64_t output_size() const;
    int64_t effective_attr_dim() const { return use_attributes ? attr_dim : 0; }
    void validate() const;
};

class PathwayImpl : public torch::nn::Module {
public:
    PathwayImpl(int level, const DiscriminatorConfig& cfg);
    /// coeffs: [B, 4^k C, h, w]; alpha: [B, N]. Returns [B, 1, s, s].
    torch::Tensor forward(const torch::Tensor& coeffs, const torch::Tensor& alpha,
                          ShapeTrace* trace = nullptr);
    int level() const { return level_; }

private:
    int level_;
    int64_t attr_dim_;
    int64_t in_channels_;
    int64_t in_size_;
    std::vector<torch::nn::Conv2d> pre_, post_;
    torch::nn::Conv2d out_{nullptr};
};
TORCH_MODULE(Pathway);

/// Unbounded critic D(I, alpha): WPT levels 0..2 through separate conv
/// pathways, fused by one fully connected layer.
class DiscriminatorImpl : public torch::nn::Module {
public:
    explicit DiscriminatorImpl(DiscriminatorConfig cfg);

    /// images: [B, C, S, S] (or [C, S, S]); alpha: [B, N] (or [N]). Returns [B].
    torch::Tensor forward(const torch::Tensor& images, const torch::Tensor& alpha,
                          ShapeTrace* trace = nullptr);

    /// Runs pathway `k` alone on its WPT level.
    torch::Tensor pathway_forward(int k, const torch::Tensor& coeffs, const torch::Tensor& alpha);

    const DiscriminatorConfig& config() const { return cfg_; }
    void reset_parameters(uint64_t seed);

private:
    DiscriminatorConfig cfg_;
    wpt::FilterPair filters_;
    std::vector<Pathway> pathways_;
    torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(Discriminator);

}  // namespace a3gan
