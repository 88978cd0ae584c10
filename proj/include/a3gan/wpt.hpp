#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

namespace a3gan::wpt {

/// Two-channel orthonormal analysis filter bank.
struct FilterPair {
    std::vector<double> low;
    std::vector<double> high;
    std::string name;
};

/// Orthonormal Haar pair: low = (1, 1)/sqrt2, high = (1, -1)/sqrt2.
FilterPair haar();
/// Four-tap Daubechies pair ("db2").
FilterPair daubechies4();
/// Looks a shipped filter up by name ("haar", "db2"); throws ArgumentError otherwise.
FilterPair filter_by_name(std::string_view name);
std::vector<std::string> filter_names();

struct Subbands {
    torch::Tensor ll;
    torch::Tensor lh;  // high-pass along width (horizontal detail)
    torch::Tensor hl;  // high-pass along height
    torch::Tensor hh;
};

/// One separable filter-and-decimate step on a single-channel [H, W] array
/// with periodic boundaries.
Subbands wpt_step(const torch::Tensor& x, const FilterPair& filters);

/// One packet level applied to every channel of a [C, H, W] or [B, C, H, W]
/// array. Output channel 4*c + b holds subband b (LL, LH, HL, HH) of input
/// channel c. Differentiable.
torch::Tensor analysis_level(const torch::Tensor& x, const FilterPair& filters);

/// Adjoint of analysis_level; the exact inverse for orthonormal filters.
torch::Tensor synthesis_level(const torch::Tensor& coeffs, const FilterPair& filters);

/// Full packet tree. Level k is a [4^k C, H/2^k, W/2^k] array (a leading
/// batch axis is carried through when present); level 0 is the source.
struct WptPyramid {
    std::vector<torch::Tensor> levels;
    std::array<int64_t, 3> source_shape{};  // (H, W, C)
    std::string filter_name;

    int depth() const { return static_cast<int>(levels.size()) - 1; }
    /// (H, W, C) of level k.
    std::array<int64_t, 3> level_shape(int k) const;
};

WptPyramid wpt_decompose(const torch::Tensor& image, int levels, const FilterPair& filters);

/// Rebuilds the source from the deepest level only.
torch::Tensor wpt_reconstruct(const WptPyramid& pyramid, const FilterPair& filters);

/// Sum of squared coefficients per level.
std::vector<double> level_energies(const WptPyramid& pyramid);

}  // namespace a3gan::wpt
