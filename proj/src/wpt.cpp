#include "a3gan/wpt.hpp"

#include <cmath>

#include "a3gan/errors.hpp"

namespace a3gan::wpt {

namespace F = torch::nn::functional;

FilterPair haar() {
    const double s = 1.0 / std::sqrt(2.0);
    return {{s, s}, {s, -s}, "haar"};
}

FilterPair daubechies4() {
    const double r3 = std::sqrt(3.0);
    const double d = 4.0 * std::sqrt(2.0);
    std::vector<double> low{(1 + r3) / d, (3 + r3) / d, (3 - r3) / d, (1 - r3) / d};
    // Quadrature mirror: high[i] = (-1)^i low[L-1-i].
    std::vector<double> high(low.size());
    for (size_t i = 0; i < low.size(); ++i) {
        high[i] = ((i % 2 == 0) ? 1.0 : -1.0) * low[low.size() - 1 - i];
    }
    return {std::move(low), std::move(high), "db2"};
}

FilterPair filter_by_name(std::string_view name) {
    if (name == "haar") return haar();
    if (name == "db2") return daubechies4();
    throw ArgumentError("unknown wavelet filter '" + std::string(name) + "'");
}

std::vector<std::string> filter_names() { return {"haar", "db2"}; }

namespace {

// [4, 1, L, L] kernels in (LL, LH, HL, HH) order; rows filter the height axis.
torch::Tensor subband_kernels(const FilterPair& f, const torch::TensorOptions& opts) {
    const auto len = static_cast<int64_t>(f.low.size());
    if (len == 0 || len % 2 != 0 || f.high.size() != f.low.size()) {
        throw ConfigurationError("filter '" + f.name + "' must have equal, even-length taps");
    }
    auto k = torch::empty({4, 1, len, len}, torch::TensorOptions().dtype(torch::kFloat64));
    auto acc = k.accessor<double, 4>();
    const std::array<const std::vector<double>*, 4> rows{&f.low, &f.low, &f.high, &f.high};
    const std::array<const std::vector<double>*, 4> cols{&f.low, &f.high, &f.low, &f.high};
    for (int b = 0; b < 4; ++b) {
        for (int64_t m = 0; m < len; ++m) {
            for (int64_t n = 0; n < len; ++n) {
                acc[b][0][m][n] = (*rows[b])[m] * (*cols[b])[n];
            }
        }
    }
    return k.to(opts);
}

void check_even(int64_t h, int64_t w) {
    if (h % 2 != 0) throw DimensionError("wpt: height " + std::to_string(h) + " is odd");
    if (w % 2 != 0) throw DimensionError("wpt: width " + std::to_string(w) + " is odd");
}

}  // namespace

torch::Tensor analysis_level(const torch::Tensor& x, const FilterPair& filters) {
    if (x.dim() != 3 && x.dim() != 4) {
        throw DimensionError("wpt: expected [C,H,W] or [B,C,H,W], got " +
                             std::to_string(x.dim()) + " dims");
    }
    const bool batched = x.dim() == 4;
    auto xb = batched ? x : x.unsqueeze(0);
    const auto n = xb.size(0), c = xb.size(1), h = xb.size(2), w = xb.size(3);
    check_even(h, w);

    const auto len = static_cast<int64_t>(filters.low.size());
    auto flat = xb.reshape({n * c, 1, h, w});
    if (len > 2) {
        flat = F::pad(flat, F::PadFuncOptions({0, len - 2, 0, len - 2}).mode(torch::kCircular));
    }
    auto kernels = subband_kernels(filters, xb.options());
    auto out = F::conv2d(flat, kernels, F::Conv2dFuncOptions().stride(2));
    out = out.reshape({n, c * 4, h / 2, w / 2});
    return batched ? out : out.squeeze(0);
}

torch::Tensor synthesis_level(const torch::Tensor& coeffs, const FilterPair& filters) {
    if (coeffs.dim() != 3 && coeffs.dim() != 4) {
        throw DimensionError("wpt: expected [C,H,W] or [B,C,H,W] coefficients");
    }
    const bool batched = coeffs.dim() == 4;
    auto yb = batched ? coeffs : coeffs.unsqueeze(0);
    const auto n = yb.size(0), c4 = yb.size(1), h = yb.size(2), w = yb.size(3);
    if (c4 % 4 != 0) throw DimensionError("wpt: coefficient channels not a multiple of 4");
    const auto c = c4 / 4;
    const auto len = static_cast<int64_t>(filters.low.size());

    auto kernels = subband_kernels(filters, yb.options());
    auto up = F::conv_transpose2d(yb.reshape({n * c, 4, h, w}), kernels,
                                  F::ConvTranspose2dFuncOptions().stride(2));
    // Fold the overhang of the transposed convolution back (periodic boundary).
    const auto H = 2 * h, W = 2 * w;
    auto out = up.narrow(2, 0, H).narrow(3, 0, W).clone();
    if (len > 2) {
        const auto extra = len - 2;
        out.narrow(2, 0, extra).add_(up.narrow(2, H, extra).narrow(3, 0, W));
        out.narrow(3, 0, extra).add_(up.narrow(2, 0, H).narrow(3, W, extra));
        out.narrow(2, 0, extra).narrow(3, 0, extra).add_(up.narrow(2, H, extra).narrow(3, W, extra));
    }
    out = out.reshape({n, c, H, W});
    return batched ? out : out.squeeze(0);
}

Subbands wpt_step(const torch::Tensor& x, const FilterPair& filters) {
    if (x.dim() != 2) throw DimensionError("wpt_step: expected a 2-D array");
    check_even(x.size(0), x.size(1));
    auto bands = analysis_level(x.unsqueeze(0), filters);
    return {bands[0], bands[1], bands[2], bands[3]};
}

std::array<int64_t, 3> WptPyramid::level_shape(int k) const {
    const auto& t = levels.at(static_cast<size_t>(k));
    const auto d = t.dim();
    return {t.size(d - 2), t.size(d - 1), t.size(d - 3)};
}

WptPyramid wpt_decompose(const torch::Tensor& image, int levels, const FilterPair& filters) {
    if (levels < 0) throw ArgumentError("wpt_decompose: levels must be >= 0");
    if (image.dim() != 3 && image.dim() != 4) {
        throw DimensionError("wpt_decompose: expected [C,H,W] or [B,C,H,W]");
    }
    const auto d = image.dim();
    const auto h = image.size(d - 2), w = image.size(d - 1), c = image.size(d - 3);
    const int64_t div = int64_t{1} << levels;
    if (h % div != 0) {
        throw DimensionError("wpt_decompose: height " + std::to_string(h) +
                             " not divisible by 2^" + std::to_string(levels));
    }
    if (w % div != 0) {
        throw DimensionError("wpt_decompose: width " + std::to_string(w) +
                             " not divisible by 2^" + std::to_string(levels));
    }
    WptPyramid p;
    p.source_shape = {h, w, c};
    p.filter_name = filters.name;
    p.levels.push_back(image);
    for (int k = 0; k < levels; ++k) {
        p.levels.push_back(analysis_level(p.levels.back(), filters));
    }
    return p;
}

torch::Tensor wpt_reconstruct(const WptPyramid& pyramid, const FilterPair& filters) {
    if (pyramid.filter_name != filters.name) {
        throw ConfigurationError("wpt_reconstruct: pyramid built with '" + pyramid.filter_name +
                                 "' but '" + filters.name + "' supplied");
    }
    if (pyramid.levels.empty()) throw ArgumentError("wpt_reconstruct: empty pyramid");
    auto x = pyramid.levels.back();
    for (int k = pyramid.depth(); k > 0; --k) x = synthesis_level(x, filters);
    return x;
}

std::vector<double> level_energies(const WptPyramid& pyramid) {
    std::vector<double> e;
    e.reserve(pyramid.levels.size());
    for (const auto& l : pyramid.levels) {
        e.push_back(l.to(torch::kFloat64).square().sum().item<double>());
    }
    return e;
}

}  // namespace a3gan::wpt
