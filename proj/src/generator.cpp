#include "a3gan/generator.hpp"

#include <sstream>

#include "a3gan/errors.hpp"
#include "a3gan/random.hpp"

namespace a3gan {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

GeneratorConfig GeneratorConfig::paper(int64_t attr_dim) {
    GeneratorConfig c;
    c.image_size = 256;
    c.base_channels = 64;
    c.n_resblocks = 6;
    c.attr_dim = attr_dim;
    c.profile = Profile::Paper256;
    return c;
}

GeneratorConfig GeneratorConfig::desk(int64_t attr_dim) {
    GeneratorConfig c;
    c.image_size = 64;
    c.base_channels = 32;
    c.n_resblocks = 4;
    c.attr_dim = attr_dim;
    c.profile = Profile::Desk64;
    return c;
}

GeneratorConfig GeneratorConfig::for_profile(Profile p, int64_t attr_dim) {
    return p == Profile::Paper256 ? paper(attr_dim) : desk(attr_dim);
}

void GeneratorConfig::validate() const {
    if (image_size < 4 || image_size % 4 != 0) {
        throw ValidationError("generator: image_size must be a positive multiple of 4");
    }
    if (in_channels < 1) throw ValidationError("generator: in_channels must be >= 1");
    if (base_channels < 1) throw ValidationError("generator: base_channels must be >= 1");
    if (n_resblocks < 1) throw ValidationError("generator: n_resblocks must be >= 1");
    if (attr_dim < 0) throw ValidationError("generator: attr_dim must be >= 0");
}

void check_pixel_range(const torch::Tensor& images, const char* who) {
    auto [lo, hi] = torch::aminmax(images.detach());
    const double mn = lo.item<double>(), mx = hi.item<double>();
    if (mn < -1.0 - kPixelRangeSlack || mx > 1.0 + kPixelRangeSlack) {
        std::ostringstream os;
        os << who << ": pixel values must lie in [-1, 1], got [" << mn << ", " << mx << "]";
        throw ValidationError(os.str());
    }
}

torch::Tensor embed_attributes(const torch::Tensor& features, const torch::Tensor& alpha,
                               int64_t attr_dim) {
    const bool batched = features.dim() == 4;
    if (!batched && features.dim() != 3) {
        throw DimensionError("embed_attributes: features must be [B,c,h,w] or [c,h,w]");
    }
    auto a = alpha.dim() == 1 ? alpha.unsqueeze(0) : alpha;
    if (a.size(-1) != attr_dim) {
        throw ArgumentError("embed_attributes: attribute length " + std::to_string(a.size(-1)) +
                            " != attr_dim " + std::to_string(attr_dim));
    }
    if (attr_dim == 0) return features;
    auto f = batched ? features : features.unsqueeze(0);
    if (a.size(0) != f.size(0)) {
        throw DimensionError("embed_attributes: batch size mismatch between features and alpha");
    }
    auto planes = a.to(f.options()).view({a.size(0), attr_dim, 1, 1})
                      .expand({a.size(0), attr_dim, f.size(2), f.size(3)});
    auto out = torch::cat({f, planes}, 1);
    return batched ? out : out.squeeze(0);
}

torch::Tensor fuse(const torch::Tensor& input, const torch::Tensor& mask,
                   const torch::Tensor& image_map) {
    if (input.sizes() != image_map.sizes()) {
        throw DimensionError("fuse: input and image map shapes differ");
    }
    const auto d = input.dim();
    if (mask.dim() != d || mask.size(d - 3) != 1 || mask.size(d - 1) != input.size(d - 1) ||
        mask.size(d - 2) != input.size(d - 2) || (d == 4 && mask.size(0) != input.size(0))) {
        throw DimensionError("fuse: mask must be single-channel with the input's spatial size");
    }
    return mask * input + (1 - mask) * image_map;
}

ResidualBlockImpl::ResidualBlockImpl(int64_t channels) {
    auto conv = [&] { return nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).stride(1).padding(1)); };
    auto norm = [&] { return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(true)); };
    conv_a_ = register_module("conv_a", conv());
    norm_a_ = register_module("norm_a", norm());
    conv_b_ = register_module("conv_b", conv());
    norm_b_ = register_module("norm_b", norm());
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
    auto h = torch::relu(norm_a_(conv_a_(x)));
    return x + norm_b_(conv_b_(h));
}

GeneratorImpl::GeneratorImpl(GeneratorConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const auto c = cfg_.base_channels;
    auto norm = [](int64_t ch) { return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(ch).affine(true)); };

    conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(cfg_.in_channels, c, 7).stride(1).padding(3)));
    norm1_ = register_module("norm1", norm(c));
    conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(c, 2 * c, 4).stride(2).padding(1)));
    norm2_ = register_module("norm2", norm(2 * c));
    conv3_ = register_module("conv3", nn::Conv2d(nn::Conv2dOptions(2 * c, 4 * c, 4).stride(2).padding(1)));
    norm3_ = register_module("norm3", norm(4 * c));
    for (int64_t i = 0; i < cfg_.n_resblocks; ++i) {
        blocks_.push_back(register_module("resblock" + std::to_string(i + 1), ResidualBlock(4 * c)));
    }
    const auto bottleneck = 4 * c + cfg_.effective_attr_dim();
    up1_ = register_module("up1", nn::Conv2d(nn::Conv2dOptions(bottleneck, 2 * c, 3).stride(1).padding(1)));
    up2_ = register_module("up2", nn::Conv2d(nn::Conv2dOptions(2 * c, c, 3).stride(1).padding(1)));
    if (cfg_.use_attention) {
        mask_head_ = register_module("mask_head", nn::Conv2d(nn::Conv2dOptions(c, 1, 7).stride(1).padding(3)));
    }
    image_head_ = register_module("image_head",
                                  nn::Conv2d(nn::Conv2dOptions(c, cfg_.in_channels, 7).stride(1).padding(3)));
    reset_parameters(0);
}

void GeneratorImpl::reset_parameters(uint64_t seed) {
    torch::NoGradGuard no_grad;
    auto gen = make_torch_generator(seed);
    for (auto& m : modules(/*include_self=*/false)) {
        if (auto* conv = m->as<nn::Conv2d>()) {
            conv->weight.normal_(0.0, 0.02, gen);
            conv->bias.zero_();
        } else if (auto* in = m->as<nn::InstanceNorm2d>()) {
            in->weight.fill_(1.0);
            in->bias.zero_();
        }
    }
}

namespace {

torch::Tensor upsample2(const torch::Tensor& x) {
    return F::interpolate(x, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
}

}  // namespace

GeneratorOutput GeneratorImpl::forward(const torch::Tensor& input, const torch::Tensor& alpha,
                                       ShapeTrace* trace) {
    const bool batched = input.dim() == 4;
    auto x = batched ? input : input.unsqueeze(0);
    if (x.dim() != 4 || x.size(1) != cfg_.in_channels || x.size(2) != cfg_.image_size ||
        x.size(3) != cfg_.image_size) {
        std::ostringstream os;
        os << "generator: expected input [B," << cfg_.in_channels << "," << cfg_.image_size << ","
           << cfg_.image_size << "], got " << input.sizes();
        throw DimensionError(os.str());
    }
    check_pixel_range(x, "generator");
    auto a = alpha.dim() == 1 ? alpha.unsqueeze(0) : alpha;
    if (a.size(-1) != cfg_.attr_dim) {
        throw ArgumentError("generator: attribute length " + std::to_string(a.size(-1)) +
                            " != attr_dim " + std::to_string(cfg_.attr_dim));
    }
    if (a.size(0) == 1 && x.size(0) > 1) a = a.expand({x.size(0), cfg_.attr_dim});

    auto record = [&](const char* name, const torch::Tensor& t) {
        if (trace) trace->emplace_back(name, t.sizes().vec());
    };

    auto h = torch::relu(norm1_(conv1_(x)));
    record("conv1", h);
    h = torch::relu(norm2_(conv2_(h)));
    record("conv2", h);
    h = torch::relu(norm3_(conv3_(h)));
    record("conv3", h);
    for (size_t i = 0; i < blocks_.size(); ++i) {
        h = blocks_[i](h);
        if (trace) trace->emplace_back("resblock" + std::to_string(i + 1), h.sizes().vec());
    }
    if (cfg_.embed_attributes) {
        h = embed_attributes(h, a, cfg_.attr_dim);
        record("embed", h);
    }
    h = torch::relu(up1_(upsample2(h)));
    record("up1", h);
    h = torch::relu(up2_(upsample2(h)));
    record("up2", h);

    GeneratorOutput out;
    out.image_map = torch::tanh(image_head_(h));
    record("image_map", out.image_map);
    if (cfg_.use_attention) {
        out.mask = torch::sigmoid(mask_head_(h));
        record("mask", out.mask);
        out.output = fuse(x, out.mask, out.image_map);
    } else {
        out.output = out.image_map;
    }
    record("output", out.output);

    if (!batched) {
        out.output = out.output.squeeze(0);
        out.image_map = out.image_map.squeeze(0);
        if (out.mask.defined()) out.mask = out.mask.squeeze(0);
    }
    return out;
}

}  // namespace a3gan
