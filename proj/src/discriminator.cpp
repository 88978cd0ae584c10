#include "a3gan/discriminator.hpp"

#include <sstream>

#include "a3gan/errors.hpp"
#include "a3gan/random.hpp"

namespace a3gan {

namespace nn = torch::nn;

namespace {

bool is_power_of_two(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

int log2_exact(int64_t v) {
    int k = 0;
    while ((int64_t{1} << k) < v) ++k;
    return k;
}

nn::Conv2d down_conv(int64_t in, int64_t out) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1));
}

constexpr double kLeakySlope = 0.2;

}  // namespace

DiscriminatorConfig DiscriminatorConfig::paper(int64_t attr_dim) {
    DiscriminatorConfig c;
    c.image_size = 256;
    c.attr_dim = attr_dim;
    c.base_channels = 64;
    c.n_post_layers = 2;
    c.profile = Profile::Paper256;
    return c;
}

DiscriminatorConfig DiscriminatorConfig::desk(int64_t attr_dim) { return desk_at(64, attr_dim); }

DiscriminatorConfig DiscriminatorConfig::desk_at(int64_t image_size, int64_t attr_dim) {
    DiscriminatorConfig c;
    c.image_size = image_size;
    c.attr_dim = attr_dim;
    c.base_channels = 32;
    c.n_post_layers = std::max(0, log2_exact(std::max<int64_t>(image_size, 1)) - 6);
    c.profile = Profile::Desk64;
    return c;
}

DiscriminatorConfig DiscriminatorConfig::for_profile(Profile p, int64_t attr_dim) {
    return p == Profile::Paper256 ? paper(attr_dim) : desk(attr_dim);
}

int64_t DiscriminatorConfig::output_size() const { return image_size >> (4 + n_post_layers); }

void DiscriminatorConfig::validate() const {
    if (!is_power_of_two(image_size)) {
        throw ValidationError("discriminator: image_size must be a power of two");
    }
    if (n_post_layers < 0) throw ValidationError("discriminator: n_post_layers must be >= 0");
    if (log2_exact(image_size) < 4 + n_post_layers) {
        throw ValidationError("discriminator: image_size " + std::to_string(image_size) +
                              " too small for " + std::to_string(n_post_layers) + " post layers");
    }
    if (attr_dim < 0) throw ValidationError("discriminator: attr_dim must be >= 0");
    if (base_channels < 1) throw ValidationError("discriminator: base_channels must be >= 1");
    wpt::filter_by_name(filter);
}

PathwayImpl::PathwayImpl(int level, const DiscriminatorConfig& cfg)
    : level_(level),
      attr_dim_(cfg.effective_attr_dim()),
      in_channels_(cfg.in_channels << (2 * level)),
      in_size_(cfg.image_size >> level) {
    const auto c = cfg.base_channels;
    const std::vector<int64_t> schedule{c, 2 * c, 4 * c};
    int64_t ch = in_channels_;
    for (size_t i = static_cast<size_t>(level); i < schedule.size(); ++i) {
        pre_.push_back(register_module("conv" + std::to_string(pre_.size() + 1), down_conv(ch, schedule[i])));
        ch = schedule[i];
    }
    ch += attr_dim_;
    for (int64_t i = 0; i < cfg.n_post_layers; ++i) {
        post_.push_back(register_module("post" + std::to_string(i + 1), down_conv(ch, 8 * c)));
        ch = 8 * c;
    }
    out_ = register_module("out", down_conv(ch, 1));
}

torch::Tensor PathwayImpl::forward(const torch::Tensor& coeffs, const torch::Tensor& alpha,
                                   ShapeTrace* trace) {
    if (coeffs.dim() != 4 || coeffs.size(1) != in_channels_ || coeffs.size(2) != in_size_ ||
        coeffs.size(3) != in_size_) {
        std::ostringstream os;
        os << "pathway " << level_ + 1 << ": expected [B," << in_channels_ << "," << in_size_ << ","
           << in_size_ << "], got " << coeffs.sizes();
        throw DimensionError(os.str());
    }
    const std::string tag = "pathway" + std::to_string(level_ + 1) + "/";
    auto record = [&](const std::string& name, const torch::Tensor& t) {
        if (trace) trace->emplace_back(tag + name, t.sizes().vec());
    };
    record("input", coeffs);
    auto h = coeffs;
    for (size_t i = 0; i < pre_.size(); ++i) {
        h = torch::leaky_relu(pre_[i](h), kLeakySlope);
        record("conv" + std::to_string(i + 1), h);
    }
    if (attr_dim_ > 0) {
        h = embed_attributes(h, alpha, attr_dim_);
        record("concat", h);
    }
    for (size_t i = 0; i < post_.size(); ++i) {
        h = torch::leaky_relu(post_[i](h), kLeakySlope);
        record("post" + std::to_string(i + 1), h);
    }
    h = out_(h);
    record("out", h);
    return h;
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig cfg)
    : cfg_(std::move(cfg)), filters_(wpt::filter_by_name(cfg_.filter)) {
    cfg_.validate();
    for (int k = 0; k < cfg_.n_pathways(); ++k) {
        pathways_.push_back(register_module("pathway" + std::to_string(k + 1), Pathway(k, cfg_)));
    }
    const auto s = cfg_.output_size();
    fc_ = register_module("fc", nn::Linear(cfg_.n_pathways() * s * s, 1));
    reset_parameters(0);
}

void DiscriminatorImpl::reset_parameters(uint64_t seed) {
    torch::NoGradGuard no_grad;
    auto gen = make_torch_generator(seed);
    for (auto& m : modules(false)) {
        if (auto* conv = m->as<nn::Conv2d>()) {
            conv->weight.normal_(0.0, 0.02, gen);
            conv->bias.zero_();
        } else if (auto* lin = m->as<nn::Linear>()) {
            lin->weight.normal_(0.0, 0.02, gen);
            lin->bias.zero_();
        }
    }
}

torch::Tensor DiscriminatorImpl::pathway_forward(int k, const torch::Tensor& coeffs,
                                                 const torch::Tensor& alpha) {
    if (k < 0 || k >= cfg_.n_pathways()) throw ArgumentError("discriminator: no pathway " + std::to_string(k));
    auto a = alpha.dim() == 1 ? alpha.unsqueeze(0) : alpha;
    if (a.size(-1) != cfg_.attr_dim) {
        throw ArgumentError("discriminator: attribute length mismatch");
    }
    auto c = coeffs.dim() == 3 ? coeffs.unsqueeze(0) : coeffs;
    if (a.size(0) == 1 && c.size(0) > 1) a = a.expand({c.size(0), a.size(1)});
    return pathways_[static_cast<size_t>(k)](c, a);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& images, const torch::Tensor& alpha,
                                         ShapeTrace* trace) {
    auto x = images.dim() == 3 ? images.unsqueeze(0) : images;
    if (x.dim() != 4 || x.size(1) != cfg_.in_channels || x.size(2) != cfg_.image_size ||
        x.size(3) != cfg_.image_size) {
        std::ostringstream os;
        os << "discriminator: expected [B," << cfg_.in_channels << "," << cfg_.image_size << ","
           << cfg_.image_size << "], got " << images.sizes();
        throw DimensionError(os.str());
    }
    auto a = alpha.dim() == 1 ? alpha.unsqueeze(0) : alpha;
    if (a.size(-1) != cfg_.attr_dim) {
        throw ArgumentError("discriminator: attribute length " + std::to_string(a.size(-1)) +
                            " != attr_dim " + std::to_string(cfg_.attr_dim));
    }
    if (a.size(0) == 1 && x.size(0) > 1) a = a.expand({x.size(0), cfg_.attr_dim});
    a = a.to(x.options());

    auto pyramid = wpt::wpt_decompose(x, cfg_.n_pathways() - 1, filters_);
    std::vector<torch::Tensor> outs;
    for (int k = 0; k < cfg_.n_pathways(); ++k) {
        outs.push_back(pathways_[static_cast<size_t>(k)](pyramid.levels[static_cast<size_t>(k)], a, trace));
    }
    auto fused = torch::cat(outs, 1);
    if (trace) trace->emplace_back("fused", fused.sizes().vec());
    auto score = fc_(fused.flatten(1)).squeeze(1);
    if (trace) trace->emplace_back("score", score.sizes().vec());
    return score;
}

}  // namespace a3gan
