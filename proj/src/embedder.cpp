#include "a3gan/embedder.hpp"

#include <cmath>

#include "a3gan/errors.hpp"
#include "a3gan/random.hpp"

namespace a3gan {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

nlohmann::json config_to_json(const EmbedderConfig& c) {
    return {{"in_channels", c.in_channels}, {"channels1", c.channels1},
            {"channels2", c.channels2},     {"pool_channels", c.pool_channels},
            {"fc_dim", c.fc_dim},           {"head_grid", c.head_grid}};
}

EmbedderConfig config_from_json(const nlohmann::json& j) {
    EmbedderConfig c;
    c.in_channels = j.value("in_channels", c.in_channels);
    c.channels1 = j.value("channels1", c.channels1);
    c.channels2 = j.value("channels2", c.channels2);
    c.pool_channels = j.value("pool_channels", c.pool_channels);
    c.fc_dim = j.value("fc_dim", c.fc_dim);
    c.head_grid = j.value("head_grid", c.head_grid);
    return c;
}

void freeze(EmbedderNetImpl& net) {
    for (auto& p : net.parameters()) p.set_requires_grad(false);
    net.eval();
}

}  // namespace

EmbedderNetImpl::EmbedderNetImpl(const EmbedderConfig& cfg) : cfg_(cfg) {
    auto down = [](int64_t in, int64_t out) {
        return nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1));
    };
    conv1_ = register_module("conv1", down(cfg.in_channels, cfg.channels1));
    conv2_ = register_module("conv2", down(cfg.channels1, cfg.channels2));
    conv3_ = register_module("conv3", down(cfg.channels2, cfg.pool_channels));
    fc_ = register_module("fc", nn::Linear(cfg.pool_channels * cfg.head_grid * cfg.head_grid, cfg.fc_dim));
}

EmbedderFeatures EmbedderNetImpl::forward(const torch::Tensor& x) {
    auto h = torch::leaky_relu(conv1_(x), 0.2);
    h = torch::leaky_relu(conv2_(h), 0.2);
    auto pool = torch::leaky_relu(conv3_(h), 0.2);
    auto grid = F::adaptive_avg_pool2d(pool, F::AdaptiveAvgPool2dFuncOptions({cfg_.head_grid, cfg_.head_grid}));
    return {pool, fc_(grid.flatten(1))};
}

ConvEmbedder::ConvEmbedder(std::shared_ptr<EmbedderNetImpl> net, std::string origin)
    : net_(std::move(net)), origin_(std::move(origin)) {
    freeze(*net_);
}

EmbedderFeatures ConvEmbedder::embed(const torch::Tensor& images) const {
    auto x = images.dim() == 3 ? images.unsqueeze(0) : images;
    if (x.dim() != 4) throw DimensionError("embedder: expected [B,3,H,W] images");
    if (x.size(2) % 8 != 0 || x.size(3) % 8 != 0) {
        throw DimensionError("embedder: image sides must be multiples of 8");
    }
    const auto want = net_->parameters().front().scalar_type();
    if (x.scalar_type() != want) x = x.to(want);
    return net_->forward(x);
}

std::map<std::string, torch::Tensor> ConvEmbedder::parameters() const {
    std::map<std::string, torch::Tensor> out;
    for (const auto& item : net_->named_parameters(true)) out[item.key()] = item.value().detach().clone();
    return out;
}

void ConvEmbedder::store(Checkpoint& ckpt) const {
    store_module(ckpt, "embedder", *net_);
    ckpt.metadata["embedder"] = {{"origin", origin_}, {"config", config_to_json(net_->config())}};
}

std::shared_ptr<ConvEmbedder> make_fixed_embedder(uint64_t seed, const EmbedderConfig& cfg) {
    auto net = std::make_shared<EmbedderNetImpl>(cfg);
    {
        torch::NoGradGuard no_grad;
        auto gen = make_torch_generator(derive_seed(seed, /*stream=*/0xE3BED));
        for (auto& m : net->modules(false)) {
            if (auto* conv = m->as<nn::Conv2d>()) {
                const double fan_in = static_cast<double>(conv->weight[0].numel());
                conv->weight.normal_(0.0, std::sqrt(2.0 / fan_in), gen);
                conv->bias.zero_();
            } else if (auto* lin = m->as<nn::Linear>()) {
                lin->weight.normal_(0.0, 1.0 / std::sqrt(static_cast<double>(lin->weight.size(1))), gen);
                lin->bias.zero_();
            }
        }
    }
    return std::make_shared<ConvEmbedder>(std::move(net), "fixed:" + std::to_string(seed));
}

std::shared_ptr<ConvEmbedder> load_embedder(const std::filesystem::path& path) {
    auto ckpt = load_checkpoint(path);
    EmbedderConfig cfg;
    if (ckpt.metadata.contains("embedder") && ckpt.metadata["embedder"].contains("config")) {
        cfg = config_from_json(ckpt.metadata["embedder"]["config"]);
    }
    auto net = std::make_shared<EmbedderNetImpl>(cfg);
    restore_module(ckpt, "embedder", *net);
    return std::make_shared<ConvEmbedder>(std::move(net), "file:" + path.string());
}

std::shared_ptr<ConvEmbedder> embedder_from_spec(const std::string& spec) {
    if (spec.rfind("fixed:", 0) == 0) {
        const auto rest = spec.substr(6);
        try {
            size_t used = 0;
            const auto seed = std::stoull(rest, &used);
            if (used != rest.size()) throw std::invalid_argument(rest);
            return make_fixed_embedder(seed);
        } catch (const std::logic_error&) {
            throw ArgumentError("embedder: bad seed in '" + spec + "'");
        }
    }
    if (spec.rfind("file:", 0) == 0) return load_embedder(spec.substr(5));
    throw ArgumentError("embedder: expected fixed:<seed> or file:<path>, got '" + spec + "'");
}

}  // namespace a3gan
