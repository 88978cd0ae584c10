#include "doctest.h"

#include <torch/torch.h>

#include "a3gan/errors.hpp"
#include "a3gan/generator.hpp"
#include "a3gan/random.hpp"

using namespace a3gan;

namespace {

torch::Tensor uniform_images(std::vector<int64_t> shape, uint64_t seed) {
    auto gen = make_torch_generator(seed);
    return torch::rand(shape, gen, torch::kFloat32) * 2 - 1;
}

GeneratorConfig tiny(int64_t size = 16) {
    auto c = GeneratorConfig::desk(2);
    c.image_size = size;
    c.base_channels = 4;
    c.n_resblocks = 1;
    return c;
}

}  // namespace

TEST_CASE("embed_attributes appends constant planes") {
    auto feats = torch::randn({1, 256, 64, 64});
    auto alpha = torch::tensor({1.0f, 0.0f}).reshape({1, 2});
    auto out = embed_attributes(feats, alpha, 2);
    CHECK(out.sizes().vec() == std::vector<int64_t>{1, 258, 64, 64});
    CHECK(torch::equal(out.slice(1, 0, 256), feats));
    CHECK(torch::equal(out[0][256], torch::ones({64, 64})));
    CHECK(torch::equal(out[0][257], torch::zeros({64, 64})));
}

TEST_CASE("embed_attributes with no attributes is the identity") {
    auto feats = torch::randn({2, 8, 4, 4});
    CHECK(torch::equal(embed_attributes(feats, torch::zeros({2, 0}), 0), feats));
}

TEST_CASE("embed_attributes rejects a length mismatch") {
    CHECK_THROWS_AS(embed_attributes(torch::zeros({1, 8, 4, 4}), torch::zeros({1, 3}), 2), ArgumentError);
}

TEST_CASE("fuse corner cases") {
    auto input = uniform_images({2, 3, 8, 8}, 1);
    auto map = uniform_images({2, 3, 8, 8}, 2);
    CHECK(torch::equal(fuse(input, torch::ones({2, 1, 8, 8}), map), input));
    CHECK(torch::equal(fuse(input, torch::zeros({2, 1, 8, 8}), map), map));
    auto half = fuse(torch::full({1, 3, 4, 4}, 0.2), torch::full({1, 1, 4, 4}, 0.5), torch::full({1, 3, 4, 4}, 0.8));
    CHECK((half - 0.5).abs().max().item<float>() < 1e-7f);
    CHECK_THROWS_AS(fuse(input, torch::ones({2, 1, 4, 4}), map), DimensionError);
}

TEST_CASE("full-size shape walk") {
    Generator g(GeneratorConfig::paper(2));
    ShapeTrace trace;
    torch::NoGradGuard no_grad;
    g->forward(torch::zeros({1, 3, 256, 256}), torch::zeros({1, 2}), &trace);

    std::map<std::string, std::vector<int64_t>> got(trace.begin(), trace.end());
    CHECK(got["conv1"] == std::vector<int64_t>{1, 64, 256, 256});
    CHECK(got["conv2"] == std::vector<int64_t>{1, 128, 128, 128});
    CHECK(got["conv3"] == std::vector<int64_t>{1, 256, 64, 64});
    for (int i = 1; i <= 6; ++i) CHECK(got["resblock" + std::to_string(i)] == std::vector<int64_t>{1, 256, 64, 64});
    CHECK(got.count("resblock7") == 0);
    CHECK(got["embed"] == std::vector<int64_t>{1, 258, 64, 64});
    CHECK(got["up1"] == std::vector<int64_t>{1, 128, 128, 128});
    CHECK(got["up2"] == std::vector<int64_t>{1, 64, 256, 256});
    CHECK(got["mask"] == std::vector<int64_t>{1, 1, 256, 256});
    CHECK(got["image_map"] == std::vector<int64_t>{1, 3, 256, 256});
    CHECK(got["output"] == std::vector<int64_t>{1, 3, 256, 256});
}

TEST_CASE("output ranges and shape preservation") {
    Generator g(GeneratorConfig::desk(2));
    g->reset_parameters(3);
    auto x = uniform_images({2, 3, 64, 64}, 4);
    auto out = g->forward(x, torch::tensor({0.0f, 1.0f, 1.0f, 1.0f}).reshape({2, 2}));
    CHECK(out.output.sizes() == x.sizes());
    CHECK(out.mask.min().item<float>() >= 0.0f);
    CHECK(out.mask.max().item<float>() <= 1.0f);
    CHECK(out.image_map.abs().max().item<float>() <= 1.0f);
    CHECK(out.output.abs().max().item<float>() <= 1.0f);
}

TEST_CASE("saturated mask returns the input") {
    Generator g(tiny());
    g->reset_parameters(5);
    {
        torch::NoGradGuard no_grad;
        g->mask_head()->weight.zero_();
        g->mask_head()->bias.fill_(100.0);
    }
    auto x = uniform_images({1, 3, 16, 16}, 6);
    auto out = g->forward(x, torch::zeros({1, 2}));
    CHECK(torch::equal(out.output, x));
}

TEST_CASE("attributes change the output for almost every seed") {
    int differ = 0;
    auto x = uniform_images({1, 3, 16, 16}, 7);
    torch::NoGradGuard no_grad;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        Generator g(tiny());
        g->reset_parameters(seed);
        auto a = g->forward(x, torch::tensor({1.0f, 0.0f})).output;
        auto b = g->forward(x, torch::tensor({0.0f, 1.0f})).output;
        differ += (a - b).abs().max().item<float>() > 0 ? 1 : 0;
    }
    CHECK(differ >= 99);
}

TEST_CASE("attention off returns the image map") {
    auto cfg = tiny();
    cfg.use_attention = false;
    Generator g(cfg);
    auto out = g->forward(uniform_images({1, 3, 16, 16}, 8), torch::zeros({1, 2}));
    CHECK_FALSE(out.mask.defined());
    CHECK(torch::equal(out.output, out.image_map));
    for (const auto& item : g->named_parameters()) CHECK(item.key().find("mask_head") == std::string::npos);
}

TEST_CASE("embedding off ignores the attributes") {
    auto cfg = tiny();
    cfg.embed_attributes = false;
    Generator g(cfg);
    g->reset_parameters(2);
    auto x = uniform_images({1, 3, 16, 16}, 9);
    torch::NoGradGuard no_grad;
    CHECK(torch::equal(g->forward(x, torch::tensor({1.0f, 0.0f})).output,
                       g->forward(x, torch::tensor({0.0f, 1.0f})).output));
}

TEST_CASE("input validation") {
    Generator g(tiny());
    CHECK_THROWS_AS(g->forward(torch::zeros({1, 3, 32, 32}), torch::zeros({1, 2})), DimensionError);
    CHECK_THROWS_AS(g->forward(torch::full({1, 3, 16, 16}, 1.01), torch::zeros({1, 2})), ValidationError);
    CHECK_NOTHROW(g->forward(torch::full({1, 3, 16, 16}, 1.0005), torch::zeros({1, 2})));
    CHECK_THROWS_AS(g->forward(torch::zeros({1, 3, 16, 16}), torch::zeros({1, 3})), ArgumentError);
    auto bad = tiny();
    bad.image_size = 18;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = tiny();
    bad.n_resblocks = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("forward is deterministic and initialisation is seeded") {
    Generator a(tiny()), b(tiny());
    a->reset_parameters(42);
    b->reset_parameters(42);
    auto x = uniform_images({2, 3, 16, 16}, 10);
    auto alpha = torch::tensor({1.0f, 0.0f, 0.0f, 1.0f}).reshape({2, 2});
    CHECK(torch::equal(a->forward(x, alpha).output, b->forward(x, alpha).output));
    for (const auto& item : a->named_parameters()) {
        if (item.key().find("bias") != std::string::npos && item.key().find("norm") == std::string::npos) {
            CHECK(item.value().abs().max().item<float>() == 0.0f);
        }
    }
    const auto w = a->named_parameters()["conv1.weight"];
    CHECK(w.std().item<double>() == doctest::Approx(0.02).epsilon(0.05));
}

TEST_CASE("gradients match central differences") {
    Generator g(tiny());
    g->reset_parameters(11);
    g->to(torch::kFloat64);
    auto x = uniform_images({1, 3, 16, 16}, 12).to(torch::kFloat64);
    auto alpha = torch::tensor({1.0, 0.0}, torch::kFloat64).reshape({1, 2});
    auto objective = [&] { return g->forward(x, alpha).output.pow(2).sum(); };

    g->zero_grad();
    objective().backward();

    Rng rng(13);
    int total = 0, ok = 0;
    torch::NoGradGuard no_grad;
    for (auto& item : g->named_parameters()) {
        auto p = item.value();
        auto flat = p.view(-1);
        auto grad = p.grad().view(-1);
        std::uniform_int_distribution<int64_t> pick(0, flat.numel() - 1);
        for (int s = 0; s < 8; ++s) {
            const auto i = pick(rng);
            const double orig = flat[i].item<double>();
            const double h = 1e-5;
            flat[i] = orig + h;
            const double up = objective().item<double>();
            flat[i] = orig - h;
            const double down = objective().item<double>();
            flat[i] = orig;
            const double numeric = (up - down) / (2 * h);
            const double analytic = grad[i].item<double>();
            const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            ok += rel <= 1e-3 ? 1 : 0;
            ++total;
        }
    }
    CHECK(static_cast<double>(ok) >= 0.99 * total);
}
