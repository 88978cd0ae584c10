#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include <torch/torch.h>

#include "a3gan/data.hpp"
#include "a3gan/errors.hpp"
#include "a3gan/evaluation.hpp"

using namespace a3gan;
using namespace a3gan::eval;
namespace fs = std::filesystem;

namespace {

SynthSpec spec64() {
    SynthSpec s;
    s.image_size = 64;
    s.n_identities = 6;
    return s;
}

std::vector<torch::Tensor> images(const Dataset& d) {
    std::vector<torch::Tensor> out;
    for (const auto& s : d.samples()) out.push_back(s.image);
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("age oracle") {
    CHECK(oracle_age_score(torch::full({3, 32, 32}, 0.3)) <= 1e-12);
    auto d = synth_generate(spec64()).dataset;
    const auto& x = d[5].image;
    CHECK(std::abs(oracle_age_score(x + 0.2) - oracle_age_score(x)) <= 1e-6);

    double young = 0, old = 0;
    for (auto i : d.group_indices(AgeGroup::Under31)) young += oracle_age_score(d[i].image);
    for (auto i : d.group_indices(AgeGroup::G51Plus)) old += oracle_age_score(d[i].image);
    CHECK(old > young);
}

TEST_CASE("attribute oracle") {
    auto spec = spec64();
    auto d = synth_generate(spec).dataset;
    for (const auto& s : d.samples()) CHECK(oracle_attribute_classify(s.image, 2).bits == s.attributes);

    auto gray = oracle_attribute_classify(torch::full({3, 64, 64}, 0.1), 2);
    CHECK(gray.bits == std::vector<float>{0.0f, 0.0f});
    CHECK(gray.low_confidence);

    std::vector<float> attrs{1.0f, 1.0f}, flipped{0.0f, 1.0f};
    auto a = synth_render(spec, 2, attrs, 0.3, 11);
    auto b = synth_render(spec, 2, flipped, 0.3, 11);
    CHECK(oracle_attribute_classify(a, 2).bits == attrs);
    CHECK(oracle_attribute_classify(b, 2).bits == flipped);
}

TEST_CASE("identity oracle") {
    auto d = synth_generate(spec64()).dataset;
    const auto& x = d[0].image;
    CHECK(oracle_identity_score(x, x) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(oracle_identity_score(x, -x) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(oracle_identity_score(x, torch::zeros_like(x)) == 0.0);

    double same = 0, other = 0;
    int ns = 0, no = 0;
    for (size_t i = 0; i < d.size(); ++i) {
        for (size_t j = i + 1; j < d.size(); ++j) {
            if (d[i].age_group == d[j].age_group) continue;
            const double v = oracle_identity_score(d[i].image, d[j].image);
            if (d[i].identity == d[j].identity) {
                same += v, ++ns;
            } else {
                other += v, ++no;
            }
        }
    }
    CHECK(same / ns > other / no);
}

TEST_CASE("age protocol") {
    auto d = synth_generate(spec64()).dataset;
    auto imgs = images(d);
    auto same = eval_age(imgs, imgs, oracle_age_estimator());
    CHECK(same.difference == 0.0);
    CHECK(same.outputs.count == static_cast<int64_t>(imgs.size()));

    // Estimator reads the first pixel; two-image groups.
    AgeEstimator first = [](const torch::Tensor& t) { return t.flatten()[0].item<double>(); };
    auto a = eval_age({torch::full({3, 4, 4}, 0.2), torch::full({3, 4, 4}, 0.6)},
                      {torch::full({3, 4, 4}, -0.5), torch::full({3, 4, 4}, 0.1)}, first);
    CHECK(a.outputs.mean == doctest::Approx(0.4).epsilon(1e-7));
    CHECK(a.outputs.std == doctest::Approx(0.2).epsilon(1e-7));
    CHECK(a.references.mean == doctest::Approx(-0.2).epsilon(1e-7));
    CHECK(a.references.std == doctest::Approx(0.3).epsilon(1e-7));
    CHECK(a.difference == doctest::Approx(0.6).epsilon(1e-7));
}

TEST_CASE("attribute protocol") {
    auto d = synth_generate(spec64()).dataset;
    auto imgs = images(d);
    auto cls = oracle_attribute_classifier(2);
    auto same = eval_attributes(imgs, imgs, cls);
    CHECK(same.rates == std::vector<double>{100.0, 100.0});

    AttributeClassifier from_value = [](const torch::Tensor& t) {
        const auto v = t.flatten()[0].item<float>();
        return std::vector<float>{v > 0 ? 1.0f : 0.0f, v > 0.5f ? 1.0f : 0.0f};
    };
    auto c = [](float v) { return torch::full({3, 2, 2}, v); };
    auto flipped = eval_attributes({c(0.9f), c(-0.9f)}, {c(-0.9f), c(0.9f)}, from_value);
    CHECK(flipped.rates == std::vector<double>{0.0, 0.0});
    // Attribute 0 agrees on three of four.
    auto mixed = eval_attributes({c(0.9f), c(0.9f), c(-0.9f), c(-0.9f)}, {c(0.9f), c(0.2f), c(-0.2f), c(0.3f)},
                                 from_value);
    CHECK(mixed.rates[0] == 75.0);
    CHECK_THROWS_AS(eval_attributes({c(0.f)}, {}, from_value), ArgumentError);
}

TEST_CASE("identity protocol") {
    auto d = synth_generate(spec64()).dataset;
    auto imgs = images(d);
    auto same = eval_identity(imgs, imgs, oracle_identity_scorer(), 0.5);
    CHECK(same.rate == 100.0);
    CHECK(same.scores.mean == doctest::Approx(1.0).epsilon(1e-6));
    std::vector<torch::Tensor> neg;
    for (const auto& x : imgs) neg.push_back(-x);
    CHECK(eval_identity(imgs, neg, oracle_identity_scorer(), 0.5).rate == 0.0);
    auto hand = identity_from_scores({0.4, 0.6}, 0.5);
    CHECK(hand.rate == 50.0);
    CHECK(hand.scores.mean == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(hand.scores.std == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("report layout") {
    EvalReport r;
    auto j = r.to_json();
    std::set<std::string> keys;
    for (const auto& item : j["groups"].items()) keys.insert(item.key());
    CHECK(keys == std::set<std::string>{"G31_40", "G41_50", "G51Plus"});
    CHECK(j["groups"]["G31_40"]["evaluated"] == false);

    auto d = synth_generate(spec64()).dataset;
    GeneratedSet set;
    for (auto i : d.group_indices(AgeGroup::Under31)) {
        set.inputs.push_back(d[i].image);
        set.outputs.push_back(d[i].image);
    }
    for (auto i : d.group_indices(AgeGroup::G51Plus)) set.references.push_back(d[i].image);
    r.groups[AgeGroup::G51Plus] = evaluate_group(set, Estimators::oracle(2), 0.5);
    j = r.to_json();
    const auto& g = j["groups"]["G51Plus"];
    CHECK(g["evaluated"] == true);
    CHECK(g["verification"]["rate_percent"] == 100.0);
    for (double v : g["attributes"]["preservation_rate_percent"]) CHECK(v == 100.0);
    CHECK(g["age"]["difference"].get<double>() < 0);
    CHECK(r.table().find("51+") != std::string::npos);
}

TEST_CASE("leakage outside the texture bands") {
    auto mask = SynthGeometry::texture_mask(16);
    auto x = torch::zeros({3, 16, 16});
    auto y = x + 0.5 * mask;  // changes only inside the bands
    CHECK(leakage_outside({x}, {y}, mask) == 0.0);
    CHECK(leakage_outside({x}, {x + 0.25}, mask) == doctest::Approx(0.25).epsilon(1e-7));
}

TEST_CASE("grid layout") {
    std::vector<std::vector<torch::Tensor>> rows(3, std::vector<torch::Tensor>(4, torch::zeros({3, 64, 64})));
    auto m = compose_grid(rows);
    CHECK(m.cols == 4 * 64 + 5 * kGridMargin);
    CHECK(m.rows == 3 * 64 + 4 * kGridMargin);
    CHECK_THROWS_AS(compose_grid({}), ArgumentError);
    rows[1].pop_back();
    CHECK_THROWS_AS(compose_grid(rows), ArgumentError);

    auto dir = fs::temp_directory_path() / "a3gan_eval_grid";
    fs::remove_all(dir);
    auto d = synth_generate(spec64()).dataset;
    std::vector<std::vector<torch::Tensor>> real{{d[0].image, d[1].image}, {d[2].image, d[3].image}};
    emit_grid(real, dir / "a.png");
    emit_grid(real, dir / "b.png");
    CHECK(slurp(dir / "a.png") == slurp(dir / "b.png"));
    fs::remove_all(dir);
}

TEST_CASE("attention rendering") {
    auto x = torch::zeros({3, 8, 8});
    auto white = compose_attention({x}, {torch::ones({1, 8, 8})}, {x});
    auto black = compose_attention({x}, {torch::zeros({1, 8, 8})}, {x});
    const cv::Rect tile(2 * kGridMargin + 8, kGridMargin, 8, 8);
    cv::Mat w = white(tile), b = black(tile);
    CHECK(cv::countNonZero(w.reshape(1) != 255) == 0);
    CHECK(cv::countNonZero(b.reshape(1)) == 0);
    CHECK(white.cols == 3 * 8 + 4 * kGridMargin);
    CHECK_THROWS_AS(compose_attention({x}, {}, {x}), ArgumentError);
}
