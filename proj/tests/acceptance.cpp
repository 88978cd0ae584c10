// Acceptance suite. Usage: acceptance [N ...] (default: all criteria).
// Prints one "criterion N: PASS|FAIL ..." line per requested criterion and
// exits non-zero when any of them fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"

#include "a3gan/checkpoint.hpp"
#include "a3gan/config.hpp"
#include "a3gan/data.hpp"
#include "a3gan/discriminator.hpp"
#include "a3gan/embedder.hpp"
#include "a3gan/evaluation.hpp"
#include "a3gan/generator.hpp"
#include "a3gan/losses.hpp"
#include "a3gan/random.hpp"
#include "a3gan/training.hpp"
#include "a3gan/wpt.hpp"

using namespace a3gan;
namespace fs = std::filesystem;

namespace {

// --- pinned tolerances ---------------------------------------------------------

constexpr double kReconTol = 1e-5;
constexpr double kParsevalTol = 1e-6;
constexpr double kLossTol = 1e-5;
constexpr double kGradRelTol = 1e-3;
constexpr double kGradPassFraction = 0.99;
constexpr double kResumeTol = 1e-6;
constexpr double kAgeGapFraction = 0.25;
constexpr double kAttributeFloor = 95.0;
constexpr double kIdentityFloor = 90.0;
constexpr double kIdentityThreshold = 0.5;

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

using Shape = std::vector<int64_t>;

std::map<std::string, Shape> as_map(const ShapeTrace& t) { return {t.begin(), t.end()}; }

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("a3gan_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// --- 1: packet transform ------------------------------------------------------

Outcome criterion1() {
    Outcome o;
    double worst_recon = 0, worst_parseval = 0;
    for (const auto& name : wpt::filter_names()) {
        const auto f = wpt::filter_by_name(name);
        for (uint64_t seed = 0; seed < 100; ++seed) {
            auto gen = make_torch_generator(derive_seed(1, 0xA1, seed));
            auto x = torch::rand({3, 64, 64}, gen) * 2 - 1;
            for (int levels = 1; levels <= 3; ++levels) {
                auto pyr = wpt::wpt_decompose(x, levels, f);
                auto back = wpt::wpt_reconstruct(pyr, f);
                worst_recon = std::max(worst_recon, (back - x).abs().max().item<double>());
                const double e0 = x.to(torch::kFloat64).pow(2).sum().item<double>();
                const double el = pyr.levels.back().to(torch::kFloat64).pow(2).sum().item<double>();
                worst_parseval = std::max(worst_parseval, std::abs(el - e0) / e0);
            }
        }
    }
    o.require(worst_recon <= kReconTol, "reconstruction error " + fmt("%.3g", worst_recon));
    o.require(worst_parseval <= kParsevalTol, "Parseval error " + fmt("%.3g", worst_parseval));

    auto pyr = wpt::wpt_decompose(torch::zeros({3, 256, 256}), 2, wpt::haar());
    o.require(pyr.level_shape(1) == std::array<int64_t, 3>{128, 128, 12}, "level 1 shape");
    o.require(pyr.level_shape(2) == std::array<int64_t, 3>{64, 64, 48}, "level 2 shape");
    if (o.pass) o.detail = "recon " + fmt("%.2e", worst_recon) + ", Parseval " + fmt("%.2e", worst_parseval);
    return o;
}

// --- 2: architecture contracts ----------------------------------------------

Outcome criterion2() {
    Outcome o;
    torch::NoGradGuard no_grad;
    {
        Generator g(GeneratorConfig::paper(2));
        ShapeTrace t;
        g->forward(torch::zeros({1, 3, 256, 256}), torch::zeros({1, 2}), &t);
        auto got = as_map(t);
        const std::map<std::string, Shape> want{
            {"conv1", {1, 64, 256, 256}},  {"conv2", {1, 128, 128, 128}}, {"conv3", {1, 256, 64, 64}},
            {"resblock1", {1, 256, 64, 64}}, {"resblock6", {1, 256, 64, 64}}, {"embed", {1, 258, 64, 64}},
            {"up1", {1, 128, 128, 128}},   {"up2", {1, 64, 256, 256}},    {"mask", {1, 1, 256, 256}},
            {"image_map", {1, 3, 256, 256}}, {"output", {1, 3, 256, 256}}};
        for (const auto& [k, v] : want) o.require(got[k] == v, "generator " + k);
        o.require(got.count("resblock7") == 0, "generator has 6 residual blocks");
    }
    {
        Discriminator d(DiscriminatorConfig::paper(2));
        ShapeTrace t;
        auto score = d->forward(torch::zeros({1, 3, 256, 256}), torch::zeros({1, 2}), &t);
        auto got = as_map(t);
        o.require(got["pathway1/input"] == Shape{1, 3, 256, 256}, "pathway 1 input");
        o.require(got["pathway2/input"] == Shape{1, 12, 128, 128}, "pathway 2 input");
        o.require(got["pathway3/input"] == Shape{1, 48, 64, 64}, "pathway 3 input");
        for (const std::string p : {"pathway1/", "pathway2/", "pathway3/"}) {
            o.require(got[p + "out"] == Shape{1, 1, 4, 4}, p + "out is 4x4x1");
        }
        o.require(got["fused"] == Shape{1, 3, 4, 4}, "fused 4x4x3");
        o.require(d->named_parameters()["fc.weight"].sizes().vec() == Shape{1, 48}, "head 4x4x3 -> 1");
        o.require(score.sizes().vec() == Shape{1}, "scalar score");
    }
    return o;
}

// --- 3: loss arithmetic -------------------------------------------------------

Outcome criterion3() {
    Outcome o;
    auto gen = make_torch_generator(3);
    auto x = torch::rand({4, 3, 16, 16}, gen, torch::kFloat64) * 2 - 1;
    auto y = torch::rand({4, 3, 16, 16}, gen, torch::kFloat64) * 2 - 1;
    auto a = torch::tensor({1., 0., 0., 1., 1., 1., 0., 0.}, torch::kFloat64).reshape({4, 2});
    auto abar = 1 - a;

    Discriminator d(DiscriminatorConfig::desk_at(16, 2));
    d->reset_parameters(5);
    d->to(torch::kFloat64);
    auto critic = as_critic(d);
    const double att = losses::adv_att(critic, x, a, abar).item<double>();
    const double swapped = losses::adv_att(critic, x, abar, a).item<double>();
    o.require(std::abs(att + swapped) <= kLossTol, "antisymmetry " + fmt("%.3g", att + swapped));

    auto t = [](double v) { return torch::tensor(v, torch::kFloat64); };
    for (double lam : {0.0, 0.75}) {
        const double total = losses::d_total(t(2.0), t(-1.5), t(0.25), lam).item<double>();
        o.require(std::abs(total - (lam * 2.0 - 1.5 + 0.25)) <= kLossTol, "critic total at " + fmt("%.2f", lam));
    }
    LossWeights w;
    const double gt = losses::g_total(t(-0.5), t(3.0), t(0.125), w).item<double>();
    o.require(std::abs(gt - (-0.5 + 0.02 * 3.0 + 8.0 * 0.125)) <= kLossTol, "generator total");

    auto linear = [](double norm) {
        auto dir = torch::ones({3, 16, 16}, torch::kFloat64);
        dir = dir / dir.norm() * norm;
        return Critic([dir](const torch::Tensor& img, const torch::Tensor&) { return (img * dir).sum({1, 2, 3}); });
    };
    const double gp1 = losses::gradient_penalty(linear(1.0), x, y, a, 10.0, make_torch_generator(1)).item<double>();
    const double gp2 = losses::gradient_penalty(linear(2.0), x, y, a, 10.0, make_torch_generator(1)).item<double>();
    o.require(std::abs(gp1) <= kLossTol, "penalty of a unit-norm critic " + fmt("%.3g", gp1));
    o.require(std::abs(gp2 - 10.0) <= kLossTol, "penalty of a norm-2 critic " + fmt("%.6g", gp2));

    auto emb = make_fixed_embedder(0);
    auto img = torch::rand({2, 3, 32, 32}, gen) * 2 - 1;
    o.require(losses::identity(*emb, img, img).item<double>() == 0.0, "identity term of identical images");
    o.require(losses::pixel(img, img).item<double>() == 0.0, "pixel term of identical images");
    return o;
}

// --- 4: gradient validation ---------------------------------------------------

struct GradTally {
    int ok = 0, total = 0;
};

/// Central differences on `per_param` coordinates of each parameter until
/// `budget` coordinates are sampled.
void check_gradients(torch::nn::Module& m, const std::function<torch::Tensor()>& objective, int budget, Rng& rng,
                     GradTally& tally) {
    m.zero_grad();
    objective().backward();
    std::vector<torch::Tensor> params;
    for (auto& p : m.parameters()) {
        if (p.grad().defined()) params.push_back(p);
    }
    auto set = [](torch::Tensor& flat, int64_t i, double v) {
        torch::NoGradGuard no_grad;
        flat[i] = v;
    };
    std::uniform_int_distribution<size_t> which(0, params.size() - 1);
    for (int s = 0; s < budget; ++s) {
        auto p = params[which(rng)];
        auto flat = p.detach().view(-1);
        auto grad = p.grad().view(-1);
        std::uniform_int_distribution<int64_t> pick(0, flat.numel() - 1);
        const auto i = pick(rng);
        const double orig = flat[i].item<double>();
        const double h = 1e-5;
        set(flat, i, orig + h);
        const double up = objective().item<double>();
        set(flat, i, orig - h);
        const double down = objective().item<double>();
        set(flat, i, orig);
        const double numeric = (up - down) / (2 * h);
        const double analytic = grad[i].item<double>();
        const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
        tally.ok += rel <= kGradRelTol ? 1 : 0;
        ++tally.total;
    }
}

Outcome criterion4() {
    auto gc = GeneratorConfig::desk(2);
    gc.image_size = 16;
    auto dc = DiscriminatorConfig::desk_at(16, 2);
    Generator g(gc);
    Discriminator d(dc);
    g->reset_parameters(41);
    d->reset_parameters(42);
    g->to(torch::kFloat64);
    d->to(torch::kFloat64);
    auto emb = make_fixed_embedder(0);
    emb->to(torch::kFloat64);

    auto gen = make_torch_generator(43);
    auto young = torch::rand({2, 3, 16, 16}, gen, torch::kFloat64) * 2 - 1;
    auto old = torch::rand({2, 3, 16, 16}, gen, torch::kFloat64) * 2 - 1;
    auto alpha = torch::tensor({1., 0., 0., 1.}, torch::kFloat64).reshape({2, 2});
    auto eps = torch::rand({2}, gen, torch::kFloat64);
    LossWeights w;
    auto critic = as_critic(d);

    auto loss_g = [&] {
        auto fake = g->forward(young, alpha).output;
        return losses::g_total(losses::adv_g(critic, fake, alpha), losses::identity(*emb, young, fake),
                               losses::pixel(young, fake), w);
    };
    torch::Tensor fake;
    {
        torch::NoGradGuard no_grad;
        fake = g->forward(young, alpha).output;
    }
    auto loss_d = [&] {
        auto att = losses::adv_att(critic, old, alpha, 1 - alpha);
        auto auth = losses::adv_auth(critic, old, alpha, fake, alpha);
        auto gp = losses::gradient_penalty_at(critic, old, fake, alpha, w.lambda_gp, eps);
        return losses::d_total(att, auth, gp, w.lambda_att_max);
    };

    Rng rng(44);
    GradTally tg, td;
    check_gradients(*g, loss_g, 100, rng, tg);
    check_gradients(*d, loss_d, 100, rng, td);
    const int ok = tg.ok + td.ok, total = tg.total + td.total;
    Outcome o;
    o.require(ok >= kGradPassFraction * total, "too many gradient mismatches");
    o.detail += (o.detail.empty() ? "" : "; ") + std::to_string(ok) + "/" + std::to_string(total) +
                " coordinates within 1e-3 (L_G " + std::to_string(tg.ok) + "/" + std::to_string(tg.total) + ", L_D " +
                std::to_string(td.ok) + "/" + std::to_string(td.total) + ")";
    return o;
}

// --- 5, 6: schedule and determinism -------------------------------------------

struct SmallRun {
    GeneratorConfig g;
    DiscriminatorConfig d;
    TrainConfig t;
    Dataset data;

    SmallRun() {
        g = GeneratorConfig::desk(2);
        g.image_size = 32;
        g.base_channels = 8;
        g.n_resblocks = 1;
        d = DiscriminatorConfig::desk_at(32, 2);
        d.base_channels = 8;
        t.batch_size = 4;
        t.seed = 5;
        SynthSpec s;
        s.image_size = 32;
        s.n_identities = 4;
        data = synth_generate(s).dataset;
        t.epochs = 100;  // 2 iterations per epoch
    }
};

Outcome criterion5() {
    Outcome o;
    SmallRun r;
    auto emb = make_fixed_embedder(0);
    const auto before = emb->parameters();
    auto res = train(r.g, r.d, r.t, r.data, emb);
    const auto& log = res.log;
    o.require(log.size() == 200, "logged " + std::to_string(log.size()) + " steps");
    if (log.empty()) return o;
    o.require(log.front().lambda_att == 0.0, "lambda_att at step 0 is " + fmt("%g", log.front().lambda_att));
    o.require(log.back().lambda_att == 0.75, "final lambda_att is " + fmt("%g", log.back().lambda_att));
    int pixel_off = 0, pixel_bad = 0;
    for (size_t i = 0; i < log.size(); ++i) {
        if (i > 0 && log[i].lambda_att < log[i - 1].lambda_att) o.require(false, "lambda_att decreased");
        const bool on = (i + 1) % 5 == 0;
        if (!on) pixel_off += 1;
        if (on != (log[i].pix != 0.0)) ++pixel_bad;
    }
    o.require(pixel_bad == 0, std::to_string(pixel_bad) + " steps break the pixel period");
    o.require(pixel_off == 160, "pixel term off on " + std::to_string(pixel_off) + " of 200 steps");
    const auto after = emb->parameters();
    bool frozen = before.size() == after.size();
    for (const auto& [k, v] : before) frozen = frozen && torch::equal(v, after.at(k));
    o.require(frozen, "identity embedder changed");
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

Outcome criterion6() {
    Outcome o;
    SmallRun r;
    r.t.epochs = 15;
    auto emb = make_fixed_embedder(0);
    auto dir = scratch("determinism");
    train(r.g, r.d, r.t, r.data, emb, dir / "a");
    train(r.g, r.d, r.t, r.data, emb, dir / "b");
    const auto a = slurp(dir / "a" / "logs" / "metrics.csv");
    o.require(!a.empty() && a == slurp(dir / "b" / "logs" / "metrics.csv"), "metrics logs differ");

    TrainingState full(r.g, r.d, r.t, emb);
    full.total_steps = planned_iterations(r.t, r.data);
    auto ref = run_training(full, r.data);

    TrainingState part(r.g, r.d, r.t, emb);
    part.total_steps = full.total_steps;
    auto first = run_training(part, r.data, {}, 20);
    save_checkpoint(first.checkpoint, dir / "step20.ckpt");
    auto resumed = TrainingState::from_checkpoint(load_checkpoint(dir / "step20.ckpt"), emb);
    auto next = run_training(resumed, r.data, {}, 30);
    o.require(next.log.size() == 10, "resumed run logged " + std::to_string(next.log.size()) + " steps");
    double worst = 0;
    for (size_t i = 0; i < next.log.size() && 20 + i < ref.log.size(); ++i) {
        const auto& x = next.log[i];
        const auto& y = ref.log[20 + i];
        const std::vector<std::pair<double, double>> pairs{{x.adv_att, y.adv_att}, {x.adv_auth, y.adv_auth},
                                                           {x.gp, y.gp},           {x.adv_g, y.adv_g},
                                                           {x.id, y.id},           {x.pix, y.pix},
                                                           {x.lambda_att, y.lambda_att}};
        for (const auto& [u, v] : pairs) worst = std::max(worst, std::abs(u - v));
    }
    o.require(worst <= kResumeTol, "resume drift " + fmt("%.3g", worst));
    if (o.pass) o.detail = "resume drift " + fmt("%.2g", worst);
    fs::remove_all(dir);
    return o;
}

// --- 7, 8: closed-loop synthetic runs -----------------------------------------

RunConfig closed_loop_config(const std::string& variant, uint64_t seed) {
    auto cfg = RunConfig::defaults(Profile::Desk64);
    cfg.synth.seed = 7;
    cfg.synth.n_identities = 50;
    cfg.train.batch_size = 4;
    cfg.train.epochs = 80;  // 25 iterations per epoch
    cfg.train.seed = seed;
    cfg.train.target_group = AgeGroup::G51Plus;
    apply_variant(cfg, variant);
    cfg.validate();
    return cfg;
}

struct ClosedLoop {
    double input_age = 0, output_age = 0, reference_age = 0;
    std::vector<double> attribute_rates;
    double identity_rate = 0;
    double leakage = 0;

    double mean_attribute_rate() const {
        double s = 0;
        for (double r : attribute_rates) s += r;
        return attribute_rates.empty() ? 0 : s / static_cast<double>(attribute_rates.size());
    }
};

/// Trains (or reuses a cached run with an identical configuration) and scores
/// the final generator with the oracles.
ClosedLoop closed_loop(const std::string& variant, uint64_t seed) {
    const auto cfg = closed_loop_config(variant, seed);
    const auto dir = fs::path(A3GAN_RUN_CACHE) / (variant + "_seed" + std::to_string(seed));
    const auto ckpt_path = dir / "ckpt" / "final.ckpt";
    const nlohmann::json want = cfg;
    bool cached = false;
    if (fs::exists(ckpt_path) && fs::exists(dir / "config.json")) {
        try {
            cached = nlohmann::json(load_run_config(dir / "config.json")) == want;
        } catch (const std::exception&) {
            cached = false;
        }
    }
    auto data = synth_generate(cfg.synth);
    Generator g(cfg.generator);
    const auto t0 = std::chrono::steady_clock::now();
    if (cached) {
        restore_module(load_checkpoint(ckpt_path), "generator", *g);
        std::cerr << "[" << variant << " seed " << seed << "] reusing " << ckpt_path.string() << '\n';
    } else {
        fs::remove_all(dir);
        fs::create_directories(dir);
        auto emb = embedder_from_spec(cfg.embedder);
        TrainingState state(cfg.generator, cfg.discriminator, cfg.train, emb);
        state.total_steps = planned_iterations(cfg.train, data.dataset);
        run_training(state, data.dataset, dir);
        g = state.generator;
        save_run_config(cfg, dir / "config.json");
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cerr << "[" << variant << " seed " << seed << "] trained " << state.step << " iterations in "
                  << fmt("%.0f", secs) << " s\n";
    }

    auto set = eval::generate_for_group(g, data.dataset, cfg.train.target_group);
    const auto est = eval::Estimators::oracle(cfg.synth.attr_dim);
    ClosedLoop r;
    auto age = [&](const std::vector<torch::Tensor>& v) { return eval::summarize([&] {
        std::vector<double> s;
        for (const auto& x : v) s.push_back(est.age(x));
        return s;
    }()).mean; };
    r.input_age = age(set.inputs);
    r.output_age = age(set.outputs);
    r.reference_age = age(set.references);
    r.attribute_rates = eval::eval_attributes(set.inputs, set.outputs, est.attributes).rates;
    r.identity_rate = eval::eval_identity(set.inputs, set.outputs, est.identity, kIdentityThreshold).rate;
    r.leakage = eval::leakage_outside(set.inputs, set.outputs, data.oracle.texture_mask());
    std::cerr << "[" << variant << " seed " << seed << "] age in " << r.input_age << " out " << r.output_age
              << " ref " << r.reference_age << "; attributes " << r.mean_attribute_rate() << "%; identity "
              << r.identity_rate << "%; leakage " << r.leakage << '\n';
    return r;
}

Outcome criterion7() {
    Outcome o;
    {
        const auto cfg = closed_loop_config("full", 7);
        const auto n = planned_iterations(cfg.train, synth_generate(cfg.synth).dataset);
        o.require(n == 2000, "planned " + std::to_string(n) + " iterations");
    }
    const auto r = closed_loop("full", 7);
    const double gap = r.reference_age - r.input_age;
    const double gain = r.output_age - r.input_age;
    o.require(gap > 0 && gain >= kAgeGapFraction * gap,
              "(a) age gain " + fmt("%.4g", gain) + " below 25% of gap " + fmt("%.4g", gap));
    for (size_t k = 0; k < r.attribute_rates.size(); ++k) {
        o.require(r.attribute_rates[k] >= kAttributeFloor,
                  "(b) attribute " + std::to_string(k) + " preserved " + fmt("%.1f", r.attribute_rates[k]) + "%");
    }
    o.require(r.identity_rate >= kIdentityFloor, "(c) identity rate " + fmt("%.1f", r.identity_rate) + "%");
    std::ostringstream os;
    os << "age gain " << fmt("%.3g", gap > 0 ? gain / gap : 0.0) << " of gap; attributes";
    for (double v : r.attribute_rates) os << ' ' << fmt("%.1f", v) << '%';
    os << "; identity " << fmt("%.1f", r.identity_rate) << '%';
    o.detail = o.pass ? os.str() : o.detail + " [" + os.str() + "]";
    return o;
}

Outcome criterion8() {
    Outcome o;
    std::map<std::string, double> attr, leak;
    for (const std::string v : {"full", "no-fae", "no-am"}) {
        for (uint64_t seed : {7, 8, 9}) {
            const auto r = closed_loop(v, seed);
            attr[v] += r.mean_attribute_rate() / 3.0;
            leak[v] += r.leakage / 3.0;
        }
    }
    const std::string summary = "attributes full " + fmt("%.2f", attr["full"]) + "% vs no-fae " +
                                fmt("%.2f", attr["no-fae"]) + "%; leakage full " + fmt("%.4g", leak["full"]) +
                                " vs no-am " + fmt("%.4g", leak["no-am"]);
    o.require(attr["no-fae"] < attr["full"], "no-fae preserves attributes at least as well");
    o.require(leak["no-am"] > leak["full"], "no-am leaks no more than the full model");
    o.detail = o.pass ? summary : o.detail + " [" + summary + "]";
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<int, std::function<Outcome()>> criteria{{1, criterion1}, {2, criterion2}, {3, criterion3},
                                                           {4, criterion4}, {5, criterion5}, {6, criterion6},
                                                           {7, criterion7}, {8, criterion8}};
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::stoi(argv[i]));
    if (wanted.empty()) {
        for (const auto& [k, f] : criteria) wanted.push_back(k);
    }
    torch::set_num_threads(1);
    bool all = true;
    for (int k : wanted) {
        auto it = criteria.find(k);
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        if (it == criteria.end()) {
            o.require(false, "no such criterion");
        } else {
            try {
                o = it->second();
            } catch (const std::exception& e) {
                o.require(false, std::string("exception: ") + e.what());
            }
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << "criterion " << k << ": " << (o.pass ? "PASS" : "FAIL") << " (" << fmt("%.1f", secs) << " s)"
                  << (o.detail.empty() ? "" : " " + o.detail) << std::endl;
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
