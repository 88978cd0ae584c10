#include "a3gan/training.hpp"

#include <cmath>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "a3gan/config.hpp"
#include "a3gan/errors.hpp"
#include "a3gan/random.hpp"

namespace a3gan {

namespace {

constexpr uint64_t kStreamGeneratorInit = 0x6E;
constexpr uint64_t kStreamCriticInit = 0xD1;
constexpr uint64_t kStreamBatch = 0xBA;
constexpr uint64_t kStreamPenalty = 0x69;

std::unique_ptr<torch::optim::Adam> make_adam(torch::nn::Module& m, const TrainConfig& cfg) {
    return std::make_unique<torch::optim::Adam>(
        m.parameters(), torch::optim::AdamOptions(cfg.learning_rate).betas({cfg.beta1, cfg.beta2}));
}

void set_requires_grad(torch::nn::Module& m, bool on) {
    for (auto& p : m.parameters()) p.set_requires_grad(on);
}

/// Scoped freeze of a module's parameters.
class FrozenParameters {
public:
    explicit FrozenParameters(torch::nn::Module& m) : m_(m) { set_requires_grad(m_, false); }
    ~FrozenParameters() { set_requires_grad(m_, true); }
    FrozenParameters(const FrozenParameters&) = delete;
    FrozenParameters& operator=(const FrozenParameters&) = delete;

private:
    torch::nn::Module& m_;
};

void store_adam(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& m,
                const torch::optim::Adam& opt) {
    const auto& state = opt.state();
    for (const auto& item : m.named_parameters(true)) {
        auto it = state.find(item.value().unsafeGetTensorImpl());
        if (it == state.end()) continue;
        const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
        const auto key = checkpoint_key(prefix, item.key());
        ckpt.tensors[key + "/exp_avg"] = s.exp_avg().clone();
        ckpt.tensors[key + "/exp_avg_sq"] = s.exp_avg_sq().clone();
        ckpt.tensors[key + "/step"] = torch::tensor({s.step()}, torch::kInt64);
    }
}

void restore_adam(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& m, torch::optim::Adam& opt) {
    for (auto& item : m.named_parameters(true)) {
        const auto key = checkpoint_key(prefix, item.key());
        if (!ckpt.contains(key + "/exp_avg")) continue;
        auto s = std::make_unique<torch::optim::AdamParamState>();
        s->exp_avg(ckpt.tensors.at(key + "/exp_avg").clone());
        s->exp_avg_sq(ckpt.tensors.at(key + "/exp_avg_sq").clone());
        s->step(ckpt.tensors.at(key + "/step").item<int64_t>());
        opt.state()[item.value().unsafeGetTensorImpl()] = std::move(s);
    }
}

void require_finite(std::initializer_list<std::pair<const char*, double>> values, int64_t step, const char* phase) {
    for (const auto& [name, v] : values) {
        if (std::isfinite(v)) continue;
        std::ostringstream os;
        os << "non-finite loss in " << phase << " step " << step << ":";
        for (const auto& [n, x] : values) os << ' ' << n << '=' << x;
        throw TrainingError(os.str());
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate >= 0)) throw ValidationError("train: learning_rate must be >= 0");
    if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
    if (epochs < 0) throw ValidationError("train: epochs must be >= 0");
    if (pixel_loss_period < 1 || identity_loss_period < 1) throw ValidationError("train: loss periods must be >= 1");
    if (d_steps_per_g < 1) throw ValidationError("train: d_steps_per_g must be >= 1");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ValidationError("train: betas must lie in [0, 1)");
    if (!(lambda_att_horizon > 0 && lambda_att_horizon <= 1)) {
        throw ValidationError("train: lambda_att_horizon must lie in (0, 1]");
    }
    if (checkpoint_interval < 0) throw ValidationError("train: checkpoint_interval must be >= 0");
    if (target_group == AgeGroup::Under31) throw ValidationError("train: the target group must be older than 30-");
    weights.validate();
}

TrainingState::TrainingState(GeneratorConfig g, DiscriminatorConfig d, TrainConfig t,
                             std::shared_ptr<const FeatureEmbedder> emb)
    : generator(std::move(g)), discriminator(std::move(d)), embedder(std::move(emb)), config(std::move(t)) {
    config.validate();
    if (!embedder) throw ConfigurationError("training: an identity embedder is required");
    if (generator->config().image_size != discriminator->config().image_size ||
        generator->config().attr_dim != discriminator->config().attr_dim) {
        throw ConfigurationError("training: generator and discriminator disagree on image size or attr_dim");
    }
    generator->reset_parameters(derive_seed(config.seed, kStreamGeneratorInit));
    discriminator->reset_parameters(derive_seed(config.seed, kStreamCriticInit));
    opt_g = make_adam(*generator, config);
    opt_d = make_adam(*discriminator, config);
}

double TrainingState::lambda_att_at(int64_t s) const {
    const int64_t span = std::max<int64_t>(total_steps - 1, 1);
    const auto horizon = std::max<int64_t>(
        1, static_cast<int64_t>(std::llround(config.lambda_att_horizon * static_cast<double>(span))));
    return losses::lambda_att_schedule(std::min(s, horizon), horizon, config.weights.lambda_att_max);
}

Checkpoint TrainingState::to_checkpoint() const {
    Checkpoint ckpt;
    store_module(ckpt, "generator", *generator);
    store_module(ckpt, "discriminator", *discriminator);
    store_adam(ckpt, "optim/generator", *generator, *opt_g);
    store_adam(ckpt, "optim/discriminator", *discriminator, *opt_d);
    if (auto conv = std::dynamic_pointer_cast<const ConvEmbedder>(embedder)) conv->store(ckpt);
    ckpt.metadata["generator"] = generator->config();
    ckpt.metadata["discriminator"] = discriminator->config();
    ckpt.metadata["train"] = config;
    ckpt.metadata["seed"] = config.seed;
    ckpt.metadata["step"] = step;
    ckpt.metadata["total_steps"] = total_steps;
    ckpt.metadata["profile"] = to_string(generator->config().profile);
    ckpt.metadata["subband_order"] = "depth-first LL,LH,HL,HH";
    ckpt.metadata["filter"] = discriminator->config().filter;
    return ckpt;
}

TrainingState TrainingState::from_checkpoint(const Checkpoint& ckpt, std::shared_ptr<const FeatureEmbedder> emb) {
    const auto& md = ckpt.metadata;
    if (!md.contains("generator") || !md.contains("discriminator") || !md.contains("train")) {
        throw ConfigurationError("checkpoint: metadata lacks network or training configuration");
    }
    TrainingState st(md["generator"].get<GeneratorConfig>(), md["discriminator"].get<DiscriminatorConfig>(),
                     md["train"].get<TrainConfig>(), std::move(emb));
    restore_module(ckpt, "generator", *st.generator);
    restore_module(ckpt, "discriminator", *st.discriminator);
    restore_adam(ckpt, "optim/generator", *st.generator, *st.opt_g);
    restore_adam(ckpt, "optim/discriminator", *st.discriminator, *st.opt_d);
    st.step = md.value("step", int64_t{0});
    st.total_steps = md.value("total_steps", int64_t{0});
    return st;
}

DStepResult train_step_D(TrainingState& state, const torch::Tensor& young, const torch::Tensor& young_alpha,
                         const torch::Tensor& old, const torch::Tensor& old_alpha, const torch::Tensor& alpha_bar,
                         double lambda_att, torch::Generator gen) {
    torch::Tensor fake;
    {
        torch::NoGradGuard no_grad;
        fake = state.generator->forward(young, young_alpha).output;
    }
    auto critic = as_critic(state.discriminator);
    const auto& w = state.config.weights;

    auto att = losses::adv_att(critic, old, old_alpha, alpha_bar);
    auto auth = losses::adv_auth(critic, old, old_alpha, fake, young_alpha);
    auto gp = losses::gradient_penalty(critic, old, fake, young_alpha, w.lambda_gp, std::move(gen));
    auto total = losses::d_total(att, auth, gp, lambda_att);

    DStepResult r{att.item<double>(), auth.item<double>(), gp.item<double>(), total.item<double>()};
    require_finite({{"L_adv_att", r.adv_att}, {"L_adv_auth", r.adv_auth}, {"gp", r.gp}, {"L_D", r.total}}, state.step,
                   "critic");
    state.opt_d->zero_grad();
    total.backward();
    state.opt_d->step();
    return r;
}

GStepResult train_step_G(TrainingState& state, const torch::Tensor& young, const torch::Tensor& young_alpha,
                         int64_t g_iter) {
    FrozenParameters frozen_d(*state.discriminator);
    const auto& cfg = state.config;
    auto fake = state.generator->forward(young, young_alpha).output;
    auto critic = as_critic(state.discriminator);

    auto adv = losses::adv_g(critic, fake, young_alpha);
    auto zero = torch::zeros({}, fake.options());
    auto id = (g_iter % cfg.identity_loss_period == 0) ? losses::identity(*state.embedder, young, fake) : zero;
    const bool with_pixel = g_iter % cfg.pixel_loss_period == 0;
    auto pix = with_pixel ? losses::pixel(young, fake) : zero;
    auto total = losses::g_total(adv, id, pix, cfg.weights);

    GStepResult r{adv.item<double>(), id.item<double>(), pix.item<double>(), total.item<double>(), with_pixel};
    require_finite({{"L_adv_G", r.adv_g}, {"L_id", r.id}, {"L_pix", r.pix}, {"L_G", r.total}}, state.step, "generator");
    state.opt_g->zero_grad();
    total.backward();
    state.opt_g->step();
    return r;
}

// --- metrics log -------------------------------------------------------------

MetricsLog::MetricsLog(const std::filesystem::path& path, bool append) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const bool fresh = !append || !std::filesystem::exists(path);
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw IoError("metrics: cannot open '" + path.string() + "'");
    if (fresh) {
        out_ << header() << '\n';
        out_.flush();
    }
}

std::string MetricsLog::header() { return "step,L_adv_att,L_adv_auth,gp,L_adv_G,L_id,L_pix,lambda_att"; }

std::string MetricsLog::format(const LossRecord& r) {
    std::ostringstream os;
    os << std::setprecision(17) << r.step << ',' << r.adv_att << ',' << r.adv_auth << ',' << r.gp << ',' << r.adv_g
       << ',' << r.id << ',' << r.pix << ',' << r.lambda_att;
    return os.str();
}

void MetricsLog::write(const LossRecord& r) {
    out_ << format(r) << '\n';
    out_.flush();
    if (!out_) throw IoError("metrics: write to '" + path_.string() + "' failed");
}

std::vector<LossRecord> read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("metrics: cannot open '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    std::vector<LossRecord> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream is(line);
        LossRecord r;
        is >> r.step >> r.adv_att >> r.adv_auth >> r.gp >> r.adv_g >> r.id >> r.pix >> r.lambda_att;
        if (!is) throw IoError("metrics: malformed row in '" + path.string() + "'");
        rows.push_back(r);
    }
    return rows;
}

// --- loop --------------------------------------------------------------------

int64_t planned_iterations(const TrainConfig& cfg, const Dataset& data) {
    const auto young = static_cast<int64_t>(data.group_indices(AgeGroup::Under31).size());
    return cfg.epochs * ((young + cfg.batch_size - 1) / cfg.batch_size);
}

TrainResult run_training(TrainingState& state, const Dataset& data, const std::filesystem::path& out_dir,
                         int64_t stop_at) {
    const auto& cfg = state.config;
    if (cfg.deterministic) at::set_num_threads(1);
    if (data.group_indices(AgeGroup::Under31).empty()) throw DataError("train: the 30- group is empty");
    if (data.group_indices(cfg.target_group).empty()) {
        throw DataError("train: the " + to_string(cfg.target_group) + " group is empty");
    }
    const int64_t end = stop_at >= 0 ? std::min(stop_at, state.total_steps) : state.total_steps;

    MetricsLog log;
    const bool to_disk = !out_dir.empty();
    if (to_disk) log = MetricsLog(out_dir / "logs" / "metrics.csv", /*append=*/state.step > 0);

    TrainResult result;
    bool warned = false;
    state.generator->train();
    state.discriminator->train();
    while (state.step < end) {
        const int64_t it = state.step;
        const double lambda_att = state.lambda_att_at(it);
        LossRecord rec;
        rec.step = it;
        rec.lambda_att = lambda_att;

        TrainingBatch batch;
        for (int64_t d = 0; d < cfg.d_steps_per_g; ++d) {
            const auto draw = static_cast<uint64_t>(it * cfg.d_steps_per_g + d);
            Rng rng(derive_seed(cfg.seed, kStreamBatch, draw));
            batch = sample_batch(data, cfg.target_group, cfg.batch_size, rng, cfg.match_attributes);
            if (batch.unmatched > 0 && !warned) {
                std::cerr << "warning: no attribute-matched " << to_string(cfg.target_group)
                          << " sample for some young faces; drawing those unconditionally\n";
                warned = true;
            }
            torch::Tensor alpha_bar = data.attr_dim() > 0 ? sample_mismatched(batch.old_alpha, rng)
                                                          : batch.old_alpha.clone();
            auto d_res = train_step_D(state, batch.young, batch.young_alpha, batch.old, batch.old_alpha, alpha_bar,
                                      lambda_att, make_torch_generator(derive_seed(cfg.seed, kStreamPenalty, draw)));
            rec.adv_att = d_res.adv_att;
            rec.adv_auth = d_res.adv_auth;
            rec.gp = d_res.gp;
        }
        auto g_res = train_step_G(state, batch.young, batch.young_alpha, it + 1);
        rec.adv_g = g_res.adv_g;
        rec.id = g_res.id;
        rec.pix = g_res.pix;

        ++state.step;
        result.log.push_back(rec);
        if (to_disk) {
            log.write(rec);
            if (cfg.checkpoint_interval > 0 && state.step % cfg.checkpoint_interval == 0 && state.step < state.total_steps) {
                std::ostringstream name;
                name << "step_" << std::setw(6) << std::setfill('0') << state.step << ".ckpt";
                save_checkpoint(state.to_checkpoint(), out_dir / "ckpt" / name.str());
            }
        }
    }
    result.checkpoint = state.to_checkpoint();
    if (to_disk && state.step == state.total_steps) save_checkpoint(result.checkpoint, out_dir / "ckpt" / "final.ckpt");
    return result;
}

TrainResult train(const GeneratorConfig& g, const DiscriminatorConfig& d, const TrainConfig& t, const Dataset& data,
                  std::shared_ptr<const FeatureEmbedder> embedder, const std::filesystem::path& out_dir) {
    TrainingState state(g, d, t, std::move(embedder));
    state.total_steps = planned_iterations(t, data);
    return run_training(state, data, out_dir);
}

}  // namespace a3gan
