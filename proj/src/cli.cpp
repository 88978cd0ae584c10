#include "a3gan/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "a3gan/checkpoint.hpp"
#include "a3gan/config.hpp"
#include "a3gan/errors.hpp"
#include "a3gan/evaluation.hpp"
#include "a3gan/image_io.hpp"
#include "a3gan/training.hpp"
#include "a3gan/wpt.hpp"

namespace a3gan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Flags shared by the subcommands that resolve a RunConfig.
struct CommonFlags {
    std::string config;
    std::string out;
    std::optional<uint64_t> seed;
    std::optional<std::string> profile;
    std::optional<std::string> target_group;
    std::optional<std::string> embedder;
    std::optional<bool> deterministic;
    std::optional<int64_t> epochs;
    std::optional<int64_t> batch_size;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool training_flags) {
    cmd->add_option("--config", f.config, "RunConfig JSON file")->check(CLI::ExistingFile);
    cmd->add_option("--out", f.out, "Output directory")->required();
    cmd->add_option("--seed", f.seed, "Run seed (data seed for synth-data)");
    cmd->add_option("--profile", f.profile, "paper-256 | desk-64");
    if (!training_flags) return;
    cmd->add_option("--target-group", f.target_group, "31-40 | 41-50 | 51plus");
    cmd->add_option("--embedder", f.embedder, "fixed:<seed> | file:<checkpoint>");
    cmd->add_flag("--deterministic,!--no-deterministic", f.deterministic, "Single-threaded, bit-reproducible kernels");
    cmd->add_option("--epochs", f.epochs, "Training epochs");
    cmd->add_option("--batch-size", f.batch_size, "Mini-batch size");
}

RunConfig resolve(const CommonFlags& f) {
    RunConfig cfg;
    if (!f.config.empty()) {
        cfg = load_run_config(f.config);
        if (f.profile && parse_profile(*f.profile) != cfg.generator.profile) {
            throw ValidationError("--profile " + *f.profile + " contradicts the profile in " + f.config);
        }
    } else {
        cfg = RunConfig::defaults(f.profile ? parse_profile(*f.profile) : Profile::Desk64);
    }
    if (f.target_group) cfg.train.target_group = parse_age_group(*f.target_group);
    if (f.embedder) cfg.embedder = *f.embedder;
    if (f.deterministic) cfg.train.deterministic = *f.deterministic;
    if (f.epochs) cfg.train.epochs = *f.epochs;
    if (f.batch_size) cfg.train.batch_size = *f.batch_size;
    return cfg;
}

Dataset load_data(const RunConfig& cfg) {
    if (cfg.data.source == "manifest") {
        return load_manifest(cfg.data.manifest_dir, cfg.data.manifest, cfg.generator.image_size,
                             cfg.generator.attr_dim);
    }
    return synth_generate(cfg.synth).dataset;
}

Generator generator_from_checkpoint(const Checkpoint& ckpt) {
    if (!ckpt.metadata.contains("generator")) throw ConfigurationError("checkpoint has no generator configuration");
    Generator g(ckpt.metadata["generator"].get<GeneratorConfig>());
    restore_module(ckpt, "generator", *g);
    g->eval();
    return g;
}

AgeGroup checkpoint_target(const Checkpoint& ckpt) {
    if (!ckpt.metadata.contains("train")) throw ConfigurationError("checkpoint has no training configuration");
    return ckpt.metadata["train"].get<TrainConfig>().target_group;
}

void write_json(const json& j, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("cannot write '" + path.string() + "'");
}

/// Input grid and attention triplets for the first few under-31 samples.
void write_samples(Generator& g, const Dataset& data, const RunConfig& cfg, const fs::path& dir) {
    auto set = eval::generate_for_group(g, data, cfg.train.target_group, cfg.eval.grid_rows);
    std::vector<std::vector<torch::Tensor>> rows;
    for (size_t i = 0; i < set.inputs.size(); ++i) rows.push_back({set.inputs[i], set.outputs[i]});
    eval::emit_grid(rows, dir / "grid.png");
    if (!set.masks.empty()) eval::emit_attention(set.inputs, set.masks, set.outputs, dir / "attention.png");
}

// --- subcommands -------------------------------------------------------------

int cmd_synth(const CommonFlags& f) {
    auto cfg = resolve(f);
    if (f.seed) cfg.synth.seed = *f.seed;
    cfg.validate();
    const fs::path out = f.out;
    auto data = synth_generate(cfg.synth);
    export_dataset(data.dataset, out);
    save_run_config(cfg, out / "config.json");
    std::cout << "wrote " << data.dataset.size() << " samples to " << out.string() << '\n';
    return kExitOk;
}

int cmd_train(const CommonFlags& f, const std::string& variant, const std::string& resume) {
    auto cfg = resolve(f);
    if (f.seed) cfg.train.seed = *f.seed;
    if (!variant.empty()) apply_variant(cfg, variant);
    cfg.validate();
    const fs::path out = f.out;
    fs::create_directories(out);
    save_run_config(cfg, out / "config.json");

    auto data = load_data(cfg);
    std::shared_ptr<const FeatureEmbedder> emb = embedder_from_spec(cfg.embedder);
    std::optional<TrainingState> state;
    if (!resume.empty()) {
        state.emplace(TrainingState::from_checkpoint(load_checkpoint(resume), emb));
    } else {
        state.emplace(cfg.generator, cfg.discriminator, cfg.train, emb);
        state->total_steps = planned_iterations(cfg.train, data);
    }
    auto result = run_training(*state, data, out);
    write_samples(state->generator, data, cfg, out / "samples");
    std::cout << "trained " << state->step << " iterations; checkpoint " << (out / "ckpt" / "final.ckpt").string()
              << '\n';
    return kExitOk;
}

int cmd_generate(const std::string& ckpt_path, const std::string& input, const std::string& out_dir,
                 const std::vector<float>& attrs) {
    auto ckpt = load_checkpoint(ckpt_path);
    auto g = generator_from_checkpoint(ckpt);
    const auto& gc = g->config();
    const fs::path out = out_dir;

    std::vector<std::pair<std::string, FaceSample>> items;
    if (fs::is_directory(input)) {
        auto data = load_manifest(input, fs::path(input) / "manifest.csv", gc.image_size, gc.attr_dim);
        for (auto i : data.group_indices(AgeGroup::Under31)) {
            char name[32];
            std::snprintf(name, sizeof name, "%06zu", i);
            items.emplace_back(name, data[i]);
        }
    } else {
        if (static_cast<int64_t>(attrs.size()) != gc.attr_dim) {
            throw ArgumentError("--attrs needs " + std::to_string(gc.attr_dim) + " values");
        }
        items.emplace_back(fs::path(input).stem().string(), FaceSample{read_image(input, gc.image_size),
                                                                        AgeGroup::Under31, attrs, 0});
    }
    torch::NoGradGuard no_grad;
    for (const auto& [name, s] : items) {
        auto alpha = torch::tensor(s.attributes, torch::kFloat32).reshape({1, gc.attr_dim});
        auto res = g->forward(s.image.unsqueeze(0), alpha);
        write_image(res.output[0].clamp(-1, 1), out / "samples" / (name + ".png"));
        if (res.mask.defined()) {
            eval::emit_attention({s.image}, {res.mask[0]}, {res.output[0]}, out / "samples" / (name + "_attention.png"));
        }
    }
    std::cout << "generated " << items.size() << " images toward " << to_string(checkpoint_target(ckpt)) << '\n';
    return kExitOk;
}

int cmd_eval(const CommonFlags& f, const std::vector<std::string>& ckpts) {
    auto cfg = resolve(f);
    cfg.validate();
    auto data = load_data(cfg);
    const fs::path out = f.out;
    eval::EvalReport report;
    const auto est = eval::Estimators::oracle(cfg.generator.attr_dim);
    std::vector<std::vector<torch::Tensor>> rows;
    for (const auto& path : ckpts) {
        auto ckpt = load_checkpoint(path);
        const auto target = checkpoint_target(ckpt);
        auto g = generator_from_checkpoint(ckpt);
        auto set = eval::generate_for_group(g, data, target, cfg.eval.max_samples);
        report.groups[target] = eval::evaluate_group(set, est, cfg.eval.identity_threshold);
        const auto n = std::min<size_t>(static_cast<size_t>(cfg.eval.grid_rows), set.inputs.size());
        rows.resize(std::max(rows.size(), n));
        for (size_t i = 0; i < n; ++i) {
            if (rows[i].empty()) rows[i].push_back(set.inputs[i]);
            rows[i].push_back(set.outputs[i]);
        }
    }
    write_json(report.to_json(), out / "report.json");
    {
        std::ofstream t(out / "report.txt");
        t << report.table();
    }
    if (!rows.empty()) eval::emit_grid(rows, out / "samples" / "grid.png");
    save_run_config(cfg, out / "config.json");
    std::cout << report.table();
    return kExitOk;
}

int cmd_wpt(const std::string& input, const std::string& out_dir, int levels, const std::string& filter) {
    auto image = read_image(input);
    const auto filters = wpt::filter_by_name(filter);
    auto pyr = wpt::wpt_decompose(image.to(torch::kFloat64), levels, filters);
    const fs::path out = out_dir;
    static const char* names[] = {"LL", "LH", "HL", "HH"};
    json manifest = {{"input", input}, {"levels", levels}, {"filter", filters.name},
                     {"order", "depth-first LL,LH,HL,HH per input channel"}, {"subbands", json::array()}};
    const auto& deep = pyr.levels.back();
    const auto per_channel = deep.size(0) / 3;
    for (int64_t ch = 0; ch < deep.size(0); ++ch) {
        std::string path = "c" + std::to_string(ch / per_channel);
        for (int64_t rem = ch % per_channel, div = per_channel / 4; div >= 1; rem %= div, div /= 4) {
            path += std::string("_") + names[rem / div];
            if (div == 1) break;
        }
        const auto file = "subband_" + std::to_string(ch) + "_" + path + ".png";
        write_mat(normalized_gray8(deep[ch]), out / file);
        manifest["subbands"].push_back({{"channel", ch},
                                        {"path", path},
                                        {"file", file},
                                        {"energy", deep[ch].pow(2).sum().item<double>()}});
    }
    write_json(manifest, out / "manifest.json");
    std::cout << "wrote " << deep.size(0) << " subbands of size " << deep.size(1) << "x" << deep.size(2) << '\n';
    return kExitOk;
}

std::vector<float> parse_attrs(const std::string& s) {
    std::vector<float> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok == "0" || tok == "1") {
            v.push_back(tok == "1" ? 1.0f : 0.0f);
        } else {
            throw ArgumentError("--attrs expects comma-separated 0/1 bits, got '" + tok + "'");
        }
    }
    return v;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"Attribute-aware attentional face aging on desk-scale data", "a3gan"};
    app.require_subcommand(1);

    CommonFlags synth_f, train_f, ablate_f, eval_f;
    auto* synth = app.add_subcommand("synth-data", "Write a procedural synthetic face dataset");
    add_common(synth, synth_f, false);

    std::string resume;
    auto* train = app.add_subcommand("train", "Train one target-group model");
    add_common(train, train_f, true);
    train->add_option("--resume", resume, "Continue from a checkpoint");

    std::string variant;
    auto* ablate = app.add_subcommand("ablate", "Train an ablation preset");
    add_common(ablate, ablate_f, true);
    ablate->add_option("--variant", variant, "full | baseline | no-fae | no-wmd | no-am")->required();

    std::string gen_ckpt, gen_input, gen_out, gen_attrs;
    auto* generate = app.add_subcommand("generate", "Age faces with a trained checkpoint");
    generate->add_option("--ckpt", gen_ckpt, "Checkpoint")->required();
    generate->add_option("--input", gen_input, "Image file or dataset directory with manifest.csv")->required();
    generate->add_option("--out", gen_out, "Output directory")->required();
    generate->add_option("--attrs", gen_attrs, "Attribute bits for a single image, e.g. 1,0");

    std::vector<std::string> eval_ckpts;
    auto* evaluate = app.add_subcommand("eval", "Score checkpoints with the oracle protocols");
    add_common(evaluate, eval_f, false);
    evaluate->add_option("--ckpt", eval_ckpts, "One checkpoint per target group")->required();

    std::string wpt_input, wpt_out, wpt_filter = "haar";
    int wpt_levels = 2;
    auto* wptc = app.add_subcommand("wpt", "Write the packet subbands of an image");
    wptc->add_option("--input", wpt_input, "Image file")->required();
    wptc->add_option("--out", wpt_out, "Output directory")->required();
    wptc->add_option("--levels", wpt_levels, "Decomposition depth");
    wptc->add_option("--filter", wpt_filter, "haar | db2");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_f);
        if (train->parsed()) return cmd_train(train_f, {}, resume);
        if (ablate->parsed()) return cmd_train(ablate_f, variant, {});
        if (generate->parsed()) {
            return cmd_generate(gen_ckpt, gen_input, gen_out, gen_attrs.empty() ? std::vector<float>{} : parse_attrs(gen_attrs));
        }
        if (evaluate->parsed()) return cmd_eval(eval_f, eval_ckpts);
        if (wptc->parsed()) return cmd_wpt(wpt_input, wpt_out, wpt_levels, wpt_filter);
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("a3gan");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace a3gan::cli
