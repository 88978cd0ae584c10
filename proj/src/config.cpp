#include "a3gan/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "a3gan/errors.hpp"

namespace a3gan {

using nlohmann::json;

namespace {

/// Reads known keys, keeps defaults for absent ones, rejects unknown ones.
class FieldReader {
public:
    FieldReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ValidationError("config: '" + where_ + "' must be an object");
    }

    template <class T>
    void get(const char* key, T& dst) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            j_.at(key).get_to(dst);
        } catch (const json::exception& e) {
            throw ValidationError("config: " + where_ + "." + key + ": " + e.what());
        }
    }

    void mark(const char* key) { seen_.insert(key); }

    void get_profile(const char* key, Profile& dst) {
        std::string s = to_string(dst);
        get(key, s);
        dst = parse_profile(s);
    }

    void get_group(const char* key, AgeGroup& dst) {
        std::string s = group_key(dst);
        get(key, s);
        dst = parse_age_group(s);
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) throw ValidationError("config: unknown key '" + where_ + "." + item.key() + "'");
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace

void to_json(json& j, const GeneratorConfig& c) {
    j = {{"image_size", c.image_size},       {"in_channels", c.in_channels},     {"base_channels", c.base_channels},
         {"n_resblocks", c.n_resblocks},     {"attr_dim", c.attr_dim},           {"embed_attributes", c.embed_attributes},
         {"use_attention", c.use_attention}, {"profile", to_string(c.profile)}};
}

void from_json(const json& j, GeneratorConfig& c) {
    FieldReader r(j, "generator");
    r.get("image_size", c.image_size);
    r.get("in_channels", c.in_channels);
    r.get("base_channels", c.base_channels);
    r.get("n_resblocks", c.n_resblocks);
    r.get("attr_dim", c.attr_dim);
    r.get("embed_attributes", c.embed_attributes);
    r.get("use_attention", c.use_attention);
    r.get_profile("profile", c.profile);
    r.finish();
}

void to_json(json& j, const DiscriminatorConfig& c) {
    j = {{"image_size", c.image_size},         {"in_channels", c.in_channels},       {"attr_dim", c.attr_dim},
         {"base_channels", c.base_channels},   {"n_post_layers", c.n_post_layers},   {"multi_pathway", c.multi_pathway},
         {"use_attributes", c.use_attributes}, {"filter", c.filter},                 {"profile", to_string(c.profile)},
         {"subband_order", "depth-first LL,LH,HL,HH"}};
}

void from_json(const json& j, DiscriminatorConfig& c) {
    FieldReader r(j, "discriminator");
    r.get("image_size", c.image_size);
    r.get("in_channels", c.in_channels);
    r.get("attr_dim", c.attr_dim);
    r.get("base_channels", c.base_channels);
    r.get("n_post_layers", c.n_post_layers);
    r.get("multi_pathway", c.multi_pathway);
    r.get("use_attributes", c.use_attributes);
    r.get("filter", c.filter);
    r.get_profile("profile", c.profile);
    std::string order = "depth-first LL,LH,HL,HH";
    r.get("subband_order", order);
    if (order != "depth-first LL,LH,HL,HH") throw ValidationError("config: unsupported subband_order '" + order + "'");
    r.finish();
}

void to_json(json& j, const LossWeights& w) {
    j = {{"lambda_att_max", w.lambda_att_max},
         {"lambda_pix", w.lambda_pix},
         {"lambda_id", w.lambda_id},
         {"lambda_gp", w.lambda_gp}};
}

void from_json(const json& j, LossWeights& w) {
    FieldReader r(j, "weights");
    r.get("lambda_att_max", w.lambda_att_max);
    r.get("lambda_pix", w.lambda_pix);
    r.get("lambda_id", w.lambda_id);
    r.get("lambda_gp", w.lambda_gp);
    r.finish();
}

void to_json(json& j, const TrainConfig& c) {
    j = {{"learning_rate", c.learning_rate},
         {"batch_size", c.batch_size},
         {"epochs", c.epochs},
         {"pixel_loss_period", c.pixel_loss_period},
         {"identity_loss_period", c.identity_loss_period},
         {"weights", c.weights},
         {"d_steps_per_g", c.d_steps_per_g},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"seed", c.seed},
         {"target_group", group_key(c.target_group)},
         {"profile", to_string(c.profile)},
         {"lambda_att_horizon", c.lambda_att_horizon},
         {"checkpoint_interval", c.checkpoint_interval},
         {"match_attributes", c.match_attributes},
         {"deterministic", c.deterministic}};
}

void from_json(const json& j, TrainConfig& c) {
    FieldReader r(j, "train");
    r.get("learning_rate", c.learning_rate);
    r.get("batch_size", c.batch_size);
    r.get("epochs", c.epochs);
    r.get("pixel_loss_period", c.pixel_loss_period);
    r.get("identity_loss_period", c.identity_loss_period);
    r.get("weights", c.weights);
    r.get("d_steps_per_g", c.d_steps_per_g);
    r.get("beta1", c.beta1);
    r.get("beta2", c.beta2);
    r.get("seed", c.seed);
    r.get_group("target_group", c.target_group);
    r.get_profile("profile", c.profile);
    r.get("lambda_att_horizon", c.lambda_att_horizon);
    r.get("checkpoint_interval", c.checkpoint_interval);
    r.get("match_attributes", c.match_attributes);
    r.get("deterministic", c.deterministic);
    r.finish();
}

void to_json(json& j, const SynthSpec& s) {
    j = {{"seed", s.seed},
         {"n_identities", s.n_identities},
         {"samples_per_identity_per_group", s.samples_per_identity_per_group},
         {"image_size", s.image_size},
         {"attr_dim", s.attr_dim},
         {"texture_density_per_group", s.texture_density_per_group}};
}

void from_json(const json& j, SynthSpec& s) {
    FieldReader r(j, "synth");
    r.get("seed", s.seed);
    r.get("n_identities", s.n_identities);
    r.get("samples_per_identity_per_group", s.samples_per_identity_per_group);
    r.get("image_size", s.image_size);
    r.get("attr_dim", s.attr_dim);
    r.get("texture_density_per_group", s.texture_density_per_group);
    r.finish();
}

void to_json(json& j, const RunConfig& c) {
    j = {{"schema_version", c.schema_version},
         {"variant", c.variant},
         {"embedder", c.embedder},
         {"data", {{"source", c.data.source}, {"manifest_dir", c.data.manifest_dir}, {"manifest", c.data.manifest}}},
         {"synth", c.synth},
         {"generator", c.generator},
         {"discriminator", c.discriminator},
         {"train", c.train},
         {"eval",
          {{"identity_threshold", c.eval.identity_threshold},
           {"max_samples", c.eval.max_samples},
           {"grid_rows", c.eval.grid_rows}}}};
}

void from_json(const json& j, RunConfig& c) {
    FieldReader r(j, "config");
    r.get("schema_version", c.schema_version);
    if (c.schema_version != kRunConfigSchemaVersion) {
        throw ValidationError("config: unsupported schema_version " + std::to_string(c.schema_version));
    }
    r.get("variant", c.variant);
    r.get("embedder", c.embedder);
    r.mark("data");
    if (j.contains("data")) {
        FieldReader d(j.at("data"), "data");
        d.get("source", c.data.source);
        d.get("manifest_dir", c.data.manifest_dir);
        d.get("manifest", c.data.manifest);
        d.finish();
    }
    r.get("synth", c.synth);
    r.get("generator", c.generator);
    r.get("discriminator", c.discriminator);
    r.get("train", c.train);
    r.mark("eval");
    if (j.contains("eval")) {
        FieldReader e(j.at("eval"), "eval");
        e.get("identity_threshold", c.eval.identity_threshold);
        e.get("max_samples", c.eval.max_samples);
        e.get("grid_rows", c.eval.grid_rows);
        e.finish();
    }
    r.finish();
}

RunConfig RunConfig::defaults(Profile p) {
    RunConfig c;
    c.generator = GeneratorConfig::for_profile(p, c.synth.attr_dim);
    c.discriminator = DiscriminatorConfig::for_profile(p, c.synth.attr_dim);
    c.synth.image_size = c.generator.image_size;
    c.train.profile = p;
    return c;
}

void RunConfig::validate() const {
    if (schema_version != kRunConfigSchemaVersion) throw ValidationError("config: unsupported schema_version");
    generator.validate();
    discriminator.validate();
    train.validate();
    if (data.source == "synthetic") {
        synth.validate();
        if (synth.image_size != generator.image_size) {
            throw ValidationError("config: synth.image_size must equal generator.image_size");
        }
        if (synth.attr_dim != generator.attr_dim) {
            throw ValidationError("config: synth.attr_dim must equal generator.attr_dim");
        }
    } else if (data.source == "manifest") {
        if (data.manifest.empty()) throw ValidationError("config: data.manifest is required for manifest data");
    } else {
        throw ValidationError("config: data.source must be 'synthetic' or 'manifest'");
    }
    if (generator.image_size != discriminator.image_size) {
        throw ValidationError("config: generator and discriminator image sizes differ");
    }
    if (generator.attr_dim != discriminator.attr_dim) {
        throw ValidationError("config: generator and discriminator attr_dim differ");
    }
    if (eval.identity_threshold < -1.0 || eval.identity_threshold > 1.0) {
        throw ValidationError("config: eval.identity_threshold must lie in [-1, 1]");
    }
    if (eval.max_samples < 0 || eval.grid_rows < 1) throw ValidationError("config: bad eval sample counts");
    const auto names = variant_names();
    if (std::find(names.begin(), names.end(), variant) == names.end()) {
        throw ValidationError("config: unknown variant '" + variant + "'");
    }
}

std::vector<std::string> variant_names() { return {"full", "baseline", "no-fae", "no-wmd", "no-am"}; }

void apply_variant(RunConfig& cfg, std::string_view variant) {
    auto& g = cfg.generator;
    auto& d = cfg.discriminator;
    g.embed_attributes = true;
    g.use_attention = true;
    d.use_attributes = true;
    d.multi_pathway = true;
    if (variant == "full") {
    } else if (variant == "baseline") {
        g.embed_attributes = false;
        g.use_attention = false;
        d.use_attributes = false;
        d.multi_pathway = false;
    } else if (variant == "no-fae") {
        g.embed_attributes = false;
        d.use_attributes = false;
    } else if (variant == "no-wmd") {
        d.multi_pathway = false;
    } else if (variant == "no-am") {
        g.use_attention = false;
    } else {
        throw ArgumentError("unknown variant '" + std::string(variant) + "' (full|baseline|no-fae|no-wmd|no-am)");
    }
    cfg.variant = std::string(variant);
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("config: '" + path.string() + "' is not valid JSON: " + e.what());
    }
    auto cfg = j.get<RunConfig>();
    cfg.validate();
    return cfg;
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("config: cannot write '" + path.string() + "'");
    out << json(cfg).dump(2) << '\n';
    if (!out) throw IoError("config: write to '" + path.string() + "' failed");
}

}  // namespace a3gan
