#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

#include "a3gan/data.hpp"
#include "a3gan/discriminator.hpp"
#include "a3gan/generator.hpp"
#include "a3gan/losses.hpp"
#include "a3gan/training.hpp"

namespace a3gan {

inline constexpr int kRunConfigSchemaVersion = 1;

struct DataOptions {
    /// "synthetic" or "manifest".
    std::string source = "synthetic";
    std::string manifest_dir;
    std::string manifest;
};

struct EvalOptions {
    double identity_threshold = 0.5;
    /// Under-31 samples evaluated per target group (0: all).
    int64_t max_samples = 0;
    /// Rows in the emitted image grid.
    int64_t grid_rows = 4;
};

/// Fully resolved configuration of one run. Serializes losslessly to JSON.
struct RunConfig {
    int schema_version = kRunConfigSchemaVersion;
    std::string variant = "full";
    std::string embedder = "fixed:0";
    DataOptions data;
    SynthSpec synth;
    GeneratorConfig generator;
    DiscriminatorConfig discriminator;
    TrainConfig train;
    EvalOptions eval;

    /// Desk or full-size network sizes with the synthetic image size matched.
    static RunConfig defaults(Profile p);
    void validate() const;
};

/// Ablation presets: "full", "baseline", "no-fae", "no-wmd", "no-am".
void apply_variant(RunConfig& cfg, std::string_view variant);
std::vector<std::string> variant_names();

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);
void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace a3gan
