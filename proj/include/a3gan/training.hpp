#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "a3gan/checkpoint.hpp"
#include "a3gan/data.hpp"
#include "a3gan/discriminator.hpp"
#include "a3gan/embedder.hpp"
#include "a3gan/generator.hpp"
#include "a3gan/losses.hpp"

namespace a3gan {

struct TrainConfig {
    double learning_rate = 1e-4;
    int64_t batch_size = 16;
    int64_t epochs = 30;
    /// Pixel term active on generator iterations g with g % period == 0 (g counts from 1).
    int64_t pixel_loss_period = 5;
    int64_t identity_loss_period = 1;
    LossWeights weights;
    int64_t d_steps_per_g = 1;
    double beta1 = 0.5;
    double beta2 = 0.999;
    uint64_t seed = 0;
    AgeGroup target_group = AgeGroup::G51Plus;
    Profile profile = Profile::Desk64;
    /// Fraction of the run over which lambda_att ramps from 0 to its maximum.
    double lambda_att_horizon = 1.0;
    /// Write a checkpoint every this many generator iterations (0: final only).
    int64_t checkpoint_interval = 0;
    /// Draw old faces with the young faces' attributes when possible.
    bool match_attributes = true;
    /// Single-threaded kernels for bit-exact reproducibility.
    bool deterministic = true;

    void validate() const;
};

/// One row of the metrics log.
struct LossRecord {
    int64_t step = 0;
    double adv_att = 0;
    double adv_auth = 0;
    double gp = 0;
    double adv_g = 0;
    double id = 0;
    double pix = 0;
    double lambda_att = 0;
};

struct DStepResult {
    double adv_att = 0, adv_auth = 0, gp = 0, total = 0;
};

struct GStepResult {
    double adv_g = 0, id = 0, pix = 0, total = 0;
    bool pixel_applied = false;
};

/// Everything that changes during training. The training loop is its only
/// writer.
class TrainingState {
public:
    TrainingState(GeneratorConfig g, DiscriminatorConfig d, TrainConfig t,
                  std::shared_ptr<const FeatureEmbedder> embedder);

    Generator generator;
    Discriminator discriminator;
    std::shared_ptr<const FeatureEmbedder> embedder;
    TrainConfig config;
    std::unique_ptr<torch::optim::Adam> opt_g;
    std::unique_ptr<torch::optim::Adam> opt_d;
    /// Completed generator iterations.
    int64_t step = 0;
    /// Planned generator iterations for the run (fixes the lambda_att ramp).
    int64_t total_steps = 0;

    Checkpoint to_checkpoint() const;
    /// Rebuilds networks, optimizer moments and the step counter.
    static TrainingState from_checkpoint(const Checkpoint& ckpt, std::shared_ptr<const FeatureEmbedder> embedder);

    double lambda_att_at(int64_t step) const;
};

/// One critic update on lambda_att * L_att + L_auth + gradient penalty.
/// Fakes come from the generator without tracking its gradients.
DStepResult train_step_D(TrainingState& state, const torch::Tensor& young, const torch::Tensor& young_alpha,
                         const torch::Tensor& old, const torch::Tensor& old_alpha, const torch::Tensor& alpha_bar,
                         double lambda_att, torch::Generator gen);

/// One generator update on L_adv_G + lambda_id * L_id + lambda_pix * L_pix,
/// the pixel term only when g_iter is a multiple of the pixel period.
GStepResult train_step_G(TrainingState& state, const torch::Tensor& young, const torch::Tensor& young_alpha,
                         int64_t g_iter);

/// Appends rows to `<dir>/logs/metrics.csv`, flushing after each row.
class MetricsLog {
public:
    MetricsLog() = default;
    explicit MetricsLog(const std::filesystem::path& path, bool append = false);
    void write(const LossRecord& r);
    bool is_open() const { return out_.is_open(); }

    static std::string header();
    static std::string format(const LossRecord& r);

private:
    std::ofstream out_;
    std::filesystem::path path_;
};

struct TrainResult {
    std::vector<LossRecord> log;
    Checkpoint checkpoint;
};

/// Generator iterations of a full run: epochs * ceil(|30-| / batch).
int64_t planned_iterations(const TrainConfig& cfg, const Dataset& data);

/// Continues `state` from state.step up to state.total_steps (or `stop_at`
/// when non-negative). With a non-empty `out_dir` writes checkpoints under
/// `ckpt/` and the metrics log under `logs/`.
TrainResult run_training(TrainingState& state, const Dataset& data, const std::filesystem::path& out_dir = {},
                         int64_t stop_at = -1);

/// Fresh run from configuration.
TrainResult train(const GeneratorConfig& g, const DiscriminatorConfig& d, const TrainConfig& t, const Dataset& data,
                  std::shared_ptr<const FeatureEmbedder> embedder, const std::filesystem::path& out_dir = {});

std::vector<LossRecord> read_metrics(const std::filesystem::path& path);

}  // namespace a3gan
