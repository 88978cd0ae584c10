#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "a3gan/random.hpp"

namespace a3gan {

enum class AgeGroup { Under31 = 0, G31_40 = 1, G41_50 = 2, G51Plus = 3 };

inline constexpr std::array<AgeGroup, 4> kAgeGroups{AgeGroup::Under31, AgeGroup::G31_40,
                                                    AgeGroup::G41_50, AgeGroup::G51Plus};
inline constexpr std::array<AgeGroup, 3> kTargetGroups{AgeGroup::G31_40, AgeGroup::G41_50,
                                                       AgeGroup::G51Plus};

/// "30-", "31-40", "41-50", "51+".
std::string to_string(AgeGroup g);
/// Short identifier usable in file names and flags: "30-", "31-40", "41-50", "51plus".
std::string group_key(AgeGroup g);
/// Accepts the display names, the flag spellings and the enum names.
AgeGroup parse_age_group(std::string_view s);
/// Bins an age in years (<=30, 31-40, 41-50, >=51).
AgeGroup age_to_group(int age);
/// An age inside the group, used when exporting manifests.
int representative_age(AgeGroup g);

struct FaceSample {
    torch::Tensor image;  // [3, S, S] float32 in [-1, 1]
    AgeGroup age_group = AgeGroup::Under31;
    std::vector<float> attributes;
    int64_t identity = 0;
};

/// Immutable collection of samples with per-group indices.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<FaceSample> samples, int64_t image_size, int64_t attr_dim);

    const std::vector<FaceSample>& samples() const { return samples_; }
    const FaceSample& operator[](size_t i) const { return samples_[i]; }
    size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }
    int64_t image_size() const { return image_size_; }
    int64_t attr_dim() const { return attr_dim_; }
    const std::vector<size_t>& group_indices(AgeGroup g) const {
        return by_group_[static_cast<size_t>(g)];
    }

    /// Stacks the listed samples into [B, 3, S, S] images and [B, N] attributes.
    std::pair<torch::Tensor, torch::Tensor> stack(std::span<const size_t> indices) const;

private:
    std::vector<FaceSample> samples_;
    int64_t image_size_ = 0;
    int64_t attr_dim_ = 0;
    std::array<std::vector<size_t>, 4> by_group_;
};

// --- procedural synthetic faces -------------------------------------------

/// Parameters of the synthetic aging family. Each image is a smooth
/// low-frequency identity pattern, attribute markers (bit 0: sign of a global
/// red/blue bias; bits 1..4: polarity of a corner block) and, inside two fixed
/// bands, horizontal one-pixel "wrinkle" lines whose row density grows with
/// the age group.
struct SynthSpec {
    uint64_t seed = 7;
    int64_t n_identities = 10;
    int64_t samples_per_identity_per_group = 2;
    int64_t image_size = 32;
    int64_t attr_dim = 2;
    std::array<double, 4> texture_density_per_group{0.05, 0.25, 0.45, 0.65};

    void validate() const;
};

/// Marker geometry and strengths shared by the generator and the oracles.
struct SynthGeometry {
    static constexpr double kHueBias = 0.12;
    static constexpr double kCornerLevel = 0.7;
    static constexpr double kLineDepth = 0.4;
    static constexpr double kIdentityAmplitude = 0.33;
    static constexpr double kChromaAmplitude = 0.1;
    static constexpr int64_t kMaxAttributes = 5;

    /// [S, S] 0/1 mask of the wrinkle bands.
    static torch::Tensor texture_mask(int64_t image_size);
    /// Top-left (row, col) and side of the corner block encoding attribute `bit` (>= 1).
    static std::array<int64_t, 3> corner_block(int64_t image_size, int64_t bit);
};

/// Handle given to evaluation code: knows where texture may appear.
struct SynthOracle {
    SynthSpec spec;
    torch::Tensor texture_mask() const { return SynthGeometry::texture_mask(spec.image_size); }
};

struct SynthData {
    Dataset dataset;
    SynthOracle oracle;
};

/// Identity-major, then group, then repetition. Pure function of `spec`.
SynthData synth_generate(const SynthSpec& spec);

/// Attribute bits the generator assigns to `identity`.
std::vector<float> synth_identity_attributes(const SynthSpec& spec, int64_t identity);

/// Renders one image of `identity` with explicit attribute bits and texture
/// density; `variant` selects the wrinkle placement.
torch::Tensor synth_render(const SynthSpec& spec, int64_t identity, std::span<const float> attributes,
                           double texture_density, uint64_t variant);

// --- real image folders ----------------------------------------------------

/// Reads `manifest` (header `filename,age,attr_0..attr_{N-1},identity`),
/// loading images relative to `dir`, resizing to `image_size` and rescaling
/// to [-1, 1]. Decoding uses up to A3GAN_NUM_WORKERS threads.
Dataset load_manifest(const std::filesystem::path& dir, const std::filesystem::path& manifest,
                      int64_t image_size, int64_t attr_dim);

/// Writes `images/NNNNNN.png` plus `manifest.csv` under `dir`.
void export_dataset(const Dataset& dataset, const std::filesystem::path& dir);

// --- sampling --------------------------------------------------------------

struct TrainingBatch {
    torch::Tensor young;        // [B, 3, S, S] from the under-31 group
    torch::Tensor young_alpha;  // [B, N]
    torch::Tensor old;          // [B, 3, S, S] from the target group
    torch::Tensor old_alpha;    // [B, N]
    int64_t unmatched = 0;      // old rows drawn without an attribute match
};

/// Draws young and old samples independently. With `match_attributes`, each
/// old row is drawn among target-group samples sharing the paired young row's
/// attributes, falling back to an unconditional draw when none exists.
TrainingBatch sample_batch(const Dataset& dataset, AgeGroup target_group, int64_t batch, Rng& rng,
                           bool match_attributes = true);

/// Uniform draw among the 2^N - 1 binary vectors different from `alpha`
/// (entries of `alpha` are read as bits by thresholding at 0.5).
std::vector<float> sample_mismatched(std::span<const float> alpha, Rng& rng);
/// Row-wise sample_mismatched over a [B, N] tensor.
torch::Tensor sample_mismatched(const torch::Tensor& alpha, Rng& rng);

}  // namespace a3gan
