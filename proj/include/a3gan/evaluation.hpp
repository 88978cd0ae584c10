#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "json.hpp"

#include "a3gan/data.hpp"
#include "a3gan/generator.hpp"

namespace a3gan::eval {

// --- oracles for the synthetic family ---------------------------------------

/// Mean squared detail coefficient of the two finest Haar packet levels,
/// averaged over both levels. [3, S, S] input, S divisible by 4.
double oracle_age_score(const torch::Tensor& image);

struct AttributeReading {
    std::vector<float> bits;
    /// Set when a marker is too weak to read; a missing hue marker yields all zeros.
    bool low_confidence = false;
};

AttributeReading oracle_attribute_classify(const torch::Tensor& image, int64_t attr_dim);

/// Pearson correlation of the level-2 LL bands, centred per channel.
/// Returns 0 when either band is constant.
double oracle_identity_score(const torch::Tensor& a, const torch::Tensor& b);

using AgeEstimator = std::function<double(const torch::Tensor&)>;
using AttributeClassifier = std::function<std::vector<float>(const torch::Tensor&)>;
using IdentityScorer = std::function<double(const torch::Tensor&, const torch::Tensor&)>;

AgeEstimator oracle_age_estimator();
AttributeClassifier oracle_attribute_classifier(int64_t attr_dim);
IdentityScorer oracle_identity_scorer();

// --- protocols ---------------------------------------------------------------

/// Population mean and standard deviation.
struct Summary {
    double mean = 0;
    double std = 0;
    int64_t count = 0;
};

Summary summarize(const std::vector<double>& values);

struct AgeSection {
    Summary outputs;
    Summary references;
    /// outputs.mean - references.mean
    double difference = 0;
};

struct AttributeSection {
    /// Percentage per attribute.
    std::vector<double> rates;
    int64_t count = 0;
};

struct IdentitySection {
    Summary scores;
    double threshold = 0;
    /// Percentage of scores strictly above the threshold.
    double rate = 0;
};

AgeSection eval_age(const std::vector<torch::Tensor>& outputs, const std::vector<torch::Tensor>& references,
                    const AgeEstimator& estimator);

/// Compares the classified bits of each output with those of its input.
AttributeSection eval_attributes(const std::vector<torch::Tensor>& inputs, const std::vector<torch::Tensor>& outputs,
                                 const AttributeClassifier& classifier);

IdentitySection eval_identity(const std::vector<torch::Tensor>& inputs, const std::vector<torch::Tensor>& outputs,
                              const IdentityScorer& scorer, double threshold);
/// Same, from precomputed scores.
IdentitySection identity_from_scores(const std::vector<double>& scores, double threshold);

struct GroupReport {
    bool evaluated = false;
    AgeSection age;
    AttributeSection attributes;
    IdentitySection identity;
};

struct EvalReport {
    /// Keys are always exactly the three target groups.
    std::map<AgeGroup, GroupReport> groups;
    std::string estimator = "oracle";

    EvalReport();
    nlohmann::json to_json() const;
    /// Age, verification and attribute tables.
    std::string table() const;
};

// --- closed-loop runs --------------------------------------------------------

/// Under-31 inputs, their translations toward one group and that group's real
/// samples.
struct GeneratedSet {
    AgeGroup target = AgeGroup::G51Plus;
    std::vector<torch::Tensor> inputs;
    std::vector<torch::Tensor> outputs;
    /// Empty when the generator has no attention head.
    std::vector<torch::Tensor> masks;
    std::vector<torch::Tensor> references;
};

/// Runs `generator` in inference mode over the first `max_samples` under-31
/// samples (all when 0).
GeneratedSet generate_for_group(Generator& generator, const Dataset& data, AgeGroup target,
                                int64_t max_samples = 0, int64_t batch = 16);

struct Estimators {
    AgeEstimator age;
    AttributeClassifier attributes;
    IdentityScorer identity;

    static Estimators oracle(int64_t attr_dim);
};

GroupReport evaluate_group(const GeneratedSet& set, const Estimators& est, double threshold);

/// Mean |output - input| over pixels where `texture_mask` ([S, S]) is zero.
double leakage_outside(const std::vector<torch::Tensor>& inputs, const std::vector<torch::Tensor>& outputs,
                       const torch::Tensor& texture_mask);

// --- image emitters ----------------------------------------------------------

inline constexpr int kGridMargin = 4;

/// One row per subject: the input followed by its outputs. All tiles share one
/// size; rows may not be empty or ragged.
cv::Mat compose_grid(const std::vector<std::vector<torch::Tensor>>& rows);
void emit_grid(const std::vector<std::vector<torch::Tensor>>& rows, const std::filesystem::path& path);

/// Rows of (input, mask, output); the mask tile is gray with intensity M_A,
/// so attended regions appear dark.
cv::Mat compose_attention(const std::vector<torch::Tensor>& inputs, const std::vector<torch::Tensor>& masks,
                          const std::vector<torch::Tensor>& outputs);
void emit_attention(const std::vector<torch::Tensor>& inputs, const std::vector<torch::Tensor>& masks,
                    const std::vector<torch::Tensor>& outputs, const std::filesystem::path& path);

}  // namespace a3gan::eval
