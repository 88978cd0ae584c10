#include "a3gan/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <opencv2/imgproc.hpp>

#include "a3gan/errors.hpp"
#include "a3gan/image_io.hpp"
#include "a3gan/wpt.hpp"

namespace a3gan::eval {

namespace {

torch::Tensor as_chw_double(const torch::Tensor& image, const char* who) {
    if (image.dim() != 3) throw DimensionError(std::string(who) + ": expected a [C,H,W] image");
    return image.detach().to(torch::kFloat64);
}

/// Mean square over the channels of `level` whose index is not a multiple of `stride`.
double detail_mean_square(const torch::Tensor& level, int64_t stride) {
    const auto c = level.size(0);
    auto keep = torch::arange(c, torch::kInt64).remainder(stride).ne(0);
    return level.index({keep}).pow(2).mean().item<double>();
}

/// Level-2 LL planes ([C, H/4, W/4]).
torch::Tensor coarse_ll(const torch::Tensor& image) {
    auto pyr = wpt::wpt_decompose(image, 2, wpt::haar());
    const auto& l2 = pyr.levels[2];
    return l2.index({torch::arange(0, l2.size(0), 16, torch::kInt64)});
}

void require_same_count(size_t a, size_t b, const char* who) {
    if (a != b) throw ArgumentError(std::string(who) + ": inputs and outputs differ in count");
}

}  // namespace

double oracle_age_score(const torch::Tensor& image) {
    auto pyr = wpt::wpt_decompose(as_chw_double(image, "oracle_age_score"), 2, wpt::haar());
    return 0.5 * (detail_mean_square(pyr.levels[1], 4) + detail_mean_square(pyr.levels[2], 16));
}

AttributeReading oracle_attribute_classify(const torch::Tensor& image, int64_t attr_dim) {
    auto x = as_chw_double(image, "oracle_attribute_classify");
    if (x.size(0) != 3) throw DimensionError("oracle_attribute_classify: expected 3 channels");
    AttributeReading out;
    out.bits.assign(static_cast<size_t>(attr_dim), 0.0f);
    if (attr_dim == 0) return out;

    const double hue = 0.5 * (x[0] - x[2]).mean().item<double>();
    if (std::abs(hue) < 0.5 * SynthGeometry::kHueBias) {
        out.low_confidence = true;
        return out;
    }
    out.bits[0] = hue > 0 ? 1.0f : 0.0f;

    const auto s = x.size(1);
    auto luminance = x.mean(0);
    for (int64_t bit = 1; bit < attr_dim; ++bit) {
        const auto [r0, c0, side] = SynthGeometry::corner_block(s, bit);
        const double m = luminance.slice(0, r0, r0 + side).slice(1, c0, c0 + side).mean().item<double>();
        out.bits[static_cast<size_t>(bit)] = m > 0 ? 1.0f : 0.0f;
        if (std::abs(m) < 0.5 * SynthGeometry::kCornerLevel) out.low_confidence = true;
    }
    return out;
}

double oracle_identity_score(const torch::Tensor& a, const torch::Tensor& b) {
    auto la = coarse_ll(as_chw_double(a, "oracle_identity_score"));
    auto lb = coarse_ll(as_chw_double(b, "oracle_identity_score"));
    if (!la.sizes().equals(lb.sizes())) throw DimensionError("oracle_identity_score: image shapes differ");
    la = la - la.mean({1, 2}, true);
    lb = lb - lb.mean({1, 2}, true);
    const double na = la.pow(2).sum().item<double>();
    const double nb = lb.pow(2).sum().item<double>();
    if (na <= 0 || nb <= 0) return 0.0;
    return std::clamp((la * lb).sum().item<double>() / std::sqrt(na * nb), -1.0, 1.0);
}

AgeEstimator oracle_age_estimator() { return [](const torch::Tensor& x) { return oracle_age_score(x); }; }

AttributeClassifier oracle_attribute_classifier(int64_t attr_dim) {
    return [attr_dim](const torch::Tensor& x) { return oracle_attribute_classify(x, attr_dim).bits; };
}

IdentityScorer oracle_identity_scorer() {
    return [](const torch::Tensor& a, const torch::Tensor& b) { return oracle_identity_score(a, b); };
}

Summary summarize(const std::vector<double>& values) {
    Summary s;
    s.count = static_cast<int64_t>(values.size());
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size()));
    return s;
}

AgeSection eval_age(const std::vector<torch::Tensor>& outputs, const std::vector<torch::Tensor>& references,
                    const AgeEstimator& estimator) {
    std::vector<double> o, r;
    o.reserve(outputs.size());
    r.reserve(references.size());
    for (const auto& x : outputs) o.push_back(estimator(x));
    for (const auto& x : references) r.push_back(estimator(x));
    AgeSection sec{summarize(o), summarize(r), 0.0};
    sec.difference = sec.outputs.mean - sec.references.mean;
    return sec;
}

AttributeSection eval_attributes(const std::vector<torch::Tensor>& inputs, const std::vector<torch::Tensor>& outputs,
                                 const AttributeClassifier& classifier) {
    require_same_count(inputs.size(), outputs.size(), "eval_attributes");
    AttributeSection sec;
    sec.count = static_cast<int64_t>(inputs.size());
    std::vector<int64_t> agree;
    for (size_t i = 0; i < inputs.size(); ++i) {
        const auto a = classifier(inputs[i]);
        const auto b = classifier(outputs[i]);
        if (a.size() != b.size()) throw ValidationError("eval_attributes: classifier returned ragged vectors");
        if (agree.empty()) agree.assign(a.size(), 0);
        if (a.size() != agree.size()) throw ValidationError("eval_attributes: classifier returned ragged vectors");
        for (size_t k = 0; k < a.size(); ++k) agree[k] += (a[k] >= 0.5f) == (b[k] >= 0.5f) ? 1 : 0;
    }
    for (auto n : agree) sec.rates.push_back(100.0 * static_cast<double>(n) / static_cast<double>(sec.count));
    return sec;
}

IdentitySection identity_from_scores(const std::vector<double>& scores, double threshold) {
    IdentitySection sec;
    sec.scores = summarize(scores);
    sec.threshold = threshold;
    if (scores.empty()) return sec;
    int64_t above = 0;
    for (double s : scores) above += s > threshold ? 1 : 0;
    sec.rate = 100.0 * static_cast<double>(above) / static_cast<double>(scores.size());
    return sec;
}

IdentitySection eval_identity(const std::vector<torch::Tensor>& inputs, const std::vector<torch::Tensor>& outputs,
                              const IdentityScorer& scorer, double threshold) {
    require_same_count(inputs.size(), outputs.size(), "eval_identity");
    std::vector<double> scores;
    scores.reserve(inputs.size());
    for (size_t i = 0; i < inputs.size(); ++i) scores.push_back(scorer(inputs[i], outputs[i]));
    return identity_from_scores(scores, threshold);
}

// --- closed-loop runs --------------------------------------------------------

GeneratedSet generate_for_group(Generator& generator, const Dataset& data, AgeGroup target, int64_t max_samples,
                                int64_t batch) {
    if (batch < 1) throw ArgumentError("generate_for_group: batch must be >= 1");
    GeneratedSet set;
    set.target = target;
    auto young = data.group_indices(AgeGroup::Under31);
    if (max_samples > 0 && static_cast<size_t>(max_samples) < young.size()) young.resize(static_cast<size_t>(max_samples));
    if (young.empty()) throw DataError("evaluation: the 30- group is empty");

    torch::NoGradGuard no_grad;
    const bool was_training = generator->is_training();
    generator->eval();
    for (size_t i = 0; i < young.size(); i += static_cast<size_t>(batch)) {
        const auto n = std::min(young.size() - i, static_cast<size_t>(batch));
        auto [images, alpha] = data.stack(std::span<const size_t>(young.data() + i, n));
        auto out = generator->forward(images, alpha);
        for (int64_t b = 0; b < static_cast<int64_t>(n); ++b) {
            set.inputs.push_back(images[b]);
            set.outputs.push_back(out.output[b].clamp(-1, 1));
            if (out.mask.defined()) set.masks.push_back(out.mask[b]);
        }
    }
    generator->train(was_training);
    for (auto idx : data.group_indices(target)) set.references.push_back(data[idx].image);
    return set;
}

Estimators Estimators::oracle(int64_t attr_dim) {
    return {oracle_age_estimator(), oracle_attribute_classifier(attr_dim), oracle_identity_scorer()};
}

GroupReport evaluate_group(const GeneratedSet& set, const Estimators& est, double threshold) {
    GroupReport r;
    r.evaluated = true;
    r.age = eval_age(set.outputs, set.references, est.age);
    r.attributes = eval_attributes(set.inputs, set.outputs, est.attributes);
    r.identity = eval_identity(set.inputs, set.outputs, est.identity, threshold);
    return r;
}

double leakage_outside(const std::vector<torch::Tensor>& inputs, const std::vector<torch::Tensor>& outputs,
                       const torch::Tensor& texture_mask) {
    require_same_count(inputs.size(), outputs.size(), "leakage_outside");
    if (inputs.empty()) throw ArgumentError("leakage_outside: no images");
    auto keep = texture_mask.to(torch::kFloat64).eq(0);
    double total = 0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        auto diff = (outputs[i].to(torch::kFloat64) - inputs[i].to(torch::kFloat64)).abs();
        total += diff.index({torch::indexing::Slice(), keep}).mean().item<double>();
    }
    return total / static_cast<double>(inputs.size());
}

// --- report ------------------------------------------------------------------

EvalReport::EvalReport() {
    for (auto g : kTargetGroups) groups[g] = GroupReport{};
}

namespace {

nlohmann::json summary_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.std}, {"count", s.count}}; }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

const char* report_key(AgeGroup g) {
    switch (g) {
        case AgeGroup::G31_40: return "G31_40";
        case AgeGroup::G41_50: return "G41_50";
        default: return "G51Plus";
    }
}

std::string pm(const Summary& s, const char* f = "%.4g") { return fmt(f, s.mean) + " +/- " + fmt(f, s.std); }

}  // namespace

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["estimator"] = estimator;
    auto& gj = j["groups"];
    gj = nlohmann::json::object();
    for (const auto& [g, r] : groups) {
        nlohmann::json e;
        e["label"] = to_string(g);
        e["evaluated"] = r.evaluated;
        if (r.evaluated) {
            e["age"] = {{"outputs", summary_json(r.age.outputs)},
                        {"generic", summary_json(r.age.references)},
                        {"difference", r.age.difference}};
            e["attributes"] = {{"preservation_rate_percent", r.attributes.rates}, {"count", r.attributes.count}};
            e["verification"] = {{"confidence", summary_json(r.identity.scores)},
                                 {"threshold", r.identity.threshold},
                                 {"rate_percent", r.identity.rate}};
        }
        gj[report_key(g)] = e;
    }
    return j;
}

std::string EvalReport::table() const {
    std::ostringstream os;
    os << "Age estimation (" << estimator << " scale)\n";
    os << "  group   synthesized              generic                  difference\n";
    for (const auto& [g, r] : groups) {
        os << "  " << to_string(g) << std::string(8 - to_string(g).size(), ' ');
        if (!r.evaluated) {
            os << "not evaluated\n";
            continue;
        }
        auto a = pm(r.age.outputs), b = pm(r.age.references);
        os << a << std::string(a.size() < 25 ? 25 - a.size() : 1, ' ') << b
           << std::string(b.size() < 25 ? 25 - b.size() : 1, ' ') << fmt("%+.4g", r.age.difference) << '\n';
    }
    os << "\nFace verification\n";
    os << "  group   confidence               rate (%)\n";
    for (const auto& [g, r] : groups) {
        if (!r.evaluated) continue;
        auto a = pm(r.identity.scores);
        os << "  " << to_string(g) << std::string(8 - to_string(g).size(), ' ') << a
           << std::string(a.size() < 25 ? 25 - a.size() : 1, ' ') << fmt("%.2f", r.identity.rate) << '\n';
    }
    os << "\nAttribute preservation (%)\n";
    for (const auto& [g, r] : groups) {
        if (!r.evaluated) continue;
        os << "  " << to_string(g) << std::string(8 - to_string(g).size(), ' ');
        for (size_t k = 0; k < r.attributes.rates.size(); ++k) {
            os << "attr" << k << " " << fmt("%.2f", r.attributes.rates[k]) << "  ";
        }
        os << '\n';
    }
    return os.str();
}

// --- emitters ----------------------------------------------------------------

namespace {

cv::Mat mask_tile(const torch::Tensor& mask) {
    auto m = mask.detach().to(torch::kFloat32);
    while (m.dim() > 2) m = m.squeeze(0);
    if (m.dim() != 2) throw DimensionError("emit_attention: mask must be [1,H,W] or [H,W]");
    auto rgb = (m.clamp(0, 1) * 2 - 1).unsqueeze(0).expand({3, m.size(0), m.size(1)});
    return to_bgr8(rgb);
}

cv::Mat compose(const std::vector<std::vector<cv::Mat>>& rows, const char* who) {
    if (rows.empty()) throw ArgumentError(std::string(who) + ": nothing to draw");
    const auto cols = rows.front().size();
    if (cols == 0) throw ArgumentError(std::string(who) + ": empty row");
    const int th = rows.front().front().rows, tw = rows.front().front().cols;
    for (const auto& row : rows) {
        if (row.size() != cols) throw ArgumentError(std::string(who) + ": rows differ in length");
        for (const auto& t : row) {
            if (t.rows != th || t.cols != tw) throw DimensionError(std::string(who) + ": tiles differ in size");
        }
    }
    const int n_cols = static_cast<int>(cols), n_rows = static_cast<int>(rows.size());
    cv::Mat canvas(n_rows * th + (n_rows + 1) * kGridMargin, n_cols * tw + (n_cols + 1) * kGridMargin, CV_8UC3,
                   cv::Scalar(255, 255, 255));
    for (int r = 0; r < n_rows; ++r) {
        for (int c = 0; c < n_cols; ++c) {
            const cv::Rect roi(kGridMargin + c * (tw + kGridMargin), kGridMargin + r * (th + kGridMargin), tw, th);
            rows[static_cast<size_t>(r)][static_cast<size_t>(c)].copyTo(canvas(roi));
        }
    }
    return canvas;
}

}  // namespace

cv::Mat compose_grid(const std::vector<std::vector<torch::Tensor>>& rows) {
    std::vector<std::vector<cv::Mat>> tiles;
    for (const auto& row : rows) {
        std::vector<cv::Mat> t;
        for (const auto& x : row) t.push_back(to_bgr8(x));
        tiles.push_back(std::move(t));
    }
    return compose(tiles, "emit_grid");
}

void emit_grid(const std::vector<std::vector<torch::Tensor>>& rows, const std::filesystem::path& path) {
    write_mat(compose_grid(rows), path);
}

cv::Mat compose_attention(const std::vector<torch::Tensor>& inputs, const std::vector<torch::Tensor>& masks,
                          const std::vector<torch::Tensor>& outputs) {
    if (inputs.size() != masks.size() || inputs.size() != outputs.size()) {
        throw ArgumentError("emit_attention: inputs, masks and outputs differ in count");
    }
    std::vector<std::vector<cv::Mat>> tiles;
    for (size_t i = 0; i < inputs.size(); ++i) {
        tiles.push_back({to_bgr8(inputs[i]), mask_tile(masks[i]), to_bgr8(outputs[i])});
    }
    return compose(tiles, "emit_attention");
}

void emit_attention(const std::vector<torch::Tensor>& inputs, const std::vector<torch::Tensor>& masks,
                    const std::vector<torch::Tensor>& outputs, const std::filesystem::path& path) {
    write_mat(compose_attention(inputs, masks, outputs), path);
}

}  // namespace a3gan::eval
