#include "a3gan/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "a3gan/errors.hpp"
#include "a3gan/image_io.hpp"

namespace a3gan {

std::string to_string(AgeGroup g) {
    switch (g) {
        case AgeGroup::Under31: return "30-";
        case AgeGroup::G31_40: return "31-40";
        case AgeGroup::G41_50: return "41-50";
        case AgeGroup::G51Plus: return "51+";
    }
    return "?";
}

std::string group_key(AgeGroup g) { return g == AgeGroup::G51Plus ? "51plus" : to_string(g); }

AgeGroup parse_age_group(std::string_view s) {
    if (s == "30-" || s == "under31" || s == "Under31") return AgeGroup::Under31;
    if (s == "31-40" || s == "G31_40") return AgeGroup::G31_40;
    if (s == "41-50" || s == "G41_50") return AgeGroup::G41_50;
    if (s == "51+" || s == "51plus" || s == "G51Plus") return AgeGroup::G51Plus;
    throw ArgumentError("unknown age group '" + std::string(s) + "' (30-|31-40|41-50|51plus)");
}

AgeGroup age_to_group(int age) {
    if (age < 0) throw ValidationError("age must be >= 0, got " + std::to_string(age));
    if (age <= 30) return AgeGroup::Under31;
    if (age <= 40) return AgeGroup::G31_40;
    if (age <= 50) return AgeGroup::G41_50;
    return AgeGroup::G51Plus;
}

int representative_age(AgeGroup g) {
    switch (g) {
        case AgeGroup::Under31: return 25;
        case AgeGroup::G31_40: return 35;
        case AgeGroup::G41_50: return 45;
        case AgeGroup::G51Plus: return 60;
    }
    return 0;
}

Dataset::Dataset(std::vector<FaceSample> samples, int64_t image_size, int64_t attr_dim)
    : samples_(std::move(samples)), image_size_(image_size), attr_dim_(attr_dim) {
    for (size_t i = 0; i < samples_.size(); ++i) {
        by_group_[static_cast<size_t>(samples_[i].age_group)].push_back(i);
    }
}

std::pair<torch::Tensor, torch::Tensor> Dataset::stack(std::span<const size_t> indices) const {
    std::vector<torch::Tensor> images;
    auto alpha = torch::zeros({static_cast<int64_t>(indices.size()), attr_dim_});
    auto acc = alpha.accessor<float, 2>();
    for (size_t r = 0; r < indices.size(); ++r) {
        const auto& s = samples_.at(indices[r]);
        images.push_back(s.image);
        for (int64_t j = 0; j < attr_dim_; ++j) acc[static_cast<int64_t>(r)][j] = s.attributes[static_cast<size_t>(j)];
    }
    if (images.empty()) return {torch::empty({0, 3, image_size_, image_size_}), alpha};
    return {torch::stack(images), alpha};
}

// --- synthetic family ------------------------------------------------------

void SynthSpec::validate() const {
    if (n_identities < 1) throw ValidationError("synth: n_identities must be >= 1");
    if (samples_per_identity_per_group < 1) throw ValidationError("synth: samples_per_identity_per_group must be >= 1");
    if (image_size < 16 || image_size % 16 != 0) throw ValidationError("synth: image_size must be a multiple of 16");
    if (attr_dim < 0 || attr_dim > SynthGeometry::kMaxAttributes) {
        throw ValidationError("synth: attr_dim must be in [0, " + std::to_string(SynthGeometry::kMaxAttributes) + "]");
    }
    for (size_t g = 0; g < texture_density_per_group.size(); ++g) {
        const double d = texture_density_per_group[g];
        if (d < 0.0 || d > 1.0) throw ValidationError("synth: texture densities must lie in [0, 1]");
        if (g > 0 && !(d > texture_density_per_group[g - 1])) {
            throw ValidationError("synth: texture densities must be strictly increasing with age group");
        }
    }
}

torch::Tensor SynthGeometry::texture_mask(int64_t s) {
    auto m = torch::zeros({s, s});
    const auto c0 = s / 4, c1 = 3 * s / 4;
    m.slice(0, 3 * s / 16, 6 * s / 16).slice(1, c0, c1).fill_(1.0);
    m.slice(0, 10 * s / 16, 13 * s / 16).slice(1, c0, c1).fill_(1.0);
    return m;
}

std::array<int64_t, 3> SynthGeometry::corner_block(int64_t s, int64_t bit) {
    const auto side = std::max<int64_t>(1, s / 8);
    switch (bit) {
        case 1: return {0, 0, side};
        case 2: return {0, s - side, side};
        case 3: return {s - side, 0, side};
        case 4: return {s - side, s - side, side};
        default: throw ArgumentError("synth: no corner block for attribute " + std::to_string(bit));
    }
}

namespace {

constexpr uint64_t kStreamIdentity = 0x1D;
constexpr uint64_t kStreamAttributes = 0xA7;
constexpr uint64_t kStreamTexture = 0x7E;

struct Wave {
    double u, v, phase, amplitude;
};

std::vector<Wave> random_waves(Rng& rng, int count, double total_amplitude) {
    std::uniform_int_distribution<int> freq(-2, 2);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Wave> waves;
    double sum = 0;
    while (static_cast<int>(waves.size()) < count) {
        const int u = freq(rng), v = freq(rng);
        if (u == 0 && v == 0) continue;
        const double a = 0.5 + 0.5 * unit(rng);
        waves.push_back({static_cast<double>(u), static_cast<double>(v), 2 * std::numbers::pi * unit(rng), a});
        sum += a;
    }
    for (auto& w : waves) w.amplitude *= total_amplitude / sum;
    return waves;
}

double eval_waves(const std::vector<Wave>& waves, double y, double x, double size) {
    double acc = 0;
    for (const auto& w : waves) {
        acc += w.amplitude * std::cos(2 * std::numbers::pi * (w.u * y + w.v * x) / size + w.phase);
    }
    return acc;
}

}  // namespace

std::vector<float> synth_identity_attributes(const SynthSpec& spec, int64_t identity) {
    Rng rng(derive_seed(spec.seed, kStreamAttributes, static_cast<uint64_t>(identity)));
    std::bernoulli_distribution coin(0.5);
    std::vector<float> bits(static_cast<size_t>(spec.attr_dim));
    for (auto& b : bits) b = coin(rng) ? 1.0f : 0.0f;
    return bits;
}

torch::Tensor synth_render(const SynthSpec& spec, int64_t identity, std::span<const float> attributes,
                           double texture_density, uint64_t variant) {
    const auto s = spec.image_size;
    Rng id_rng(derive_seed(spec.seed, kStreamIdentity, static_cast<uint64_t>(identity)));
    const auto luminance = random_waves(id_rng, 5, SynthGeometry::kIdentityAmplitude);
    const auto chroma = random_waves(id_rng, 2, SynthGeometry::kChromaAmplitude);

    auto img = torch::zeros({3, s, s}, torch::kFloat64);
    auto px = img.accessor<double, 3>();
    const double size = static_cast<double>(s);
    for (int64_t y = 0; y < s; ++y) {
        for (int64_t x = 0; x < s; ++x) {
            const double l = eval_waves(luminance, double(y), double(x), size);
            const double c = eval_waves(chroma, double(y), double(x), size);
            px[0][y][x] = l + c;
            px[1][y][x] = l;
            px[2][y][x] = l - c;
        }
    }

    // Wrinkle lines: each band row carries a line with probability `texture_density`.
    Rng tex_rng(derive_seed(spec.seed, kStreamTexture, derive_seed(static_cast<uint64_t>(identity), variant)));
    std::bernoulli_distribution has_line(texture_density);
    const auto mask = SynthGeometry::texture_mask(s);
    const auto c0 = s / 4, c1 = 3 * s / 4;
    std::uniform_int_distribution<int64_t> jitter(0, std::max<int64_t>(0, (c1 - c0) / 8));
    for (int64_t y = 0; y < s; ++y) {
        if (mask[y][c0].item<float>() == 0.0f) continue;
        if (!has_line(tex_rng)) continue;
        const auto x0 = c0 + jitter(tex_rng), x1 = c1 - jitter(tex_rng);
        for (int64_t x = x0; x < x1; ++x) {
            for (int ch = 0; ch < 3; ++ch) px[ch][y][x] -= SynthGeometry::kLineDepth;
        }
    }

    for (size_t bit = 1; bit < attributes.size(); ++bit) {
        const auto [r0, k0, side] = SynthGeometry::corner_block(s, static_cast<int64_t>(bit));
        const double level = attributes[bit] >= 0.5f ? SynthGeometry::kCornerLevel : -SynthGeometry::kCornerLevel;
        img.slice(1, r0, r0 + side).slice(2, k0, k0 + side).fill_(level);
    }
    if (!attributes.empty()) {
        const double sign = attributes[0] >= 0.5f ? 1.0 : -1.0;
        img[0].add_(sign * SynthGeometry::kHueBias);
        img[2].sub_(sign * SynthGeometry::kHueBias);
    }
    return img.clamp_(-1.0, 1.0).to(torch::kFloat32);
}

SynthData synth_generate(const SynthSpec& spec) {
    spec.validate();
    std::vector<FaceSample> samples;
    samples.reserve(static_cast<size_t>(spec.n_identities * 4 * spec.samples_per_identity_per_group));
    for (int64_t id = 0; id < spec.n_identities; ++id) {
        const auto attrs = synth_identity_attributes(spec, id);
        for (auto g : kAgeGroups) {
            const auto gi = static_cast<size_t>(g);
            for (int64_t r = 0; r < spec.samples_per_identity_per_group; ++r) {
                const auto variant = static_cast<uint64_t>(gi * 1000003u + static_cast<uint64_t>(r));
                samples.push_back({synth_render(spec, id, attrs, spec.texture_density_per_group[gi], variant), g,
                                   attrs, id});
            }
        }
    }
    return {Dataset(std::move(samples), spec.image_size, spec.attr_dim), SynthOracle{spec}};
}

// --- manifests -------------------------------------------------------------

namespace {

std::string trim(std::string s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

int worker_count() {
    int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("A3GAN_NUM_WORKERS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return n;
}

struct ManifestRow {
    size_t line = 0;
    std::string filename;
    int age = 0;
    std::vector<float> attributes;
    int64_t identity = 0;
};

}  // namespace

Dataset load_manifest(const std::filesystem::path& dir, const std::filesystem::path& manifest,
                      int64_t image_size, int64_t attr_dim) {
    std::ifstream in(manifest);
    if (!in) throw IoError("manifest: cannot open '" + manifest.string() + "'");
    std::string line;
    std::vector<ManifestRow> rows;
    size_t lineno = 0;
    size_t expected_fields = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split_csv(line);
        if (expected_fields == 0) {
            const auto n_attr = static_cast<int64_t>(fields.size()) - 3;
            if (fields.size() < 3 || fields.front() != "filename" || fields[1] != "age" || fields.back() != "identity") {
                throw ValidationError("manifest: header must be filename,age,attr_0..attr_{N-1},identity");
            }
            if (n_attr != attr_dim) {
                throw ValidationError("manifest: header has " + std::to_string(n_attr) + " attribute columns, expected " +
                                      std::to_string(attr_dim));
            }
            expected_fields = fields.size();
            continue;
        }
        const std::string where = "manifest line " + std::to_string(lineno);
        if (fields.size() != expected_fields) {
            throw ValidationError(where + ": expected " + std::to_string(expected_fields) + " fields, got " +
                                  std::to_string(fields.size()));
        }
        ManifestRow row;
        row.line = lineno;
        row.filename = fields[0];
        try {
            row.age = std::stoi(fields[1]);
            for (int64_t j = 0; j < attr_dim; ++j) row.attributes.push_back(std::stof(fields[2 + static_cast<size_t>(j)]));
            row.identity = std::stoll(fields.back());
        } catch (const std::logic_error&) {
            throw ValidationError(where + ": non-numeric age, attribute or identity");
        }
        age_to_group(row.age);  // rejects negative ages
        for (float a : row.attributes) {
            if (a < 0.0f || a > 1.0f) throw ValidationError(where + ": attributes must lie in [0, 1]");
        }
        if (!std::filesystem::exists(dir / row.filename)) {
            throw IoError(where + ": missing image file '" + (dir / row.filename).string() + "'");
        }
        rows.push_back(std::move(row));
    }

    std::vector<FaceSample> samples(rows.size());
    auto load_range = [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            const auto& r = rows[i];
            auto img = read_image(dir / r.filename, image_size);
            samples[i] = {std::move(img), age_to_group(r.age), r.attributes, r.identity};
        }
    };
    const auto workers = static_cast<size_t>(worker_count());
    if (workers <= 1 || rows.size() < 2) {
        load_range(0, rows.size());
    } else {
        std::vector<std::future<void>> jobs;
        const size_t chunk = (rows.size() + workers - 1) / workers;
        for (size_t b = 0; b < rows.size(); b += chunk) {
            jobs.push_back(std::async(std::launch::async, load_range, b, std::min(rows.size(), b + chunk)));
        }
        for (auto& j : jobs) j.get();
    }
    return Dataset(std::move(samples), image_size, attr_dim);
}

void export_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "images");
    std::ofstream csv(dir / "manifest.csv");
    if (!csv) throw IoError("export: cannot write manifest in '" + dir.string() + "'");
    csv << "filename,age";
    for (int64_t j = 0; j < dataset.attr_dim(); ++j) csv << ",attr_" << j;
    csv << ",identity\n";
    for (size_t i = 0; i < dataset.size(); ++i) {
        const auto& s = dataset[i];
        std::ostringstream name;
        name << "images/" << std::setw(6) << std::setfill('0') << i << ".png";
        write_image(s.image, dir / name.str());
        csv << name.str() << ',' << representative_age(s.age_group);
        for (float a : s.attributes) csv << ',' << a;
        csv << ',' << s.identity << '\n';
    }
    csv.flush();
    if (!csv) throw IoError("export: write failed in '" + dir.string() + "'");
}

// --- sampling --------------------------------------------------------------

TrainingBatch sample_batch(const Dataset& dataset, AgeGroup target_group, int64_t batch, Rng& rng,
                           bool match_attributes) {
    if (batch < 1) throw ArgumentError("sample_batch: batch must be >= 1");
    const auto& young_idx = dataset.group_indices(AgeGroup::Under31);
    const auto& old_idx = dataset.group_indices(target_group);
    if (young_idx.empty()) throw DataError("sample_batch: the 30- group is empty");
    if (old_idx.empty()) throw DataError("sample_batch: the " + to_string(target_group) + " group is empty");

    std::map<std::vector<float>, std::vector<size_t>> old_by_attr;
    if (match_attributes) {
        for (auto i : old_idx) old_by_attr[dataset[i].attributes].push_back(i);
    }

    std::vector<size_t> young, old;
    int64_t unmatched = 0;
    std::uniform_int_distribution<size_t> pick_young(0, young_idx.size() - 1);
    std::uniform_int_distribution<size_t> pick_old(0, old_idx.size() - 1);
    for (int64_t b = 0; b < batch; ++b) {
        const auto y = young_idx[pick_young(rng)];
        young.push_back(y);
        if (match_attributes) {
            auto it = old_by_attr.find(dataset[y].attributes);
            if (it != old_by_attr.end()) {
                std::uniform_int_distribution<size_t> pick(0, it->second.size() - 1);
                old.push_back(it->second[pick(rng)]);
                continue;
            }
            ++unmatched;
        }
        old.push_back(old_idx[pick_old(rng)]);
    }
    TrainingBatch out;
    std::tie(out.young, out.young_alpha) = dataset.stack(young);
    std::tie(out.old, out.old_alpha) = dataset.stack(old);
    out.unmatched = unmatched;
    return out;
}

std::vector<float> sample_mismatched(std::span<const float> alpha, Rng& rng) {
    const auto n = alpha.size();
    if (n == 0) throw ArgumentError("sample_mismatched: no mismatched vector exists for N = 0");
    if (n > 62) throw ArgumentError("sample_mismatched: N too large");
    uint64_t code = 0;
    for (size_t j = 0; j < n; ++j) {
        if (alpha[j] >= 0.5f) code |= uint64_t{1} << j;
    }
    const uint64_t total = uint64_t{1} << n;
    std::uniform_int_distribution<uint64_t> pick(0, total - 2);
    uint64_t other = pick(rng);
    if (other >= code) ++other;
    std::vector<float> out(n);
    for (size_t j = 0; j < n; ++j) out[j] = ((other >> j) & 1u) ? 1.0f : 0.0f;
    return out;
}

torch::Tensor sample_mismatched(const torch::Tensor& alpha, Rng& rng) {
    auto a = alpha.to(torch::kFloat32).contiguous();
    if (a.dim() != 2) throw DimensionError("sample_mismatched: expected [B, N] attributes");
    auto out = torch::empty_like(a);
    const auto n = a.size(1);
    for (int64_t r = 0; r < a.size(0); ++r) {
        std::span<const float> row(a[r].data_ptr<float>(), static_cast<size_t>(n));
        auto m = sample_mismatched(row, rng);
        out[r].copy_(torch::tensor(m));
    }
    return out.to(alpha.options());
}

}  // namespace a3gan
