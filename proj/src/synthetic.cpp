#include <algorithm>
#include <cmath>
#include <string>

#include "fsel/bundle_io.hpp"
#include "fsel/error.hpp"
#include "fsel/rng.hpp"

namespace fsel {

namespace {

constexpr std::uint64_t kCentroidStream = 0xFFFFFFFFFFFFC3A7ULL;  // image streams use their index
constexpr double kCenterBoost = 4.0;    // CLS logit bump at object centers
constexpr double kClsNoise = 0.3;
constexpr double kSameCategoryBoost = 3.0;  // patch-attention logit bonus
constexpr double kPatchNoise = 0.5;

void check_spec(const SynthSpec& spec) {
    if (spec.grid_h == 0 || spec.grid_w == 0 || spec.feat_dim == 0 || spec.num_latent_categories == 0) {
        throw ArgumentError("synthetic spec: grid, feat_dim and category count must be positive");
    }
    if (!(spec.noise_scale >= 0.0) || !std::isfinite(spec.noise_scale)) {
        throw ArgumentError("synthetic spec: noise_scale must be finite and >= 0");
    }
    const std::uint64_t hw = std::uint64_t{spec.grid_h} * spec.grid_w;
    if (hw * spec.feat_dim > spec.max_entries || hw * hw > spec.max_entries) {
        throw ArgumentError("synthetic spec: HW*d exceeds the size cap of " + std::to_string(spec.max_entries));
    }
}

// Softmax in double, rounded to float on store.
void softmax_into(const Eigen::VectorXd& logits, float* out) {
    const double mx = logits.maxCoeff();
    const Eigen::VectorXd e = (logits.array() - mx).exp().matrix();
    const double total = e.sum();
    for (Eigen::Index i = 0; i < logits.size(); ++i) out[i] = static_cast<float>(e(i) / total);
}

}  // namespace

Eigen::MatrixXd synthetic_centroids(const SynthSpec& spec) {
    check_spec(spec);
    CounterRng rng(spec.seed, kCentroidStream);
    Eigen::MatrixXd c(spec.num_latent_categories, spec.feat_dim);
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
        for (Eigen::Index j = 0; j < c.cols(); ++j) c(i, j) = rng.normal();
        c.row(i).normalize();
    }
    return c;
}

SyntheticImage generate_synthetic_image(const SynthSpec& spec, const Eigen::MatrixXd& centroids, std::uint64_t index) {
    check_spec(spec);
    if (centroids.rows() != spec.num_latent_categories || centroids.cols() != spec.feat_dim) {
        throw ArgumentError("synthetic image: centroid matrix does not match spec");
    }
    CounterRng rng(spec.seed, index);
    const int h = spec.grid_h;
    const int w = spec.grid_w;
    const int hw = h * w;
    const int d = spec.feat_dim;
    const int cats = static_cast<int>(spec.num_latent_categories);

    SyntheticImage img;
    // Category mix: 1..3 distinct categories, Zipf(1) frequencies, no replacement.
    const int present = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min({3, cats, hw}))));
    std::vector<double> weight(static_cast<std::size_t>(cats));
    for (int c = 0; c < cats; ++c) weight[static_cast<std::size_t>(c)] = 1.0 / (c + 1);
    std::vector<int> objects;
    for (int k = 0; k < present; ++k) {
        double total = 0.0;
        for (double x : weight) total += x;
        const double u = rng.uniform() * total;
        double acc = 0.0;
        int pick = -1;
        for (int c = 0; c < cats; ++c) {
            if (weight[static_cast<std::size_t>(c)] <= 0.0) continue;
            acc += weight[static_cast<std::size_t>(c)];
            pick = c;
            if (acc > u) break;
        }
        weight[static_cast<std::size_t>(pick)] = 0.0;
        objects.push_back(pick);
    }

    // Object centers on distinct cells; each region joins its nearest center.
    std::vector<int> centers;
    while (static_cast<int>(centers.size()) < present) {
        const int cell = static_cast<int>(rng.below(static_cast<std::uint64_t>(hw)));
        if (std::find(centers.begin(), centers.end(), cell) == centers.end()) centers.push_back(cell);
    }
    img.region_category.assign(static_cast<std::size_t>(hw), 0);
    std::vector<double> center_d2(static_cast<std::size_t>(hw));
    for (int r = 0; r < hw; ++r) {
        int best = 0;
        double best_d2 = 1e300;
        for (int k = 0; k < present; ++k) {
            const double dy = r / w - centers[static_cast<std::size_t>(k)] / w;
            const double dx = r % w - centers[static_cast<std::size_t>(k)] % w;
            const double d2 = dx * dx + dy * dy;
            if (d2 < best_d2) {
                best_d2 = d2;
                best = k;
            }
        }
        img.region_category[static_cast<std::size_t>(r)] = objects[static_cast<std::size_t>(best)];
        center_d2[static_cast<std::size_t>(r)] = best_d2;
    }
    img.categories = objects;
    std::sort(img.categories.begin(), img.categories.end());

    ImageRecord& rec = img.record;
    rec.image_id = "synth_" + std::to_string(index);
    rec.grid_h = spec.grid_h;
    rec.grid_w = spec.grid_w;
    rec.feat_dim = spec.feat_dim;

    const double sigma = std::max(1.0, std::min(h, w) / 4.0);
    Eigen::VectorXd logits(hw);
    for (int r = 0; r < hw; ++r) {
        logits(r) = kCenterBoost * std::exp(-center_d2[static_cast<std::size_t>(r)] / (2 * sigma * sigma)) +
                    kClsNoise * rng.normal();
    }
    rec.cls_attention.resize(hw);
    softmax_into(logits, rec.cls_attention.data());

    rec.patch_attention.resize(hw, hw);
    for (int i = 0; i < hw; ++i) {
        for (int j = 0; j < hw; ++j) {
            const bool same = img.region_category[static_cast<std::size_t>(i)] ==
                              img.region_category[static_cast<std::size_t>(j)];
            logits(j) = (same ? kSameCategoryBoost : 0.0) + kPatchNoise * rng.normal();
        }
        softmax_into(logits, rec.patch_attention.row(i).data());
    }

    const double per_entry = spec.noise_scale / std::sqrt(static_cast<double>(d));
    rec.patch_features.resize(hw, d);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (int r = 0; r < hw; ++r) {
        const auto cat = img.region_category[static_cast<std::size_t>(r)];
        for (int j = 0; j < d; ++j) {
            const double noise = per_entry > 0.0 ? per_entry * rng.normal() : 0.0;
            const float v = static_cast<float>(centroids(cat, j) + noise);
            rec.patch_features(r, j) = v;
            mean(j) += v;
        }
    }
    rec.cls_feature = (mean / static_cast<double>(hw)).cast<float>();
    return img;
}

std::vector<SyntheticImage> generate_synthetic_images(const SynthSpec& spec) {
    const Eigen::MatrixXd centroids = synthetic_centroids(spec);
    std::vector<SyntheticImage> out;
    out.reserve(spec.num_images);
    for (std::uint64_t i = 0; i < spec.num_images; ++i) out.push_back(generate_synthetic_image(spec, centroids, i));
    return out;
}

std::vector<ImageRecord> generate_synthetic_bundle(const SynthSpec& spec) {
    const Eigen::MatrixXd centroids = synthetic_centroids(spec);
    std::vector<ImageRecord> out;
    out.reserve(spec.num_images);
    for (std::uint64_t i = 0; i < spec.num_images; ++i) {
        out.push_back(generate_synthetic_image(spec, centroids, i).record);
    }
    return out;
}

}  // namespace fsel
