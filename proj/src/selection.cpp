#include "fsel/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "fsel/error.hpp"
#include "fsel/kmeans.hpp"
#include "fsel/parallel.hpp"
#include "fsel/rng.hpp"

namespace fsel {

namespace {

constexpr std::uint64_t kSelectStream = 0x73656C656374ULL;  // "select"
constexpr std::size_t kChunk = 2048;                        // candidates per work item

inline double fixed_order_sqdist(const double* a, const double* b, std::size_t n) noexcept {
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t k = 0; k < 8; ++k) {
            const double t = a[i + k] - b[i + k];
            acc[k] += t * t;
        }
    }
    for (std::size_t k = 0; i < n; ++i, ++k) {
        const double t = a[i] - b[i];
        acc[k] += t * t;
    }
    return ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]));
}

void check_budget(std::size_t budget, std::size_t n) {
    if (budget < 1 || budget > n) {
        throw ArgumentError("budget must lie in [1, " + std::to_string(n) + "], got " + std::to_string(budget));
    }
}

SelectionResult start_result(Strategy s, Distance d, std::uint64_t seed, const CandidatePool& pool) {
    SelectionResult r;
    r.strategy = s;
    r.distance = d;
    r.seed = seed;
    r.pool_images = pool.num_images();
    r.pool_patterns = pool.num_patterns();
    return r;
}

void push_step(SelectionResult& r, const CandidatePool& pool, SelectionStep step) {
    r.image_ids.push_back(pool.image_id(step.image));
    r.steps.push_back(step);
}

// Shared loop of select_prob (argmax = false) and select_fds (argmax = true).
SelectionResult run_pattern_selection(const CandidatePool& pool, std::size_t budget, std::uint64_t seed,
                                      const SelectOptions& options, bool argmax) {
    check_budget(budget, pool.num_images());
    pool.require_compatible(options.distance);
    const Distance dist = options.distance;
    SelectionResult result = start_result(argmax ? Strategy::fds : Strategy::prob, dist, seed, pool);

    WorkerPool workers(std::max<std::size_t>(options.threads, 1));
    CounterRng rng(seed, kSelectStream);
    SelectionState state = SelectionState::empty(pool);

    std::size_t initial = 0;
    if (options.initial_image) {
        initial = *options.initial_image;
        if (initial >= pool.num_images()) throw ArgumentError("initial image index out of range");
    } else {
        initial = static_cast<std::size_t>(rng.below(pool.num_images()));
    }
    add_selected_image(state, pool, initial, dist, &workers);
    push_step(result, pool, SelectionStep{initial});

    const std::size_t np = pool.num_patterns();
    while (state.selected_images.size() < budget) {
        // Candidates are patterns of unselected images, in flat order.
        double mass = 0.0;
        std::int64_t best = -1;
        double best_d = -1.0;
        for (std::size_t p = 0; p < np; ++p) {
            if (state.image_selected[pool.owner(p)]) continue;
            const double d = state.min_dist(static_cast<Eigen::Index>(p));
            mass += d * d;
            if (d > best_d) {
                best_d = d;
                best = static_cast<std::int64_t>(p);
            }
        }

        SelectionStep step;
        step.mass = mass;
        if (!argmax && !(mass > 0.0)) {
            // Every remaining pattern is already covered: uniform over remaining images.
            const std::size_t remaining = pool.num_images() - state.selected_images.size();
            auto nth = static_cast<std::size_t>(rng.below(remaining));
            for (std::size_t i = 0; i < pool.num_images(); ++i) {
                if (state.image_selected[i]) continue;
                if (nth-- == 0) {
                    step.image = i;
                    break;
                }
            }
            step.min_dist = 0.0;
            step.fallback = true;
        } else {
            std::int64_t pick = best;
            if (!argmax) {
                const double u = rng.uniform() * mass;
                double acc = 0.0;
                pick = -1;
                for (std::size_t p = 0; p < np; ++p) {
                    if (state.image_selected[pool.owner(p)]) continue;
                    const double d = state.min_dist(static_cast<Eigen::Index>(p));
                    const double w = d * d;
                    if (!(w > 0.0)) continue;
                    acc += w;
                    pick = static_cast<std::int64_t>(p);
                    if (acc > u) break;
                }
            }
            step.pattern = pick;
            step.image = pool.owner(static_cast<std::size_t>(pick));
            step.min_dist = state.min_dist(static_cast<Eigen::Index>(pick));
        }
        add_selected_image(state, pool, step.image, dist, &workers);
        push_step(result, pool, step);
    }
    return result;
}

}  // namespace

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::prob: return "prob";
        case Strategy::fds: return "fds";
        case Strategy::global_fds: return "global-fds";
        case Strategy::kmeans: return "kmeans";
        case Strategy::random: return "random";
    }
    return "?";
}

Strategy parse_strategy(std::string_view s) {
    if (s == "prob") return Strategy::prob;
    if (s == "fds") return Strategy::fds;
    if (s == "global-fds") return Strategy::global_fds;
    if (s == "kmeans") return Strategy::kmeans;
    if (s == "random") return Strategy::random;
    throw ArgumentError("unknown strategy '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------

CandidatePool::CandidatePool(std::vector<std::string> image_ids, std::span<const Eigen::MatrixXd> per_image) {
    if (image_ids.empty()) throw ArgumentError("candidate pool is empty");
    if (image_ids.size() != per_image.size()) throw ArgumentError("candidate pool: id/pattern count mismatch");
    std::unordered_set<std::string> seen;
    const Eigen::Index dim = per_image.front().cols();
    std::size_t total = 0;
    for (std::size_t i = 0; i < per_image.size(); ++i) {
        if (!seen.insert(image_ids[i]).second) throw ArgumentError("candidate pool: duplicate id '" + image_ids[i] + "'");
        if (per_image[i].rows() < 1) throw ArgumentError("candidate pool: image '" + image_ids[i] + "' has no patterns");
        if (per_image[i].cols() != dim || dim < 1) throw ArgumentError("candidate pool: pattern dimension mismatch");
        if (!per_image[i].allFinite()) throw ArgumentError("candidate pool: non-finite pattern in '" + image_ids[i] + "'");
        total += static_cast<std::size_t>(per_image[i].rows());
    }
    if (per_image.size() > std::numeric_limits<std::uint32_t>::max()) throw ArgumentError("candidate pool too large");

    ids_ = std::move(image_ids);
    rows_.resize(static_cast<Eigen::Index>(total), dim);
    offsets_.reserve(per_image.size() + 1);
    owner_.reserve(total);
    std::size_t at = 0;
    for (std::size_t i = 0; i < per_image.size(); ++i) {
        offsets_.push_back(at);
        const auto k = per_image[i].rows();
        rows_.middleRows(static_cast<Eigen::Index>(at), k) = per_image[i];
        for (Eigen::Index j = 0; j < k; ++j) owner_.push_back(static_cast<std::uint32_t>(i));
        at += static_cast<std::size_t>(k);
    }
    offsets_.push_back(at);

    self_dots_.resize(rows_.rows());
    for (Eigen::Index p = 0; p < rows_.rows(); ++p) {
        self_dots_(p) = fixed_order_dot(rows_.row(p).data(), rows_.row(p).data(), static_cast<std::size_t>(dim));
    }
}

CandidatePool CandidatePool::from_patterns(std::span<const SemanticPatternSet> sets) {
    std::vector<std::string> ids;
    std::vector<Eigen::MatrixXd> mats;
    ids.reserve(sets.size());
    mats.reserve(sets.size());
    for (const auto& s : sets) {
        ids.push_back(s.image_id);
        mats.push_back(s.patterns);
    }
    return CandidatePool(std::move(ids), mats);
}

CandidatePool CandidatePool::from_cls_features(std::span<const ImageRecord> records) {
    std::vector<std::string> ids;
    std::vector<Eigen::MatrixXd> mats;
    ids.reserve(records.size());
    mats.reserve(records.size());
    for (const auto& r : records) {
        ids.push_back(r.image_id);
        mats.push_back(r.cls_feature.cast<double>().transpose());
    }
    return CandidatePool(std::move(ids), mats);
}

void CandidatePool::require_compatible(Distance d) const {
    if (d != Distance::cosine) return;
    for (Eigen::Index p = 0; p < self_dots_.size(); ++p) {
        if (!(self_dots_(p) > 0.0)) {
            throw ArgumentError("cosine distance undefined: zero-norm pattern " + std::to_string(p) + " in image '" +
                                ids_[owner_[static_cast<std::size_t>(p)]] + "'");
        }
    }
}

double pattern_distance(const CandidatePool& pool, std::size_t candidate, const double* q, double qq, Distance d) {
    const double* p = pool.patterns().row(static_cast<Eigen::Index>(candidate)).data();
    const auto n = static_cast<std::size_t>(pool.dim());
    if (d == Distance::cosine) {
        return cosine_from_dots(fixed_order_dot(p, q, n), pool.self_dots()(static_cast<Eigen::Index>(candidate)), qq);
    }
    return std::sqrt(fixed_order_sqdist(p, q, n));
}

SelectionState SelectionState::empty(const CandidatePool& pool) {
    SelectionState s;
    s.image_selected.assign(pool.num_images(), 0);
    s.min_dist = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(pool.num_patterns()),
                                           std::numeric_limits<double>::infinity());
    return s;
}

void update_min_dist(SelectionState& state, const CandidatePool& pool, const Eigen::Ref<const RowMatrixXd>& new_patterns,
                     Distance d, WorkerPool* workers) {
    if (new_patterns.rows() == 0) return;
    if (new_patterns.cols() != pool.dim()) throw ArgumentError("update_min_dist: dimension mismatch");
    if (state.min_dist.size() != static_cast<Eigen::Index>(pool.num_patterns())) {
        throw ArgumentError("update_min_dist: state does not match pool");
    }
    const auto n = static_cast<std::size_t>(pool.dim());
    const auto k = static_cast<std::size_t>(new_patterns.rows());
    std::vector<const double*> qs(k);
    std::vector<double> qq(k);
    for (std::size_t j = 0; j < k; ++j) {
        qs[j] = new_patterns.row(static_cast<Eigen::Index>(j)).data();
        qq[j] = fixed_order_dot(qs[j], qs[j], n);
        if (d == Distance::cosine && !(qq[j] > 0.0)) throw ArgumentError("update_min_dist: zero-norm new pattern");
    }

    const std::size_t np = pool.num_patterns();
    const std::size_t chunks = (np + kChunk - 1) / kChunk;
    auto work = [&](std::size_t c) {
        const std::size_t end = std::min(np, (c + 1) * kChunk);
        for (std::size_t p = c * kChunk; p < end; ++p) {
            double& cur = state.min_dist(static_cast<Eigen::Index>(p));
            for (std::size_t j = 0; j < k; ++j) {
                const double v = pattern_distance(pool, p, qs[j], qq[j], d);
                if (v < cur) cur = v;
            }
        }
    };
    if (workers != nullptr && workers->threads() > 1) {
        workers->run(chunks, work);
    } else {
        for (std::size_t c = 0; c < chunks; ++c) work(c);
    }
}

void add_selected_image(SelectionState& state, const CandidatePool& pool, std::size_t image, Distance d,
                        WorkerPool* workers) {
    if (image >= pool.num_images()) throw ArgumentError("add_selected_image: image index out of range");
    if (state.image_selected[image]) throw ArgumentError("add_selected_image: image already selected");
    state.image_selected[image] = 1;
    state.selected_images.push_back(image);
    const auto first = static_cast<Eigen::Index>(pool.first_pattern(image));
    const auto count = static_cast<Eigen::Index>(pool.pattern_count(image));
    state.selected_patterns += static_cast<std::size_t>(count);
    update_min_dist(state, pool, pool.patterns().middleRows(first, count), d, workers);
}

SelectionResult select_prob(const CandidatePool& pool, std::size_t budget, std::uint64_t seed,
                            const SelectOptions& options) {
    return run_pattern_selection(pool, budget, seed, options, false);
}

SelectionResult select_fds(const CandidatePool& pool, std::size_t budget, std::uint64_t seed,
                           const SelectOptions& options) {
    return run_pattern_selection(pool, budget, seed, options, true);
}

SelectionResult select_global_fds(std::span<const ImageRecord> records, std::size_t budget, std::uint64_t seed,
                                  const SelectOptions& options) {
    auto r = select_fds(CandidatePool::from_cls_features(records), budget, seed, options);
    r.strategy = Strategy::global_fds;
    return r;
}

SelectionResult select_kmeans_global(const CandidatePool& pool, std::size_t budget, std::uint64_t seed) {
    check_budget(budget, pool.num_images());
    if (pool.num_patterns() != pool.num_images()) {
        throw ArgumentError("select_kmeans_global: expects one global feature per image");
    }
    pool.require_compatible(Distance::cosine);
    SelectionResult result = start_result(Strategy::kmeans, Distance::cosine, seed, pool);

    const auto km = kmeans(pool.patterns(), static_cast<int>(budget), seed);
    const auto n = static_cast<std::size_t>(pool.dim());
    std::vector<char> used(pool.num_images(), 0);
    for (Eigen::Index c = 0; c < km.centroids.rows(); ++c) {
        const Eigen::VectorXd centroid = km.centroids.row(c).transpose();
        const double cc = fixed_order_dot(centroid.data(), centroid.data(), n);
        std::size_t pick = pool.num_images();
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pool.num_images(); ++i) {
            if (used[i]) continue;
            // A zero centroid has no direction; all candidates tie at distance 1.
            const double dist = cc > 0.0 ? pattern_distance(pool, i, centroid.data(), cc, Distance::cosine) : 1.0;
            if (dist < best) {
                best = dist;
                pick = i;
            }
        }
        used[pick] = 1;
        SelectionStep step;
        step.image = pick;
        step.min_dist = best;
        push_step(result, pool, step);
    }
    return result;
}

SelectionResult select_kmeans_global(std::span<const ImageRecord> records, std::size_t budget, std::uint64_t seed) {
    return select_kmeans_global(CandidatePool::from_cls_features(records), budget, seed);
}

SelectionResult select_random(std::span<const std::string> image_ids, std::size_t budget, std::uint64_t seed) {
    check_budget(budget, image_ids.size());
    SelectionResult result;
    result.strategy = Strategy::random;
    result.seed = seed;
    result.pool_images = image_ids.size();
    result.pool_patterns = image_ids.size();
    CounterRng rng(seed, kSelectStream);
    std::vector<std::size_t> order(image_ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i < budget; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
        std::swap(order[i], order[j]);
        SelectionStep step;
        step.image = order[i];
        result.image_ids.push_back(image_ids[order[i]]);
        result.steps.push_back(step);
    }
    return result;
}

}  // namespace fsel
