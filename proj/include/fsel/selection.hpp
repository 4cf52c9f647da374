#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fsel/bundle_io.hpp"
#include "fsel/distance.hpp"
#include "fsel/pattern_extraction.hpp"

namespace fsel {

class WorkerPool;

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Strategy { prob, fds, global_fds, kmeans, random };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

/// Unlabeled pool: every image owns a contiguous run of pattern rows.
class CandidatePool {
public:
    /// Throws ArgumentError on an empty pool, an image without patterns,
    /// mixed dimensions, non-finite entries or duplicate ids.
    CandidatePool(std::vector<std::string> image_ids, std::span<const Eigen::MatrixXd> per_image_patterns);

    static CandidatePool from_patterns(std::span<const SemanticPatternSet> sets);
    /// One pattern per image: its global (CLS) feature.
    static CandidatePool from_cls_features(std::span<const ImageRecord> records);

    std::size_t num_images() const noexcept { return ids_.size(); }
    std::size_t num_patterns() const noexcept { return owner_.size(); }
    Eigen::Index dim() const noexcept { return rows_.cols(); }

    const std::string& image_id(std::size_t image) const { return ids_[image]; }
    const std::vector<std::string>& image_ids() const noexcept { return ids_; }
    std::size_t first_pattern(std::size_t image) const { return offsets_[image]; }
    std::size_t pattern_count(std::size_t image) const { return offsets_[image + 1] - offsets_[image]; }
    std::size_t owner(std::size_t pattern) const { return owner_[pattern]; }

    const RowMatrixXd& patterns() const noexcept { return rows_; }
    /// Self dot product of each pattern row (fixed summation order).
    const Eigen::VectorXd& self_dots() const noexcept { return self_dots_; }

    /// Throws ArgumentError if cosine distance is requested and some pattern has zero norm.
    void require_compatible(Distance d) const;

private:
    std::vector<std::string> ids_;
    std::vector<std::size_t> offsets_;
    std::vector<std::uint32_t> owner_;
    RowMatrixXd rows_;
    Eigen::VectorXd self_dots_;
};

/// Distance from pool pattern `candidate` to vector `q` with self dot `qq`.
double pattern_distance(const CandidatePool& pool, std::size_t candidate, const double* q, double qq, Distance d);

struct SelectionState {
    std::vector<std::size_t> selected_images;  // in selection order
    std::vector<char> image_selected;          // per image flag
    std::size_t selected_patterns = 0;
    Eigen::VectorXd min_dist;  // per pattern, distance to the nearest selected pattern

    /// Empty selection over `pool`: no image selected, every min_dist = +inf.
    static SelectionState empty(const CandidatePool& pool);
};

/// min_dist[p] <- min(min_dist[p], min_q D(p, q)) for every candidate p and
/// each row q of `new_patterns`. Nothing else changes. Work is split in fixed
/// chunks of candidates, so the result does not depend on `workers`.
void update_min_dist(SelectionState& state, const CandidatePool& pool, const Eigen::Ref<const RowMatrixXd>& new_patterns,
                     Distance d, WorkerPool* workers = nullptr);

/// Marks `image` selected and folds all its patterns into min_dist.
void add_selected_image(SelectionState& state, const CandidatePool& pool, std::size_t image, Distance d,
                        WorkerPool* workers = nullptr);

struct SelectionStep {
    std::size_t image = 0;
    /// Flat index of the pattern that was chosen, -1 when the step was not a
    /// pattern draw (initial image, uniform fallback, random, k-means).
    std::int64_t pattern = -1;
    /// The chosen pattern's distance to the selected pool before the step,
    /// or the image's distance to its centroid for k-means; NaN when undefined.
    double min_dist = std::numeric_limits<double>::quiet_NaN();
    /// Sum of squared min distances over eligible candidates; NaN when undefined.
    double mass = std::numeric_limits<double>::quiet_NaN();
    bool fallback = false;  // uniform draw because all remaining mass was zero
};

struct SelectionResult {
    Strategy strategy = Strategy::prob;
    Distance distance = Distance::cosine;
    std::uint64_t seed = 0;
    std::size_t pool_images = 0;
    std::size_t pool_patterns = 0;
    std::vector<std::string> image_ids;  // selection order
    std::vector<SelectionStep> steps;
};

struct SelectOptions {
    Distance distance = Distance::cosine;
    /// Start from this image instead of a seeded uniform draw.
    std::optional<std::size_t> initial_image;
    std::size_t threads = 1;
};

/// Distance-based probabilistic selection: after a random initial image, each
/// step draws an unselected pattern with probability proportional to its
/// squared distance to the nearest selected pattern and selects its image
/// together with all of that image's patterns.
SelectionResult select_prob(const CandidatePool& pool, std::size_t budget, std::uint64_t seed,
                            const SelectOptions& options = {});

/// Farthest-distance sampling: like select_prob but takes the argmax
/// (lowest flat index on ties). No uniform fallback: once everything is
/// covered the argmax walks the remaining images in index order.
SelectionResult select_fds(const CandidatePool& pool, std::size_t budget, std::uint64_t seed,
                           const SelectOptions& options = {});

/// Core-Set style farthest-distance sampling over global features.
SelectionResult select_global_fds(std::span<const ImageRecord> records, std::size_t budget, std::uint64_t seed,
                                  const SelectOptions& options = {});

/// k-means (k = budget) over global features, then for each centroid in
/// order the nearest not-yet-used image by cosine distance.
SelectionResult select_kmeans_global(const CandidatePool& global_pool, std::size_t budget, std::uint64_t seed);
SelectionResult select_kmeans_global(std::span<const ImageRecord> records, std::size_t budget, std::uint64_t seed);

/// Uniform sample without replacement.
SelectionResult select_random(std::span<const std::string> image_ids, std::size_t budget, std::uint64_t seed);

}  // namespace fsel
