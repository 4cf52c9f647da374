#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fsel/bundle_io.hpp"
#include "fsel/error.hpp"

namespace fsel {

struct ExtractionConfig {
    double tau = 0.5;  // fraction of CLS-attention mass kept
    int k_patterns = 5;
    int d0 = 2;  // Chebyshev neighbourhood radius on the patch grid
    double degree_epsilon = 1e-8;
    std::uint64_t seed = 0;
    int kmeans_max_iters = 100;

    /// Throws ArgumentError unless 0 < tau < 1, k_patterns >= 1, d0 >= 1.
    void check() const;
};

/// Region indices kept by the attention filter, highest attention first.
struct FilteredIndexSet {
    std::vector<Eigen::Index> indices;
    std::size_t size() const noexcept { return indices.size(); }
};

struct ClusterAssignment {
    std::vector<int> labels;  // one per filtered region, in 0..k_used-1
    int k_used = 0;
};

/// Semantic patterns of one image: each row is the mean feature of one cluster.
struct SemanticPatternSet {
    std::string image_id;
    Eigen::MatrixXd patterns;  // k_used x d
    std::vector<std::uint32_t> member_counts;

    Eigen::Index k_used() const noexcept { return patterns.rows(); }
    Eigen::Index dim() const noexcept { return patterns.cols(); }
};

/// Sorts regions by descending attention (ties: ascending index) and keeps
/// the longest prefix whose attention mass is <= tau, but at least one region.
template <typename Derived>
FilteredIndexSet attention_filter(const Eigen::MatrixBase<Derived>& ca, double tau) {
    const Eigen::Index n = ca.size();
    if (n == 0) throw ArgumentError("attention_filter: empty attention vector");
    FilteredIndexSet out;
    out.indices.resize(static_cast<std::size_t>(n));
    std::iota(out.indices.begin(), out.indices.end(), Eigen::Index{0});
    std::stable_sort(out.indices.begin(), out.indices.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return ca(a) > ca(b); });
    double mass = 0.0;
    std::size_t t = 0;
    for (; t < out.indices.size(); ++t) {
        const double next = mass + static_cast<double>(ca(out.indices[t]));
        if (next > tau) break;
        mass = next;
    }
    out.indices.resize(std::max<std::size_t>(t, 1));
    return out;
}

/// Chebyshev distance between two flat indices of a row-major grid.
inline int grid_chebyshev(Eigen::Index a, Eigen::Index b, int grid_w) {
    const auto ra = a / grid_w, ca = a % grid_w;
    const auto rb = b / grid_w, cb = b % grid_w;
    return static_cast<int>(std::max(std::abs(ra - rb), std::abs(ca - cb)));
}

/// t x t similarity between the filtered regions: the patch attention entry
/// where the regions are within Chebyshev distance d0 on the grid, else 0.
template <typename Derived>
Eigen::MatrixXd locality_mask(const Eigen::MatrixBase<Derived>& pa, const FilteredIndexSet& filtered, int d0,
                              int grid_h, int grid_w) {
    const Eigen::Index hw = Eigen::Index{grid_h} * grid_w;
    if (pa.rows() != hw || pa.cols() != hw) throw ArgumentError("locality_mask: attention shape does not match grid");
    const auto t = static_cast<Eigen::Index>(filtered.size());
    Eigen::MatrixXd out(t, t);
    for (Eigen::Index i = 0; i < t; ++i) {
        const Eigen::Index ri = filtered.indices[static_cast<std::size_t>(i)];
        if (ri < 0 || ri >= hw) throw ArgumentError("locality_mask: region index out of range");
        for (Eigen::Index j = 0; j < t; ++j) {
            const Eigen::Index rj = filtered.indices[static_cast<std::size_t>(j)];
            out(i, j) = grid_chebyshev(ri, rj, grid_w) <= d0 ? static_cast<double>(pa(ri, rj)) : 0.0;
        }
    }
    return out;
}

/// Normalized-Laplacian spectral clustering of a t x t similarity into
/// min(k, t) clusters.
///
/// A = (S + S^T) / 2, D = diag(row sums of A) + degree_epsilon,
/// L = D^-1/2 (D - A) D^-1/2. The eigenvectors of the k smallest eigenvalues
/// form the columns of V; each row of V is scaled to unit length (an all-zero
/// row becomes the first basis vector) and k-means splits the rows. Labels are
/// renumbered by first appearance, so region 0 is always in cluster 0.
ClusterAssignment spectral_cluster(const Eigen::MatrixXd& similarity, int k, double degree_epsilon,
                                   std::uint64_t seed, int kmeans_max_iters = 100);

/// Mean feature row of each cluster. `features` rows follow the filtered order.
template <typename Derived>
SemanticPatternSet compute_patterns(const Eigen::MatrixBase<Derived>& features, const ClusterAssignment& assignment) {
    if (static_cast<std::size_t>(features.rows()) != assignment.labels.size()) {
        throw ArgumentError("compute_patterns: feature rows do not match assignment length");
    }
    SemanticPatternSet out;
    out.patterns = Eigen::MatrixXd::Zero(assignment.k_used, features.cols());
    out.member_counts.assign(static_cast<std::size_t>(assignment.k_used), 0);
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
        const int l = assignment.labels[static_cast<std::size_t>(r)];
        if (l < 0 || l >= assignment.k_used) throw ArgumentError("compute_patterns: label out of range");
        out.patterns.row(l) += features.row(r).template cast<double>();
        ++out.member_counts[static_cast<std::size_t>(l)];
    }
    for (int j = 0; j < assignment.k_used; ++j) {
        const auto c = out.member_counts[static_cast<std::size_t>(j)];
        if (c == 0) throw ArgumentError("compute_patterns: empty cluster " + std::to_string(j));
        out.patterns.row(j) /= static_cast<double>(c);
    }
    return out;
}

/// Full per-image pipeline: attention filter, locality mask, spectral
/// clustering, cluster means. Pure in (record, config).
SemanticPatternSet extract_image_patterns(const ImageRecord& record, const ExtractionConfig& config);

/// Extracts every record on `threads` workers; results keep input order.
std::vector<SemanticPatternSet> extract_all(std::span<const ImageRecord> records, const ExtractionConfig& config,
                                            std::size_t threads);

}  // namespace fsel
