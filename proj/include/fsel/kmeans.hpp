#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fsel/error.hpp"
#include "fsel/rng.hpp"

namespace fsel {

template <typename Scalar>
struct KMeansResult {
    std::vector<int> labels;
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> centroids;  // k x p
    int iterations = 0;
    /// Sum of squared distances to assigned centroids after each centroid update.
    std::vector<Scalar> objective_trace;
};

namespace detail {

template <typename PointsT, typename CentroidsT>
void assign_nearest(const PointsT& points, const CentroidsT& centroids, std::vector<int>& labels) {
    using Scalar = typename PointsT::Scalar;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        Scalar best = std::numeric_limits<Scalar>::infinity();
        int arg = 0;
        for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
            const Scalar d2 = (points.row(i) - centroids.row(c)).squaredNorm();
            if (d2 < best) {
                best = d2;
                arg = static_cast<int>(c);
            }
        }
        labels[static_cast<std::size_t>(i)] = arg;
    }
}

// Fill every empty cluster with the point farthest from its own centroid,
// taken only from clusters that keep at least one member.
template <typename PointsT, typename CentroidsT>
void repair_empty(const PointsT& points, CentroidsT& centroids, std::vector<int>& labels) {
    using Scalar = typename PointsT::Scalar;
    const auto k = static_cast<std::size_t>(centroids.rows());
    std::vector<Eigen::Index> counts(k, 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    for (std::size_t e = 0; e < k; ++e) {
        if (counts[e] != 0) continue;
        Scalar far = -1;
        Eigen::Index pick = -1;
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            const auto l = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
            if (counts[l] < 2) continue;
            const Scalar d2 = (points.row(i) - centroids.row(static_cast<Eigen::Index>(l))).squaredNorm();
            if (d2 > far) {
                far = d2;
                pick = i;
            }
        }
        // k <= m guarantees a donor exists.
        auto& slot = labels[static_cast<std::size_t>(pick)];
        --counts[static_cast<std::size_t>(slot)];
        slot = static_cast<int>(e);
        counts[e] = 1;
        centroids.row(static_cast<Eigen::Index>(e)) = points.row(pick);
    }
}

}  // namespace detail

/// Lloyd's k-means with k-means++ seeding.
///
/// Seeds: first center uniform, each next center drawn with probability
/// proportional to its squared distance from the nearest chosen center
/// (uniform over unchosen points if all such distances are zero). Lloyd
/// iterations stop when labels reach a fixpoint or after max_iters updates.
/// Ties in assignment go to the lowest centroid index. Every returned
/// cluster is nonempty.
template <typename Derived>
KMeansResult<typename Derived::Scalar> kmeans(const Eigen::MatrixBase<Derived>& points_in, int k,
                                              std::uint64_t seed, int max_iters = 100) {
    using Scalar = typename Derived::Scalar;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const Matrix points = points_in;
    const Eigen::Index m = points.rows();
    if (k < 1 || k > m) {
        throw ArgumentError("kmeans: need 1 <= k <= m (k=" + std::to_string(k) + ", m=" + std::to_string(m) + ")");
    }
    if (!points.allFinite()) throw ArgumentError("kmeans: non-finite points");

    CounterRng rng(seed, 0x6b6d65616e73ULL);
    Matrix centroids(k, points.cols());
    std::vector<char> chosen(static_cast<std::size_t>(m), 0);
    std::vector<Scalar> d2(static_cast<std::size_t>(m), std::numeric_limits<Scalar>::infinity());

    auto take = [&](Eigen::Index idx, int slot) {
        chosen[static_cast<std::size_t>(idx)] = 1;
        centroids.row(slot) = points.row(idx);
        for (Eigen::Index i = 0; i < m; ++i) {
            const Scalar v = (points.row(i) - points.row(idx)).squaredNorm();
            auto& cur = d2[static_cast<std::size_t>(i)];
            if (v < cur) cur = v;
        }
    };

    take(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m))), 0);
    for (int c = 1; c < k; ++c) {
        Scalar total = 0;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (!chosen[static_cast<std::size_t>(i)]) total += d2[static_cast<std::size_t>(i)];
        }
        Eigen::Index pick = -1;
        if (total > Scalar(0)) {
            const Scalar u = Scalar(rng.uniform()) * total;
            Scalar acc = 0;
            for (Eigen::Index i = 0; i < m; ++i) {
                const auto w = d2[static_cast<std::size_t>(i)];
                if (chosen[static_cast<std::size_t>(i)] || !(w > Scalar(0))) continue;
                acc += w;
                pick = i;
                if (acc > u) break;
            }
        } else {
            auto nth = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m - c)));
            for (Eigen::Index i = 0; i < m; ++i) {
                if (chosen[static_cast<std::size_t>(i)]) continue;
                if (nth-- == 0) {
                    pick = i;
                    break;
                }
            }
        }
        take(pick, c);
    }

    KMeansResult<Scalar> out;
    out.labels.assign(static_cast<std::size_t>(m), 0);
    detail::assign_nearest(points, centroids, out.labels);
    detail::repair_empty(points, centroids, out.labels);

    std::vector<int> next(out.labels.size());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k));
    auto update_centroids = [&] {
        centroids.setZero();
        std::fill(counts.begin(), counts.end(), 0);
        for (Eigen::Index i = 0; i < m; ++i) {
            const int l = out.labels[static_cast<std::size_t>(i)];
            centroids.row(l) += points.row(i);
            ++counts[static_cast<std::size_t>(l)];
        }
        for (int c = 0; c < k; ++c) centroids.row(c) /= Scalar(counts[static_cast<std::size_t>(c)]);
    };
    for (int it = 0; it < max_iters; ++it) {
        update_centroids();

        Scalar obj = 0;
        for (Eigen::Index i = 0; i < m; ++i) {
            obj += (points.row(i) - centroids.row(out.labels[static_cast<std::size_t>(i)])).squaredNorm();
        }
        out.objective_trace.push_back(obj);
        out.iterations = it + 1;

        detail::assign_nearest(points, centroids, next);
        detail::repair_empty(points, centroids, next);
        if (next == out.labels) break;
        out.labels.swap(next);
    }
    update_centroids();
    out.centroids = std::move(centroids);
    return out;
}

}  // namespace fsel
