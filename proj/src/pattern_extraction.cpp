#include "fsel/pattern_extraction.hpp"

#include <cmath>
#include <unordered_map>

#include "fsel/kmeans.hpp"
#include "fsel/parallel.hpp"
#include "fsel/sym_eigen.hpp"

namespace fsel {

void ExtractionConfig::check() const {
    if (!(tau > 0.0 && tau < 1.0)) throw ArgumentError("tau must lie in (0, 1)");
    if (k_patterns < 1) throw ArgumentError("k_patterns must be >= 1");
    if (d0 < 1) throw ArgumentError("d0 must be >= 1");
    if (!(degree_epsilon >= 0.0)) throw ArgumentError("degree_epsilon must be >= 0");
    if (kmeans_max_iters < 1) throw ArgumentError("kmeans_max_iters must be >= 1");
}

ClusterAssignment spectral_cluster(const Eigen::MatrixXd& similarity, int k, double degree_epsilon,
                                   std::uint64_t seed, int kmeans_max_iters) {
    const Eigen::Index t = similarity.rows();
    if (t < 1 || similarity.cols() != t) throw ArgumentError("spectral_cluster: similarity must be square, t >= 1");
    if (k < 1) throw ArgumentError("spectral_cluster: k must be >= 1");
    if (!similarity.allFinite()) throw DataError("spectral_cluster: non-finite similarity entries");

    ClusterAssignment out;
    out.k_used = static_cast<int>(std::min<Eigen::Index>(k, t));
    out.labels.assign(static_cast<std::size_t>(t), 0);
    if (out.k_used == 1) return out;

    const DenseSymMatrix<double> adj(similarity);
    const Eigen::MatrixXd& A = adj.matrix();
    const Eigen::VectorXd degree = A.rowwise().sum().array() + degree_epsilon;
    const Eigen::VectorXd inv_sqrt = degree.array().rsqrt();
    Eigen::MatrixXd L(t, t);
    for (Eigen::Index j = 0; j < t; ++j) {
        for (Eigen::Index i = 0; i < t; ++i) {
            const double dij = (i == j ? degree(i) : 0.0) - A(i, j);
            L(i, j) = dij * inv_sqrt(i) * inv_sqrt(j);
        }
    }

    const auto eig = sym_eigen_smallest(DenseSymMatrix<double>(L), out.k_used, 1e-6);
    Eigen::MatrixXd rows = eig.vectors;
    for (Eigen::Index i = 0; i < t; ++i) {
        const double norm = rows.row(i).norm();
        if (norm == 0.0) {
            rows.row(i).setZero();
            rows(i, 0) = 1.0;
        } else {
            rows.row(i) /= norm;
        }
    }

    const auto km = kmeans(rows, out.k_used, seed, kmeans_max_iters);
    std::unordered_map<int, int> renumber;
    for (std::size_t i = 0; i < km.labels.size(); ++i) {
        auto [it, inserted] = renumber.try_emplace(km.labels[i], static_cast<int>(renumber.size()));
        out.labels[i] = it->second;
    }
    return out;
}

SemanticPatternSet extract_image_patterns(const ImageRecord& record, const ExtractionConfig& config) {
    config.check();
    const Eigen::Index hw = record.regions();
    if (hw == 0 || record.cls_attention.size() != hw || record.patch_attention.rows() != hw ||
        record.patch_attention.cols() != hw || record.patch_features.rows() != hw ||
        record.patch_features.cols() != record.feat_dim) {
        throw DataError("record '" + record.image_id + "': inconsistent dimensions");
    }

    const FilteredIndexSet filtered = attention_filter(record.cls_attention, config.tau);
    const Eigen::MatrixXd sim =
        locality_mask(record.patch_attention, filtered, config.d0, record.grid_h, record.grid_w);
    const ClusterAssignment assignment =
        spectral_cluster(sim, config.k_patterns, config.degree_epsilon, config.seed, config.kmeans_max_iters);

    const auto t = static_cast<Eigen::Index>(filtered.size());
    Eigen::MatrixXd features(t, record.feat_dim);
    for (Eigen::Index i = 0; i < t; ++i) {
        features.row(i) = record.patch_features.row(filtered.indices[static_cast<std::size_t>(i)]).cast<double>();
    }
    SemanticPatternSet out = compute_patterns(features, assignment);
    out.image_id = record.image_id;
    return out;
}

std::vector<SemanticPatternSet> extract_all(std::span<const ImageRecord> records, const ExtractionConfig& config,
                                            std::size_t threads) {
    config.check();
    std::vector<SemanticPatternSet> out(records.size());
    WorkerPool pool(threads);
    pool.run(records.size(), [&](std::size_t i) { out[i] = extract_image_patterns(records[i], config); });
    return out;
}

}  // namespace fsel
