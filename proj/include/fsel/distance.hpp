#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include "fsel/error.hpp"

namespace fsel {

enum class Distance { cosine, euclidean };

inline std::string_view to_string(Distance d) {
    return d == Distance::cosine ? "cosine" : "euclidean";
}

inline Distance parse_distance(std::string_view s) {
    if (s == "cosine" || s == "cos") return Distance::cosine;
    if (s == "euclidean" || s == "euc") return Distance::euclidean;
    throw ArgumentError("unknown distance '" + std::string(s) + "'");
}

/// Dot product with a fixed summation order (eight interleaved partial sums,
/// combined pairwise). The result depends only on the operand values, never
/// on memory alignment, so dot(x, y) == dot(x, x) whenever y == x bitwise.
inline double fixed_order_dot(const double* a, const double* b, std::size_t n) noexcept {
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
    }
    for (std::size_t k = 0; i < n; ++i, ++k) acc[k] += a[i] * b[i];
    return ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]));
}

/// 1 - a.b / sqrt((a.a)(b.b)) from precomputed dot products, clamped to [0, 2].
/// Exactly 0 when a == b.
inline double cosine_from_dots(double ab, double aa, double bb) noexcept {
    return std::clamp(1.0 - ab / std::sqrt(aa * bb), 0.0, 2.0);
}

/// 1 - cos(a, b), clamped to [0, 2]. Scale invariant; exactly 0 for a == b.
/// Evaluated in double.
template <typename DA, typename DB>
double cosine_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
    if (a.size() != b.size()) throw ArgumentError("cosine_distance: dimension mismatch");
    const Eigen::VectorXd x = a.template cast<double>().reshaped();
    const Eigen::VectorXd y = b.template cast<double>().reshaped();
    const auto n = static_cast<std::size_t>(x.size());
    const double xx = fixed_order_dot(x.data(), x.data(), n);
    const double yy = fixed_order_dot(y.data(), y.data(), n);
    if (!(xx > 0.0) || !(yy > 0.0)) throw ArgumentError("cosine_distance: zero-norm input");
    return cosine_from_dots(fixed_order_dot(x.data(), y.data(), n), xx, yy);
}

template <typename DA, typename DB>
double euclidean_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
    if (a.size() != b.size()) throw ArgumentError("euclidean_distance: dimension mismatch");
    return (a.template cast<double>().reshaped() - b.template cast<double>().reshaped()).norm();
}

template <typename DA, typename DB>
double distance(Distance kind, const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
    return kind == Distance::cosine ? cosine_distance(a, b) : euclidean_distance(a, b);
}

}  // namespace fsel
