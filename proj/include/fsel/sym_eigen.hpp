#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "fsel/error.hpp"

namespace fsel {

/// Dense symmetric matrix. The constructor symmetrizes its input as (M + M^T) / 2,
/// so A(i, j) == A(j, i) exactly afterwards.
template <typename Scalar>
class DenseSymMatrix {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    DenseSymMatrix() = default;

    template <typename Derived>
    explicit DenseSymMatrix(const Eigen::MatrixBase<Derived>& m) {
        if (m.rows() != m.cols()) throw ArgumentError("DenseSymMatrix: matrix is not square");
        if (!m.allFinite()) throw ArgumentError("DenseSymMatrix: non-finite entries");
        a_ = Matrix(m.rows(), m.cols());
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = j; i < m.rows(); ++i) {
                const Scalar v = (Scalar(m(i, j)) + Scalar(m(j, i))) / Scalar(2);
                a_(i, j) = v;
                a_(j, i) = v;
            }
        }
    }

    Eigen::Index order() const noexcept { return a_.rows(); }
    const Matrix& matrix() const noexcept { return a_; }
    Scalar operator()(Eigen::Index i, Eigen::Index j) const { return a_(i, j); }

private:
    Matrix a_;
};

template <typename Scalar>
struct EigenPairs {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> values;                // ascending
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> vectors;  // columns, unit norm
};

namespace detail {

// Householder reduction to tridiagonal form followed by implicit-shift QL,
// after the EISPACK tred2/tql2 pair. On return d holds eigenvalues
// (unsorted) and V the orthonormal eigenvectors as columns.
template <typename Scalar>
void tridiagonal_ql(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& V,
                    Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& d) {
    using std::abs;
    using std::sqrt;
    const Eigen::Index n = V.rows();
    d.resize(n);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);
    if (n == 0) return;

    for (Eigen::Index j = 0; j < n; ++j) d(j) = V(n - 1, j);

    for (Eigen::Index i = n - 1; i > 0; --i) {
        Scalar scale = 0;
        Scalar h = 0;
        for (Eigen::Index k = 0; k < i; ++k) scale += abs(d(k));
        if (scale == Scalar(0)) {
            e(i) = d(i - 1);
            for (Eigen::Index j = 0; j < i; ++j) {
                d(j) = V(i - 1, j);
                V(i, j) = 0;
                V(j, i) = 0;
            }
        } else {
            for (Eigen::Index k = 0; k < i; ++k) {
                d(k) /= scale;
                h += d(k) * d(k);
            }
            Scalar f = d(i - 1);
            Scalar g = sqrt(h);
            if (f > 0) g = -g;
            e(i) = scale * g;
            h -= f * g;
            d(i - 1) = f - g;
            for (Eigen::Index j = 0; j < i; ++j) e(j) = 0;

            for (Eigen::Index j = 0; j < i; ++j) {
                f = d(j);
                V(j, i) = f;
                g = e(j) + V(j, j) * f;
                for (Eigen::Index k = j + 1; k <= i - 1; ++k) {
                    g += V(k, j) * d(k);
                    e(k) += V(k, j) * f;
                }
                e(j) = g;
            }
            f = 0;
            for (Eigen::Index j = 0; j < i; ++j) {
                e(j) /= h;
                f += e(j) * d(j);
            }
            const Scalar hh = f / (h + h);
            for (Eigen::Index j = 0; j < i; ++j) e(j) -= hh * d(j);
            for (Eigen::Index j = 0; j < i; ++j) {
                f = d(j);
                g = e(j);
                for (Eigen::Index k = j; k <= i - 1; ++k) V(k, j) -= (f * e(k) + g * d(k));
                d(j) = V(i - 1, j);
                V(i, j) = 0;
            }
        }
        d(i) = h;
    }

    // Accumulate transformations.
    for (Eigen::Index i = 0; i < n - 1; ++i) {
        V(n - 1, i) = V(i, i);
        V(i, i) = 1;
        const Scalar h = d(i + 1);
        if (h != Scalar(0)) {
            for (Eigen::Index k = 0; k <= i; ++k) d(k) = V(k, i + 1) / h;
            for (Eigen::Index j = 0; j <= i; ++j) {
                Scalar g = 0;
                for (Eigen::Index k = 0; k <= i; ++k) g += V(k, i + 1) * V(k, j);
                for (Eigen::Index k = 0; k <= i; ++k) V(k, j) -= g * d(k);
            }
        }
        for (Eigen::Index k = 0; k <= i; ++k) V(k, i + 1) = 0;
    }
    for (Eigen::Index j = 0; j < n; ++j) {
        d(j) = V(n - 1, j);
        V(n - 1, j) = 0;
    }
    V(n - 1, n - 1) = 1;
    e(0) = 0;

    // Implicit QL on the tridiagonal (d, e).
    for (Eigen::Index i = 1; i < n; ++i) e(i - 1) = e(i);
    e(n - 1) = 0;

    const Scalar eps = std::numeric_limits<Scalar>::epsilon();
    const long max_sweeps = 60L * static_cast<long>(n) + 60;
    long sweeps = 0;
    Scalar f = 0;
    Scalar tst1 = 0;
    for (Eigen::Index l = 0; l < n; ++l) {
        tst1 = std::max(tst1, abs(d(l)) + abs(e(l)));
        Eigen::Index m = l;
        while (m < n) {
            if (abs(e(m)) <= eps * tst1) break;
            ++m;
        }
        if (m > l) {
            do {
                if (++sweeps > max_sweeps) throw NumericalError("sym_eigen: QL iteration did not converge");
                Scalar g = d(l);
                Scalar p = (d(l + 1) - g) / (Scalar(2) * e(l));
                Scalar r = std::hypot(p, Scalar(1));
                if (p < 0) r = -r;
                d(l) = e(l) / (p + r);
                d(l + 1) = e(l) * (p + r);
                const Scalar dl1 = d(l + 1);
                Scalar h = g - d(l);
                for (Eigen::Index i = l + 2; i < n; ++i) d(i) -= h;
                f += h;

                p = d(m);
                Scalar c = 1, c2 = 1, c3 = 1;
                const Scalar el1 = e(l + 1);
                Scalar s = 0, s2 = 0;
                for (Eigen::Index i = m - 1; i >= l; --i) {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e(i);
                    h = c * p;
                    r = std::hypot(p, e(i));
                    e(i + 1) = s * r;
                    s = e(i) / r;
                    c = p / r;
                    p = c * d(i) - s * g;
                    d(i + 1) = h + s * (c * g + s * d(i));
                    for (Eigen::Index k = 0; k < n; ++k) {
                        h = V(k, i + 1);
                        V(k, i + 1) = s * V(k, i) + c * h;
                        V(k, i) = c * V(k, i) - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e(l) / dl1;
                e(l) = s * p;
                d(l) = c * p;
            } while (abs(e(l)) > eps * tst1);
        }
        d(l) += f;
        e(l) = 0;
    }
}

}  // namespace detail

/// The k smallest eigenpairs of a symmetric matrix, eigenvalues ascending.
///
/// Full tridiagonal QL decomposition; intended for n up to a few hundred.
/// Eigenvectors are unit norm with the sign fixed so that the first
/// component of magnitude above 64 * epsilon is positive. Equal eigenvalues
/// keep the order the QL sweep produced them in, so the output is a pure
/// function of the input bits. Throws NumericalError if any returned pair
/// has ||A v - lambda v|| > tol * ||A||_F (tol <= 0 disables the check).
template <typename Scalar>
EigenPairs<Scalar> sym_eigen_smallest(const DenseSymMatrix<Scalar>& a, Eigen::Index k, Scalar tol = Scalar(1e-6)) {
    const Eigen::Index n = a.order();
    if (k < 1 || k > n) {
        throw ArgumentError("sym_eigen_smallest: need 1 <= k <= n (k=" + std::to_string(k) +
                            ", n=" + std::to_string(n) + ")");
    }
    const auto& A = a.matrix();
    if (!A.allFinite()) throw ArgumentError("sym_eigen_smallest: non-finite entries");

    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> V = A;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> d;
    detail::tridiagonal_ql(V, d);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return d(x) < d(y); });

    EigenPairs<Scalar> out;
    out.values.resize(k);
    out.vectors.resize(n, k);
    const Scalar sign_floor = Scalar(64) * std::numeric_limits<Scalar>::epsilon();
    for (Eigen::Index c = 0; c < k; ++c) {
        const Eigen::Index src = order[static_cast<std::size_t>(c)];
        out.values(c) = d(src);
        auto v = out.vectors.col(c);
        v = V.col(src);
        v.normalize();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(v(i)) > sign_floor) {
                if (v(i) < 0) v = -v;
                break;
            }
        }
    }

    if (tol > Scalar(0)) {
        const Scalar bound = tol * A.norm();
        for (Eigen::Index c = 0; c < k; ++c) {
            const Scalar res = (A * out.vectors.col(c) - out.values(c) * out.vectors.col(c)).norm();
            if (!(res <= bound)) {
                throw NumericalError("sym_eigen_smallest: residual " + std::to_string(double(res)) +
                                     " exceeds bound " + std::to_string(double(bound)));
            }
        }
    }
    return out;
}

}  // namespace fsel
