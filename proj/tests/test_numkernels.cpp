#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "fsel/distance.hpp"
#include "fsel/error.hpp"
#include "fsel/kmeans.hpp"
#include "fsel/sym_eigen.hpp"
#include "oracles.hpp"

using namespace fsel;

namespace {

Eigen::MatrixXd random_symmetric(std::mt19937_64& gen, Eigen::Index n) {
    std::normal_distribution<double> nd;
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(gen);
    return (m + m.transpose()) / 2;
}

}  // namespace

TEST_CASE("DenseSymMatrix symmetrizes and rejects bad input") {
    Eigen::Matrix2d m;
    m << 1, 2, 4, 3;
    DenseSymMatrix<double> a(m);
    CHECK(a(0, 1) == 3.0);
    CHECK(a(1, 0) == 3.0);
    CHECK_THROWS_AS(DenseSymMatrix<double>(Eigen::MatrixXd(2, 3)), ArgumentError);
    m(0, 0) = NAN;
    CHECK_THROWS_AS(DenseSymMatrix<double>{m}, ArgumentError);
}

TEST_CASE("identity n=4 k=2") {
    const auto r = sym_eigen_smallest(DenseSymMatrix<double>(Eigen::Matrix4d::Identity()), 2);
    CHECK(r.values(0) == doctest::Approx(1.0));
    CHECK(r.values(1) == doctest::Approx(1.0));
    CHECK((r.vectors.transpose() * r.vectors - Eigen::Matrix2d::Identity()).norm() < 1e-12);
}

TEST_CASE("diag(3,1,2) k=2") {
    const auto r = sym_eigen_smallest(DenseSymMatrix<double>(Eigen::Vector3d(3, 1, 2).asDiagonal().toDenseMatrix()), 2);
    CHECK(r.values(0) == doctest::Approx(1.0));
    CHECK(r.values(1) == doctest::Approx(2.0));
    CHECK(std::abs(r.vectors(1, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(r.vectors(2, 1)) == doctest::Approx(1.0));
    // sign convention: first significant component positive
    CHECK(r.vectors(1, 0) > 0);
    CHECK(r.vectors(2, 1) > 0);
}

TEST_CASE("k out of range") {
    DenseSymMatrix<double> a(Eigen::Matrix3d::Identity());
    CHECK_THROWS_AS(sym_eigen_smallest(a, 0), ArgumentError);
    CHECK_THROWS_AS(sym_eigen_smallest(a, 4), ArgumentError);
}

TEST_CASE("random 6x6 agrees with Jacobi and Eigen oracles") {
    std::mt19937_64 gen(21);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::MatrixXd m = random_symmetric(gen, 6);
        const auto r = sym_eigen_smallest(DenseSymMatrix<double>(m), 6);
        const auto jac = oracle::jacobi_eigenvalues(m);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
        for (int i = 0; i < 6; ++i) {
            CHECK(std::abs(r.values(i) - static_cast<double>(jac[static_cast<std::size_t>(i)])) <= 1e-8);
            CHECK(std::abs(r.values(i) - es.eigenvalues()(i)) <= 1e-8);
        }
    }
}

TEST_CASE("residual and orthogonality on 500 random matrices up to n=196") {
    std::mt19937_64 gen(22);
    std::uniform_int_distribution<int> size(1, 196);
    double worst_res = 0, worst_orth = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const Eigen::Index n = trial < 5 ? 196 : size(gen);
        const Eigen::MatrixXd m = random_symmetric(gen, n);
        const Eigen::Index k = std::min<Eigen::Index>(n, 1 + static_cast<Eigen::Index>(gen() % 8));
        const auto r = sym_eigen_smallest(DenseSymMatrix<double>(m), k, 0.0);
        const double fro = m.norm();
        for (Eigen::Index c = 0; c < k; ++c) {
            worst_res = std::max(worst_res, (m * r.vectors.col(c) - r.values(c) * r.vectors.col(c)).norm() / fro);
            if (c > 0) CHECK(r.values(c - 1) <= r.values(c));
        }
        worst_orth = std::max(worst_orth, (r.vectors.transpose() * r.vectors - Eigen::MatrixXd::Identity(k, k))
                                              .cwiseAbs()
                                              .maxCoeff());
    }
    MESSAGE("worst relative residual " << worst_res << ", worst orthogonality error " << worst_orth);
    CHECK(worst_res <= 1e-6);
    CHECK(worst_orth <= 1e-6);
}

TEST_CASE("eigensolver is bitwise deterministic") {
    std::mt19937_64 gen(23);
    const Eigen::MatrixXd m = random_symmetric(gen, 40);
    const auto a = sym_eigen_smallest(DenseSymMatrix<double>(m), 5);
    const auto b = sym_eigen_smallest(DenseSymMatrix<double>(m), 5);
    CHECK(a.values == b.values);
    CHECK(a.vectors == b.vectors);
}

TEST_CASE("kmeans k=m gives a permutation") {
    std::mt19937_64 gen(31);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd pts(12, 3);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = nd(gen);
    const auto r = kmeans(pts, 12, 5);
    std::vector<int> sorted = r.labels;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> want(12);
    std::iota(want.begin(), want.end(), 0);
    CHECK(sorted == want);
}

TEST_CASE("kmeans k=1 gives one label and the mean") {
    std::mt19937_64 gen(32);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd pts(30, 4);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = nd(gen);
    const auto r = kmeans(pts, 1, 1);
    CHECK(std::all_of(r.labels.begin(), r.labels.end(), [](int l) { return l == 0; }));
    CHECK((r.centroids.row(0) - pts.colwise().mean()).norm() < 1e-12);
}

TEST_CASE("kmeans recovers two planted centers") {
    std::mt19937_64 gen(33);
    std::normal_distribution<double> nd(0.0, 0.1);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd pts(20, 2);
        std::vector<int> truth(20);
        for (int i = 0; i < 20; ++i) {
            truth[static_cast<std::size_t>(i)] = static_cast<int>(gen() % 2);
            const double cx = truth[static_cast<std::size_t>(i)] ? 10.0 : -10.0;
            pts(i, 0) = cx + nd(gen);
            pts(i, 1) = nd(gen);
        }
        const auto r = kmeans(pts, 2, static_cast<std::uint64_t>(trial));
        const int flip = r.labels[0] != truth[0];
        for (int i = 0; i < 20; ++i) CHECK((r.labels[static_cast<std::size_t>(i)] ^ flip) == truth[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("kmeans objective is non-increasing and clusters are nonempty") {
    std::mt19937_64 gen(34);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index m = 10 + static_cast<Eigen::Index>(gen() % 60);
        Eigen::MatrixXd pts(m, 3);
        for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = nd(gen);
        const int k = 1 + static_cast<int>(gen() % 8);
        const auto r = kmeans(pts, k, static_cast<std::uint64_t>(trial));
        for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
            CHECK(r.objective_trace[i] <= r.objective_trace[i - 1] * (1 + 1e-12));
        }
        std::set<int> used(r.labels.begin(), r.labels.end());
        CHECK(static_cast<int>(used.size()) == k);
    }
}

TEST_CASE("kmeans handles duplicate points and bad k") {
    const Eigen::MatrixXd pts = Eigen::MatrixXd::Ones(6, 2);
    const auto r = kmeans(pts, 3, 0);
    CHECK(std::set<int>(r.labels.begin(), r.labels.end()).size() == 3);
    CHECK_THROWS_AS(kmeans(pts, 7, 0), ArgumentError);
    CHECK_THROWS_AS(kmeans(pts, 0, 0), ArgumentError);
    const auto a = kmeans(pts, 3, 9);
    const auto b = kmeans(pts, 3, 9);
    CHECK(a.labels == b.labels);
}

TEST_CASE("cosine distance examples") {
    const Eigen::Vector3d a(1, 2, 3);
    CHECK(cosine_distance(a, a) == 0.0);
    CHECK(cosine_distance(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)) == doctest::Approx(1.0));
    CHECK(cosine_distance(Eigen::Vector2d(1, 0), Eigen::Vector2d(-1, 0)) == doctest::Approx(2.0));
    CHECK_THROWS_AS(cosine_distance(a, Eigen::Vector3d::Zero()), ArgumentError);
    CHECK_THROWS_AS(cosine_distance(a, Eigen::Vector2d(1, 1)), ArgumentError);
}

TEST_CASE("cosine distance is scale invariant") {
    std::mt19937_64 gen(41);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::VectorXd a(1 + gen() % 400);
        for (auto& x : a) x = nd(gen);
        for (double c : {0.5, 1.0, 3.0, 1e-3, 1e3}) CHECK(cosine_distance(a, (c * a).eval()) <= 1e-15);
        CHECK(cosine_distance(a, (2.0 * a).eval()) == 0.0);  // power-of-two scaling is exact
    }
}

TEST_CASE("distances match extended-precision oracle") {
    std::mt19937_64 gen(42);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + gen() % 512;
        Eigen::VectorXd a(n), b(n);
        for (auto& x : a) x = nd(gen);
        for (auto& x : b) x = nd(gen);
        CHECK(std::abs(cosine_distance(a, b) - static_cast<double>(oracle::cosine(a.data(), b.data(), n))) <= 1e-7);
        const double e = euclidean_distance(a, b);
        CHECK(std::abs(e - static_cast<double>(oracle::euclidean(a.data(), b.data(), n))) <= 1e-7 * std::max(1.0, e));
    }
}

TEST_CASE("euclidean examples and distance dispatch") {
    const Eigen::Vector2f x(1, 0), y(0, 1);
    CHECK(euclidean_distance(x, x) == 0.0);
    CHECK(euclidean_distance(x, y) == doctest::Approx(std::sqrt(2.0)));
    CHECK(distance(Distance::euclidean, x, y) == doctest::Approx(std::sqrt(2.0)));
    CHECK(distance(Distance::cosine, x, y) == doctest::Approx(1.0));
    CHECK(parse_distance("euc") == Distance::euclidean);
    CHECK(to_string(parse_distance("cosine")) == "cosine");
    CHECK_THROWS_AS(parse_distance("manhattan"), ArgumentError);
}

TEST_CASE("fixed order dot ignores alignment") {
    std::vector<double> buf(40);
    std::mt19937_64 gen(43);
    std::normal_distribution<double> nd;
    std::vector<double> v(33);
    for (auto& x : v) x = nd(gen);
    const double ref = fixed_order_dot(v.data(), v.data(), v.size());
    for (std::size_t off = 0; off < 7; ++off) {
        std::copy(v.begin(), v.end(), buf.begin() + static_cast<std::ptrdiff_t>(off));
        CHECK(fixed_order_dot(buf.data() + off, v.data(), v.size()) == ref);
    }
}
