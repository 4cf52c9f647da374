#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "fsel/distance.hpp"
#include "fsel/error.hpp"
#include "fsel/pattern_extraction.hpp"
#include "oracles.hpp"

using namespace fsel;

namespace {

std::vector<long> as_long(const FilteredIndexSet& f) { return {f.indices.begin(), f.indices.end()}; }

Eigen::VectorXf to_vec(const std::vector<float>& v) {
    return Eigen::Map<const Eigen::VectorXf>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

TEST_CASE("config checks") {
    ExtractionConfig c;
    CHECK_NOTHROW(c.check());
    c.tau = 1.0;
    CHECK_THROWS_AS(c.check(), ArgumentError);
    c = {};
    c.k_patterns = 0;
    CHECK_THROWS_AS(c.check(), ArgumentError);
    c = {};
    c.d0 = 0;
    CHECK_THROWS_AS(c.check(), ArgumentError);
}

TEST_CASE("attention filter examples") {
    const auto uniform = attention_filter(Eigen::Vector4f::Constant(0.25f), 0.5);
    CHECK(as_long(uniform) == std::vector<long>{0, 1});
    const auto dominant = attention_filter(Eigen::Vector2f(0.9f, 0.1f), 0.5);
    CHECK(as_long(dominant) == std::vector<long>{0});
    const auto order = attention_filter(Eigen::Vector4f(0.1f, 0.4f, 0.2f, 0.3f), 0.75);
    CHECK(as_long(order) == std::vector<long>{1, 3});
}

TEST_CASE("attention filter matches sort-and-scan oracle on random softmax vectors") {
    std::mt19937_64 gen(51);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + gen() % 400;
        const auto ca = testdata::random_softmax(gen, n, 0.5 + (trial % 4));
        const double tau = trial % 5 == 0 ? 0.5 : std::uniform_real_distribution<double>(0.01, 0.99)(gen);
        CHECK(as_long(attention_filter(to_vec(ca), tau)) == oracle::attention_filter(ca, tau));
    }
}

TEST_CASE("attention filter on all 720 permutations of a tied 6-vector") {
    const std::vector<float> values{0.25f, 0.125f, 0.125f, 0.25f, 0.0625f, 0.1875f};
    std::vector<int> perm{0, 1, 2, 3, 4, 5};
    int perms = 0;
    do {
        std::vector<float> ca(6);
        for (int i = 0; i < 6; ++i) ca[static_cast<std::size_t>(i)] = values[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        for (double tau : {0.05, 0.25, 0.375, 0.5, 0.625, 0.9375, 0.99}) {
            CHECK(as_long(attention_filter(to_vec(ca), tau)) == oracle::attention_filter(ca, tau));
        }
        ++perms;
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(perms == 720);
}

TEST_CASE("locality mask examples") {
    std::mt19937_64 gen(52);
    Eigen::MatrixXf pa(9, 9);
    for (Eigen::Index i = 0; i < pa.size(); ++i) pa.data()[i] = std::uniform_real_distribution<float>(0.01f, 1.0f)(gen);
    FilteredIndexSet all;
    all.indices.resize(9);
    std::iota(all.indices.begin(), all.indices.end(), Eigen::Index{0});

    SUBCASE("no masking when d0 covers the grid") {
        const auto m = locality_mask(pa, all, 2, 3, 3);
        CHECK(m == pa.cast<double>());
    }
    SUBCASE("3x3 corner keeps its neighbours and itself") {
        const auto m = locality_mask(pa, all, 1, 3, 3);
        const auto coords = oracle::grid_coords(3, 3);
        for (int i = 0; i < 9; ++i)
            for (int j = 0; j < 9; ++j) {
                const bool keep = oracle::chebyshev(coords[i], coords[j]) <= 1;
                CHECK(m(i, j) == (keep ? static_cast<double>(pa(i, j)) : 0.0));
            }
        int corner = 0;
        for (int j = 0; j < 9; ++j) corner += m(0, j) != 0.0;
        CHECK(corner == 4);
    }
    SUBCASE("permuted filtered order follows the indices") {
        FilteredIndexSet f;
        f.indices = {8, 0, 4};
        const auto m = locality_mask(pa, f, 1, 3, 3);
        CHECK(m(0, 1) == 0.0);  // cells 8 and 0 are two apart
        CHECK(m(0, 2) == static_cast<double>(pa(8, 4)));
        CHECK(m(2, 1) == static_cast<double>(pa(4, 0)));
    }
    SUBCASE("shape mismatch") { CHECK_THROWS_AS(locality_mask(pa, all, 1, 2, 3), ArgumentError); }
}

TEST_CASE("locality mask d0=2 on 14x14 leaves at most 25 nonzeros per row") {
    Eigen::MatrixXf pa = Eigen::MatrixXf::Constant(196, 196, 1.0f / 196);
    FilteredIndexSet all;
    all.indices.resize(196);
    std::iota(all.indices.begin(), all.indices.end(), Eigen::Index{0});
    const auto m = locality_mask(pa, all, 2, 14, 14);
    int max_nz = 0;
    for (int i = 0; i < 196; ++i) max_nz = std::max(max_nz, static_cast<int>((m.row(i).array() != 0.0).count()));
    CHECK(max_nz == 25);
}

TEST_CASE("spectral clustering examples") {
    SUBCASE("K=1") {
        const auto a = spectral_cluster(Eigen::MatrixXd::Random(7, 7).cwiseAbs(), 1, 1e-8, 0);
        CHECK(a.k_used == 1);
        CHECK(std::all_of(a.labels.begin(), a.labels.end(), [](int l) { return l == 0; }));
    }
    SUBCASE("two disconnected 4-blocks") {
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(8, 8);
        s.topLeftCorner(4, 4).setConstant(0.5);
        s.bottomRightCorner(4, 4).setConstant(0.25);
        const auto a = spectral_cluster(s, 2, 1e-8, 3);
        CHECK(a.labels == std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1});
    }
    SUBCASE("interleaved components get distinct labels") {
        // components {0,2,4}, {1,5}, {3}
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(6, 6);
        const std::vector<int> comp{0, 1, 0, 2, 0, 1};
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j)
                if (comp[i] == comp[j]) s(i, j) = 1.0;
        const auto a = spectral_cluster(s, 3, 1e-8, 0);
        CHECK(a.labels == comp);
    }
    SUBCASE("K larger than t") {
        const auto a = spectral_cluster(Eigen::MatrixXd::Identity(2, 2), 5, 1e-8, 0);
        CHECK(a.k_used == 2);
        CHECK(a.labels == std::vector<int>{0, 1});
    }
    SUBCASE("all-zero similarity still clusters") {
        const auto a = spectral_cluster(Eigen::MatrixXd::Zero(5, 5), 2, 1e-8, 0);
        CHECK(a.k_used == 2);
        CHECK(std::set<int>(a.labels.begin(), a.labels.end()).size() == 2);
    }
    SUBCASE("non-finite input") {
        Eigen::MatrixXd s = Eigen::MatrixXd::Ones(3, 3);
        s(1, 2) = NAN;
        CHECK_THROWS(spectral_cluster(s, 2, 1e-8, 0));
    }
}

TEST_CASE("spectral clustering recovers planted blocks") {
    std::mt19937_64 gen(53);
    int hits = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int t = 6 + static_cast<int>(gen() % 60);
        const auto [s, truth] = testdata::planted_two_block(gen, t);
        const auto a = spectral_cluster(s, 2, 1e-8, static_cast<std::uint64_t>(trial));
        hits += testdata::same_partition(a.labels, truth);
    }
    CHECK(hits >= 48);
}

TEST_CASE("connected components are never merged") {
    std::mt19937_64 gen(54);
    for (int trial = 0; trial < 40; ++trial) {
        const int t = 4 + static_cast<int>(gen() % 30);
        const int c = 1 + static_cast<int>(gen() % 4);
        std::vector<int> comp(static_cast<std::size_t>(t));
        for (int i = 0; i < t; ++i) comp[static_cast<std::size_t>(i)] = i % c;
        std::shuffle(comp.begin(), comp.end(), gen);
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(t, t);
        std::uniform_real_distribution<double> w(0.1, 1.0);
        for (int i = 0; i < t; ++i)
            for (int j = 0; j < t; ++j)
                if (comp[static_cast<std::size_t>(i)] == comp[static_cast<std::size_t>(j)]) s(i, j) = w(gen);
        const int k = c + static_cast<int>(gen() % 2);
        const auto a = spectral_cluster(s, k, 1e-8, static_cast<std::uint64_t>(trial));
        for (int i = 0; i < t; ++i)
            for (int j = 0; j < t; ++j)
                if (comp[static_cast<std::size_t>(i)] != comp[static_cast<std::size_t>(j)]) {
                    CHECK(a.labels[static_cast<std::size_t>(i)] != a.labels[static_cast<std::size_t>(j)]);
                }
    }
}

TEST_CASE("compute_patterns examples") {
    std::mt19937_64 gen(55);
    Eigen::MatrixXf f(5, 3);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = std::normal_distribution<float>()(gen);

    SUBCASE("singletons reproduce rows") {
        ClusterAssignment a{{0, 1, 2, 3, 4}, 5};
        const auto p = compute_patterns(f, a);
        CHECK(p.patterns == f.cast<double>());
        CHECK(p.member_counts == std::vector<std::uint32_t>(5, 1));
    }
    SUBCASE("identical rows") {
        Eigen::MatrixXf same = f.row(0).replicate(5, 1);
        ClusterAssignment a{{0, 1, 0, 1, 1}, 2};
        const auto p = compute_patterns(same, a);
        for (int j = 0; j < 2; ++j) CHECK((p.patterns.row(j) - same.row(0).cast<double>()).norm() < 1e-7);
    }
    SUBCASE("empty cluster or bad label") {
        CHECK_THROWS_AS(compute_patterns(f, ClusterAssignment{{0, 0, 0, 0, 0}, 2}), ArgumentError);
        CHECK_THROWS_AS(compute_patterns(f, ClusterAssignment{{0, 0, 3, 0, 1}, 2}), ArgumentError);
        CHECK_THROWS_AS(compute_patterns(f, ClusterAssignment{{0, 1}, 2}), ArgumentError);
    }
}

TEST_CASE("compute_patterns matches accumulation oracle") {
    std::mt19937_64 gen(56);
    for (int trial = 0; trial < 200; ++trial) {
        const int t = 1 + static_cast<int>(gen() % 50);
        const int k = 1 + static_cast<int>(gen() % std::min(t, 6));
        Eigen::MatrixXf f(t, 16);
        for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = std::normal_distribution<float>()(gen);
        ClusterAssignment a;
        a.k_used = k;
        for (int i = 0; i < t; ++i) a.labels.push_back(i < k ? i : static_cast<int>(gen() % k));
        const auto p = compute_patterns(f, a);
        for (int j = 0; j < k; ++j) {
            std::vector<long double> sum(16, 0);
            long n = 0;
            for (int i = 0; i < t; ++i) {
                if (a.labels[static_cast<std::size_t>(i)] != j) continue;
                ++n;
                for (int c = 0; c < 16; ++c) sum[static_cast<std::size_t>(c)] += f(i, c);
            }
            CHECK(p.member_counts[static_cast<std::size_t>(j)] == n);
            for (int c = 0; c < 16; ++c) CHECK(std::abs(p.patterns(j, c) - static_cast<double>(sum[static_cast<std::size_t>(c)] / n)) <= 1e-6);
        }
    }
}

TEST_CASE("extraction on a 14x14 synthetic record") {
    SynthSpec spec;
    spec.num_images = 3;
    spec.seed = 8;
    const auto recs = generate_synthetic_bundle(spec);
    ExtractionConfig cfg;
    for (const auto& r : recs) {
        const auto p = extract_image_patterns(r, cfg);
        CHECK(p.image_id == r.image_id);
        CHECK(p.k_used() >= 1);
        CHECK(p.k_used() <= 5);
        CHECK(p.dim() == 384);
        const auto f = attention_filter(r.cls_attention, cfg.tau);
        CHECK(std::accumulate(p.member_counts.begin(), p.member_counts.end(), std::size_t{0}) == f.size());
        const auto again = extract_image_patterns(r, cfg);
        CHECK(again.patterns == p.patterns);
        CHECK(again.member_counts == p.member_counts);
    }
}

TEST_CASE("K=1 yields the mean of the filtered features") {
    std::mt19937_64 gen(57);
    for (int trial = 0; trial < 20; ++trial) {
        const auto r = testdata::random_record(gen, "r", 8, 16);
        ExtractionConfig cfg;
        cfg.k_patterns = 1;
        const auto p = extract_image_patterns(r, cfg);
        REQUIRE(p.k_used() == 1);
        const std::vector<float> ca(r.cls_attention.data(), r.cls_attention.data() + r.cls_attention.size());
        const auto kept = oracle::attention_filter(ca, cfg.tau);
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(r.feat_dim);
        for (long i : kept) mean += r.patch_features.row(i).cast<double>();
        mean /= static_cast<double>(kept.size());
        CHECK((p.patterns.row(0) - mean).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("planted noise-free categories give patterns at their centroids") {
    SynthSpec spec;
    spec.num_images = 400;
    spec.grid_h = 14;
    spec.grid_w = 14;
    spec.feat_dim = 64;
    spec.num_latent_categories = 3;
    spec.noise_scale = 0.0;
    spec.seed = 12;
    const Eigen::MatrixXd c = synthetic_centroids(spec);
    ExtractionConfig cfg;
    cfg.k_patterns = 3;
    int checked = 0;
    for (std::uint64_t i = 0; i < spec.num_images && checked < 10; ++i) {
        const auto img = generate_synthetic_image(spec, c, i);
        if (img.categories.size() != 3) continue;
        // all three categories must survive the attention filter
        const auto f = attention_filter(img.record.cls_attention, cfg.tau);
        std::set<int> kept;
        for (auto r : f.indices) kept.insert(img.region_category[static_cast<std::size_t>(r)]);
        if (kept.size() != 3) continue;
        ++checked;
        const auto p = extract_image_patterns(img.record, cfg);
        REQUIRE(p.k_used() == 3);
        std::set<int> matched;
        for (int j = 0; j < 3; ++j) {
            for (int cat = 0; cat < 3; ++cat) {
                if (cosine_distance(p.patterns.row(j), c.row(cat)) <= 0.05) matched.insert(cat);
            }
        }
        CHECK(matched.size() == 3);
    }
    CHECK(checked == 10);
}

TEST_CASE("extract_all keeps order and ignores thread count") {
    SynthSpec spec;
    spec.num_images = 24;
    spec.grid_h = 7;
    spec.grid_w = 7;
    spec.feat_dim = 32;
    spec.seed = 2;
    const auto recs = generate_synthetic_bundle(spec);
    ExtractionConfig cfg;
    const auto one = extract_all(recs, cfg, 1);
    const auto many = extract_all(recs, cfg, 8);
    REQUIRE(one.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(one[i].image_id == recs[i].image_id);
        CHECK(many[i].image_id == recs[i].image_id);
        CHECK(one[i].patterns == many[i].patterns);
        CHECK(one[i].member_counts == many[i].member_counts);
    }
}
