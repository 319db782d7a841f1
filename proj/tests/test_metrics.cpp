#include <gtest/gtest.h>

#include <cmath>

#include "anonymixer/dataio.hpp"
#include "anonymixer/metrics.hpp"
#include "oracles.hpp"

using namespace anonymixer;

namespace {

const Matrix kFour = Matrix::from_rows({{0, 0}, {0, 1}, {10, 0}, {10, 1}});
const std::vector<int> kFourLabels{0, 0, 1, 1};

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

struct Case {
    Matrix x;
    std::vector<int> labels;
};

Case random_case(std::uint64_t seed, bool with_noise) {
    Rng rng(seed);
    const std::size_t n = 10 + rng.index(191);
    const std::size_t m = 1 + rng.index(6);
    const std::size_t k = 2 + rng.index(std::min<std::size_t>(5, n / 3));
    Case c{Matrix(n, m), std::vector<int>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        c.labels[i] = static_cast<int>(i < k ? i : rng.index(k));
        for (std::size_t j = 0; j < m; ++j) c.x(i, j) = rng.normal() + 3.0 * c.labels[i];
    }
    if (with_noise)
        for (std::size_t i = k; i < n; ++i)
            if (rng.uniform() < 0.1) c.labels[i] = kNoiseLabel;
    return c;
}

}  // namespace

TEST(Metrics, FourPointExample) {
    const double b = (10.0 + std::sqrt(101.0)) / 2.0;
    EXPECT_NEAR(silhouette(kFour, kFourLabels), 1.0 - 1.0 / b, 1e-15);
    EXPECT_NEAR(silhouette(kFour, kFourLabels), 0.9002, 5e-5);
    EXPECT_DOUBLE_EQ(calinski_harabasz(kFour, kFourLabels), 200.0);
    EXPECT_DOUBLE_EQ(davies_bouldin(kFour, kFourLabels), 0.1);
    const auto s = score_all(kFour, kFourLabels);
    EXPECT_EQ(s.n_effective_rows, 4u);
}

TEST(Metrics, SingletonsScoreZero) {
    EXPECT_EQ(silhouette(kFour, {0, 1, 2, 3}), 0.0);
    EXPECT_EQ(davies_bouldin(kFour, {0, 1, 2, 3}), 0.0);
}

TEST(Metrics, DuplicatedPointsSplitAcrossLabelsScoreNonPositive) {
    Rng rng(3);
    Matrix x(40, 2);
    std::vector<int> labels(40);
    for (std::size_t i = 0; i < 20; ++i) {
        for (std::size_t j = 0; j < 2; ++j) x(i, j) = x(i + 20, j) = rng.normal();
        labels[i] = 0;
        labels[i + 20] = 1;
    }
    EXPECT_LE(silhouette(x, labels), 0.0);
    EXPECT_NEAR(silhouette(x, labels), oracle::silhouette(x, labels), 1e-12);
}

TEST(Metrics, FewerThanTwoClustersIsUndefined) {
    for (auto f : {&silhouette, &calinski_harabasz, &davies_bouldin}) {
        try {
            f(kFour, {0, 0, 0, 0});
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::undefined_metric);
        }
    }
    EXPECT_THROW(score_all(kFour, {0, 0, -1, -1}), Error);
    EXPECT_THROW(calinski_harabasz(kFour, {0, 1, 2, 3}), Error);
}

TEST(Metrics, CollapsedClustersGiveInfiniteCH) {
    const auto x = Matrix::from_rows({{0, 0}, {0, 0}, {5, 5}, {5, 5}});
    EXPECT_TRUE(std::isinf(calinski_harabasz(x, kFourLabels)));
    EXPECT_EQ(davies_bouldin(x, kFourLabels), 0.0);
}

TEST(Metrics, CoincidentCentroidsGiveInfiniteDB) {
    const auto x = Matrix::from_rows({{-1, 0}, {1, 0}, {0, -1}, {0, 1}});
    EXPECT_TRUE(std::isinf(davies_bouldin(x, kFourLabels)));
}

TEST(Metrics, NoiseRowsExcluded) {
    const auto x = Matrix::from_rows({{0, 0}, {0, 1}, {10, 0}, {10, 1}, {500, -300}});
    const auto s = score_all(x, {0, 0, 1, 1, kNoiseLabel});
    EXPECT_EQ(s.n_effective_rows, 4u);
    EXPECT_DOUBLE_EQ(s.calinski_harabasz, 200.0);
    EXPECT_DOUBLE_EQ(s.davies_bouldin, 0.1);
}

TEST(Metrics, RandomLabelsScoreBelowStructuredLabels) {
    const auto [d, truth] = generate_toy_telemetry(5, 150, 3, 4, 6.0);
    Rng rng(5);
    std::vector<int> noise(150);
    for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = static_cast<int>(i < 3 ? i : rng.index(3));
    EXPECT_LT(calinski_harabasz(d.values(), noise), calinski_harabasz(d.values(), truth.labels));
    EXPECT_LT(silhouette(d.values(), noise), silhouette(d.values(), truth.labels));
}

TEST(Metrics, AgreeWithOracleOnRandomCases) {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto c = random_case(seed, seed % 3 == 0);
        const auto s = score_all(c.x, c.labels);
        EXPECT_LE(rel(s.silhouette, oracle::silhouette(c.x, c.labels)), 1e-9) << "seed " << seed;
        EXPECT_LE(rel(s.calinski_harabasz, oracle::calinski_harabasz(c.x, c.labels)), 1e-9) << "seed " << seed;
        EXPECT_LE(rel(s.davies_bouldin, oracle::davies_bouldin(c.x, c.labels)), 1e-9) << "seed " << seed;
        EXPECT_GE(s.silhouette, -1.0);
        EXPECT_LE(s.silhouette, 1.0);
    }
}

TEST(Metrics, InvariantUnderRelabeling) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto c = random_case(seed, true);
        auto swapped = c.labels;
        for (auto& l : swapped)
            if (l >= 0) l = 100 - l;
        const auto a = score_all(c.x, c.labels), b = score_all(c.x, swapped);
        EXPECT_EQ(a.silhouette, b.silhouette);
        EXPECT_EQ(a.n_effective_rows, b.n_effective_rows);
        // centroid order follows label order, so sums may round differently
        EXPECT_NEAR(a.calinski_harabasz, b.calinski_harabasz, 1e-12 * a.calinski_harabasz);
        EXPECT_NEAR(a.davies_bouldin, b.davies_bouldin, 1e-12 * a.davies_bouldin);
    }
}

TEST(Metrics, InvariantUnderRowReordering) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto c = random_case(seed, false);
        std::vector<std::size_t> perm(c.x.rows());
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng(seed);
        rng.shuffle(perm);
        std::vector<int> labels;
        for (auto p : perm) labels.push_back(c.labels[p]);
        const auto a = score_all(c.x, c.labels);
        const auto b = score_all(c.x.select_rows(perm), labels);
        EXPECT_LE(rel(a.silhouette, b.silhouette), 1e-12);
        EXPECT_LE(rel(a.calinski_harabasz, b.calinski_harabasz), 1e-12);
        EXPECT_LE(rel(a.davies_bouldin, b.davies_bouldin), 1e-12);
    }
}

TEST(Metrics, CHAndDBInvariantUnderRotation) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto c = random_case(seed + 50, false);
        if (c.x.cols() < 2) continue;
        const double t = 0.3 * static_cast<double>(seed);
        Matrix r = c.x;
        for (std::size_t i = 0; i < r.rows(); ++i) {
            r(i, 0) = std::cos(t) * c.x(i, 0) - std::sin(t) * c.x(i, 1);
            r(i, 1) = std::sin(t) * c.x(i, 0) + std::cos(t) * c.x(i, 1);
        }
        EXPECT_LE(rel(calinski_harabasz(r, c.labels), calinski_harabasz(c.x, c.labels)), 1e-9);
        EXPECT_LE(rel(davies_bouldin(r, c.labels), davies_bouldin(c.x, c.labels)), 1e-9);
    }
}

TEST(Metrics, DBScaleInvariant) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto c = random_case(seed, false);
        Matrix doubled = c.x;
        for (auto& v : doubled.data()) v *= 2.0;
        EXPECT_LE(rel(davies_bouldin(doubled, c.labels), davies_bouldin(c.x, c.labels)), 1e-9);
    }
}

TEST(Selection, KMeansSweepFindsBlobCount) {
    for (std::size_t k : {2u, 3u}) {
        const auto [d, truth] = generate_toy_telemetry(17, 200, k, 15, 10.0);
        const auto sel = select_kmeans_k(d.values(), 2, 10, 17);
        EXPECT_EQ(sel.k_best, k);
        ASSERT_EQ(sel.sweep.size(), 9u);
        for (const auto& e : sel.sweep) EXPECT_LE(e.silhouette, sel.sweep[k - 2].silhouette);
        const auto best = sel.sweep[k - 2].silhouette;
        EXPECT_LE(rel(best, oracle::silhouette(d.values(), sel.assignment.labels)), 1e-9);
    }
}

TEST(Selection, KMeansInvalidRange) {
    EXPECT_THROW(select_kmeans_k(kFour, 1, 3, 1), Error);
    EXPECT_THROW(select_kmeans_k(kFour, 3, 2, 1), Error);
    EXPECT_THROW(select_kmeans_k(kFour, 2, 4, 1), Error);
}

TEST(Selection, DbscanPicksSeparatingEps) {
    const auto [d, truth] = generate_toy_telemetry(3, 200, 2, 2, 10.0);
    const auto sel = select_dbscan_params(d.values(), {0.01, 2.0, 50.0}, {5});
    EXPECT_EQ(sel.params.eps, 2.0);
    EXPECT_EQ(sel.assignment.n_clusters, 2);
    EXPECT_EQ(sel.grid.size(), 3u);
}

TEST(Selection, DbscanDegenerateGridIsNoValidParams) {
    const auto [d, truth] = generate_toy_telemetry(3, 100, 2, 2, 10.0);
    try {
        select_dbscan_params(d.values(), {1e-6}, {5});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::no_valid_params);
    }
}
