#include <gtest/gtest.h>

#include "anonymixer/cluster.hpp"
#include "anonymixer/dataio.hpp"
#include "anonymixer/metrics.hpp"
#include "oracles.hpp"

using namespace anonymixer;

namespace {

Matrix four_points() { return Matrix::from_rows({{0, 0}, {0, 1}, {10, 0}, {10, 1}}); }

Matrix random_points(std::uint64_t seed, std::size_t n, std::size_t m) {
    Rng rng(seed);
    Matrix x(n, m);
    for (auto& v : x.data()) v = rng.normal();
    return x;
}

// Two dense squares of 50 points each, 20 units apart.
Matrix two_grids() {
    std::vector<std::vector<double>> rows;
    for (double ox : {0.0, 20.0})
        for (int i = 0; i < 50; ++i) rows.push_back({ox + 0.1 * (i % 10), 0.1 * (i / 10)});
    return Matrix::from_rows(rows);
}

}  // namespace

TEST(KMeans, FourPointExample) {
    const auto [model, a] = kmeans_fit(four_points(), 2, 1);
    EXPECT_DOUBLE_EQ(model.inertia, 1.0);
    EXPECT_EQ(oracle::partition(a.labels), (std::set<std::vector<std::size_t>>{{0, 1}, {2, 3}}));
    std::set<std::vector<double>> centroids;
    for (std::size_t c = 0; c < 2; ++c) centroids.insert(oracle::row_of(model.centroids, c));
    EXPECT_EQ(centroids, (std::set<std::vector<double>>{{0, 0.5}, {10, 0.5}}));
}

TEST(KMeans, FourPointInertiaMatchesBestPartition) {
    const auto x = four_points();
    double best = std::numeric_limits<double>::infinity();
    for (int mask = 1; mask < 7; ++mask) {
        std::vector<std::size_t> a, b;
        for (std::size_t i = 0; i < 4; ++i) ((mask >> i) & 1 ? a : b).push_back(i);
        best = std::min(best, oracle::within_ss(x, {a, b}));
    }
    EXPECT_DOUBLE_EQ(kmeans_fit(x, 2, 9).first.inertia, best);
}

TEST(KMeans, KEqualsNGivesZeroInertia) {
    const auto x = random_points(3, 6, 2);
    const auto [model, a] = kmeans_fit(x, 6, 3);
    EXPECT_EQ(model.inertia, 0.0);
    EXPECT_EQ(oracle::partition(a.labels).size(), 6u);
}

TEST(KMeans, InvalidK) {
    const auto x = four_points();
    EXPECT_THROW(kmeans_fit(x, 0, 1), Error);
    EXPECT_THROW(kmeans_fit(x, 5, 1), Error);
}

TEST(KMeans, InertiaTraceNonIncreasingAndDeterministic) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto x = random_points(seed, 120, 3);
        const auto [m1, a1] = kmeans_fit(x, 4, seed);
        const auto [m2, a2] = kmeans_fit(x, 4, seed);
        EXPECT_EQ(a1, a2);
        EXPECT_EQ(m1.centroids, m2.centroids);
        for (std::size_t i = 1; i < m1.inertia_trace.size(); ++i)
            EXPECT_LE(m1.inertia_trace[i], m1.inertia_trace[i - 1] + 1e-9);
        a1.validate();
    }
}

TEST(Dbscan, TwoBlobsTwentyApart) {
    const auto a = dbscan_fit(two_grids(), {1.0, 5});
    EXPECT_EQ(a.n_clusters, 2);
    EXPECT_EQ(a.noise_count(), 0u);
}

TEST(Dbscan, IsolatedPointIsNoise) {
    auto rows = std::vector<std::vector<double>>{};
    const auto g = two_grids();
    for (std::size_t i = 0; i < 50; ++i) rows.push_back(oracle::row_of(g, i));
    rows.push_back({100.0, 100.0});
    const auto a = dbscan_fit(Matrix::from_rows(rows), {1.0, 5});
    EXPECT_EQ(a.labels.back(), kNoiseLabel);
    EXPECT_EQ(a.noise_count(), 1u);
}

TEST(Dbscan, HugeEpsOneCluster) {
    const auto a = dbscan_fit(two_grids(), {1000.0, 5});
    EXPECT_EQ(a.n_clusters, 1);
    EXPECT_EQ(a.noise_count(), 0u);
}

TEST(Dbscan, InvalidParams) {
    EXPECT_THROW(dbscan_fit(four_points(), {0.0, 5}), Error);
    EXPECT_THROW(dbscan_fit(four_points(), {1.0, 0}), Error);
}

// Density-reachability closure computed independently: core points within eps
// are connected, so clusters are the connected components of the core graph.
TEST(Dbscan, CoreComponentsMatchBruteForceClosure) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto x = random_points(seed, 80, 2);
        const double eps = 0.4;
        const std::size_t min_pts = 4;
        const auto a = dbscan_fit(x, {eps, min_pts});
        std::vector<bool> core(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            std::size_t c = 0;
            for (std::size_t j = 0; j < x.rows(); ++j) c += oracle::dist(x, i, j) <= eps;
            core[i] = c >= min_pts;
        }
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.rows(); ++j)
                if (core[i] && core[j] && oracle::dist(x, i, j) <= eps) {
                    EXPECT_EQ(a.labels[i], a.labels[j]);
                }
        for (std::size_t i = 0; i < x.rows(); ++i) {
            bool reachable = core[i];
            for (std::size_t j = 0; j < x.rows() && !reachable; ++j)
                reachable = core[j] && oracle::dist(x, i, j) <= eps;
            EXPECT_EQ(a.labels[i] != kNoiseLabel, reachable) << "row " << i;
        }
    }
}

TEST(Dbscan, KDistanceGridGuaranteesCoreFraction) {
    Rng rng(31);
    Matrix x(150, 3);
    for (auto& v : x.data()) v = rng.normal();
    const std::vector<double> qs{0.5, 0.9, 0.99, 1.0};
    for (std::size_t min_pts : {1u, 5u, 10u}) {
        const auto grid = kdistance_eps_grid(x, min_pts, qs);
        ASSERT_EQ(grid.size(), qs.size());
        EXPECT_TRUE(std::is_sorted(grid.begin(), grid.end()));
        for (std::size_t g = 0; g < grid.size(); ++g) {
            std::size_t cores = 0;
            for (std::size_t i = 0; i < x.rows(); ++i) {
                std::size_t within = 0;
                for (std::size_t j = 0; j < x.rows(); ++j) within += oracle::dist(x, i, j) <= grid[g];
                cores += within >= min_pts;
            }
            EXPECT_GE(static_cast<double>(cores), qs[g] * 150.0) << "min_pts " << min_pts << " q " << qs[g];
        }
        if (min_pts == 1) {
            EXPECT_EQ(grid.front(), 0.0);
        }
    }
    EXPECT_THROW(kdistance_eps_grid(x, 151, qs), Error);
    EXPECT_THROW(kdistance_eps_grid(x, 5, {0.0}), Error);
}

TEST(Agglomerative, FourPointExample) {
    const auto [tree, a] = agglomerative_fit(four_points(), 2);
    EXPECT_EQ(oracle::partition(a.labels), (std::set<std::vector<std::size_t>>{{0, 1}, {2, 3}}));
    ASSERT_EQ(tree.merges.size(), 3u);
    EXPECT_DOUBLE_EQ(tree.merges[0].ward_cost, 0.5);
    EXPECT_DOUBLE_EQ(tree.merges[2].ward_cost, 100.0);
}

TEST(Agglomerative, KEqualsNKeepsSingletons) {
    const auto [tree, a] = agglomerative_fit(four_points(), 4);
    EXPECT_EQ(a.n_clusters, 4);
}

TEST(Agglomerative, InvalidK) {
    EXPECT_THROW(agglomerative_fit(four_points(), 0), Error);
    EXPECT_THROW(agglomerative_fit(four_points(), 5), Error);
}

TEST(Agglomerative, MergeCostsMatchGreedyRecomputation) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto x = random_points(seed, 25, 3);
        const auto [tree, a] = agglomerative_fit(x, 1);
        const auto greedy = oracle::ward_greedy(x);
        ASSERT_EQ(tree.merges.size(), greedy.size());
        double prev = 0.0;
        for (std::size_t t = 0; t < greedy.size(); ++t) {
            EXPECT_NEAR(tree.merges[t].ward_cost, greedy[t].cost, 1e-9 * std::max(1.0, greedy[t].cost));
            EXPECT_GE(tree.merges[t].ward_cost, prev - 1e-12);
            EXPECT_EQ(tree.merges[t].new_size, greedy[t].members.size());
            prev = tree.merges[t].ward_cost;
        }
    }
}

TEST(Agglomerative, CutsAreNested) {
    const auto x = random_points(8, 40, 2);
    const auto [tree, a] = agglomerative_fit(x, 1);
    for (std::size_t k = 2; k <= 6; ++k) {
        const auto fine = cut_tree(tree, k).labels;
        const auto coarse = cut_tree(tree, k - 1).labels;
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.rows(); ++j)
                if (fine[i] == fine[j]) {
                    EXPECT_EQ(coarse[i], coarse[j]);
                }
    }
}

TEST(Agglomerative, AgreesWithKMeansOnSeparatedBlobs) {
    const auto [d, truth] = generate_toy_telemetry(21, 200, 3, 5, 10.0);
    const auto ag = agglomerative_fit(d.values(), 3).second;
    const auto km = kmeans_fit(d.values(), 3, 21).second;
    EXPECT_EQ(oracle::partition(ag.labels), oracle::partition(km.labels));
}
