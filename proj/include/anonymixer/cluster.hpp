#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <tuple>
#include <utility>
#include <vector>

#include "anonymixer/assignment.hpp"
#include "anonymixer/error.hpp"
#include "anonymixer/matrix.hpp"
#include "anonymixer/random.hpp"

namespace anonymixer {

// ---------------------------------------------------------------------------
// K-means
// ---------------------------------------------------------------------------

struct KMeansModel {
    Matrix centroids;
    double inertia = 0.0;
    std::size_t iterations_run = 0;
    /// Inertia of each assignment step, in order. Non-increasing.
    std::vector<double> inertia_trace;
};

struct KMeansOptions {
    std::size_t max_iter = 300;
    double tol = 1e-8;
};

namespace detail {

/// Nearest centroid index (lowest index on ties) and its squared distance.
inline std::pair<std::size_t, double> nearest_centroid(std::span<const double> x, const Matrix& centroids) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
        const double d = squared_distance(x, centroids.row(c));
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return {best, best_d};
}

inline Matrix kmeans_plus_plus(const Matrix& x, std::size_t k, Rng& rng) {
    const std::size_t n = x.rows();
    Matrix centroids(k, x.cols());
    std::vector<bool> chosen(n, false);
    std::size_t first = rng.index(n);
    chosen[first] = true;
    std::copy(x.row(first).begin(), x.row(first).end(), centroids.row(0).begin());

    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(x.row(i), centroids.row(0));

    for (std::size_t c = 1; c < k; ++c) {
        double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t pick;
        if (total > 0.0) {
            pick = rng.categorical(d2);
        } else {
            // every remaining point coincides with a centroid
            std::vector<std::size_t> free;
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i]) free.push_back(i);
            pick = free[rng.index(free.size())];
        }
        chosen[pick] = true;
        std::copy(x.row(pick).begin(), x.row(pick).end(), centroids.row(c).begin());
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(x.row(i), centroids.row(c)));
    }
    return centroids;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding (single initialization per seed).
/// Empty clusters are reseeded to the point farthest from its own centroid.
inline std::pair<KMeansModel, ClusterAssignment> kmeans_fit(const Matrix& x, std::size_t k, std::uint64_t seed,
                                                            KMeansOptions options = {}) {
    const std::size_t n = x.rows();
    require(k >= 1, ErrorKind::parameter, "k-means requires k >= 1");
    require(k <= n, ErrorKind::parameter,
            "k-means requires k <= n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");

    Rng rng(seed);
    KMeansModel model;
    model.centroids = detail::kmeans_plus_plus(x, k, rng);

    std::vector<std::size_t> assign(n, 0);
    std::vector<double> dist(n, 0.0);
    auto assign_all = [&] {
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            auto [c, d] = detail::nearest_centroid(x.row(i), model.centroids);
            assign[i] = c;
            dist[i] = d;
            inertia += d;
        }
        return inertia;
    };

    for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
        model.inertia_trace.push_back(assign_all());
        ++model.iterations_run;

        Matrix next(k, x.cols(), 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[assign[i]];
            auto dst = next.row(assign[i]);
            auto src = x.row(i);
            for (std::size_t j = 0; j < x.cols(); ++j) dst[j] += src[j];
        }
        std::vector<bool> taken(n, false);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                for (auto& v : next.row(c)) v /= static_cast<double>(counts[c]);
                continue;
            }
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && dist[i] > far_d) {
                    far_d = dist[i];
                    far = i;
                }
            }
            taken[far] = true;
            dist[far] = 0.0;
            std::copy(x.row(far).begin(), x.row(far).end(), next.row(c).begin());
        }

        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            shift = std::max(shift, euclidean_distance(next.row(c), model.centroids.row(c)));
        model.centroids = std::move(next);
        if (shift < options.tol) break;
    }

    model.inertia = assign_all();
    std::vector<int> labels(assign.begin(), assign.end());
    const auto sizes = [&] {
        std::vector<std::size_t> s(k, 0);
        for (auto a : assign) ++s[a];
        return s;
    }();
    ClusterAssignment out;
    if (std::all_of(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; })) {
        out = ClusterAssignment{std::move(labels), static_cast<int>(k), false};
    } else {
        // only reachable with duplicate rows: coincident centroids share members
        out = compact_labels(labels, false);
    }
    return {std::move(model), std::move(out)};
}

// ---------------------------------------------------------------------------
// DBSCAN
// ---------------------------------------------------------------------------

struct DbscanParams {
    double eps = 0.5;
    std::size_t min_pts = 5;

    void validate() const {
        require(eps > 0.0 && std::isfinite(eps), ErrorKind::parameter, "DBSCAN eps must be > 0");
        require(min_pts >= 1, ErrorKind::parameter, "DBSCAN min_pts must be >= 1");
    }
};

/// Brute-force Euclidean DBSCAN. A point is core when its eps-neighbourhood
/// (itself included) holds at least min_pts points. Clusters are numbered in
/// ascending order of their lowest core row; a border point joins the first
/// cluster that reaches it.
inline ClusterAssignment dbscan_fit(const Matrix& x, const DbscanParams& params) {
    params.validate();
    const std::size_t n = x.rows();
    const double eps2 = params.eps * params.eps;

    std::vector<std::vector<std::size_t>> neighbors(n);
    for (std::size_t i = 0; i < n; ++i) {
        neighbors[i].push_back(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            if (squared_distance(x.row(i), x.row(j)) <= eps2) {
                neighbors[i].push_back(j);
                neighbors[j].push_back(i);
            }
        }
    }
    for (auto& nb : neighbors) std::sort(nb.begin(), nb.end());

    std::vector<bool> core(n);
    for (std::size_t i = 0; i < n; ++i) core[i] = neighbors[i].size() >= params.min_pts;

    std::vector<int> labels(n, kNoiseLabel);
    int next_cluster = 0;
    std::deque<std::size_t> frontier;
    for (std::size_t seed = 0; seed < n; ++seed) {
        if (!core[seed] || labels[seed] != kNoiseLabel) continue;
        const int id = next_cluster++;
        labels[seed] = id;
        frontier.push_back(seed);
        while (!frontier.empty()) {
            const std::size_t p = frontier.front();
            frontier.pop_front();
            for (std::size_t q : neighbors[p]) {
                if (labels[q] != kNoiseLabel) continue;
                labels[q] = id;
                if (core[q]) frontier.push_back(q);
            }
        }
    }
    return ClusterAssignment{std::move(labels), next_cluster, true};
}

/// Candidate eps values read off the sorted k-distance graph: for each
/// quantile q, the nearest-rank q-quantile of every row's distance to its
/// min_pts-th nearest row (itself included). At eps = that value at least a
/// fraction q of the rows are core points for this min_pts.
inline std::vector<double> kdistance_eps_grid(const Matrix& x, std::size_t min_pts,
                                              const std::vector<double>& quantiles) {
    const std::size_t n = x.rows();
    require(min_pts >= 1 && min_pts <= n, ErrorKind::parameter,
            "k-distance needs 1 <= min_pts <= n (min_pts=" + std::to_string(min_pts) + ", n=" + std::to_string(n) +
                ")");
    std::vector<double> kdist(n), d(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) d[j] = squared_distance(x.row(i), x.row(j));
        std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(min_pts - 1), d.end());
        kdist[i] = std::sqrt(d[min_pts - 1]);
    }
    std::sort(kdist.begin(), kdist.end());
    std::vector<double> grid;
    for (double q : quantiles) {
        require(q > 0.0 && q <= 1.0, ErrorKind::parameter, "k-distance quantiles must lie in (0, 1]");
        const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
        grid.push_back(kdist[std::max<std::size_t>(rank, 1) - 1]);
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Agglomerative clustering, Ward linkage
// ---------------------------------------------------------------------------

struct Merge {
    /// Cluster ids: rows are 0..n-1, the cluster created by merge t is n+t.
    std::size_t cluster_a = 0;
    std::size_t cluster_b = 0;
    /// Increase in total within-cluster sum of squares caused by the merge.
    double ward_cost = 0.0;
    std::size_t new_size = 0;
};

struct LinkageTree {
    std::size_t n_leaves = 0;
    std::vector<Merge> merges;
};

namespace detail {

/// Condensed symmetric matrix storage (i != j).
class CondensedMatrix {
public:
    explicit CondensedMatrix(std::size_t n) : n_(n), data_(n * (n - 1) / 2) {}
    double& at(std::size_t i, std::size_t j) {
        if (i > j) std::swap(i, j);
        return data_[i * n_ - i * (i + 1) / 2 + (j - i - 1)];
    }

private:
    std::size_t n_;
    std::vector<double> data_;
};

}  // namespace detail

/// Cuts the tree after applying the first n - k merges. Labels are numbered
/// by the lowest row index in each cluster.
inline ClusterAssignment cut_tree(const LinkageTree& tree, std::size_t k) {
    const std::size_t n = tree.n_leaves;
    require(k >= 1 && k <= n, ErrorKind::parameter, "cut requires 1 <= k <= n");
    std::vector<std::size_t> parent(2 * n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t v) {
        while (parent[v] != v) v = parent[v] = parent[parent[v]];
        return v;
    };
    for (std::size_t t = 0; t < n - k; ++t) {
        const auto& m = tree.merges[t];
        parent[find(m.cluster_a)] = n + t;
        parent[find(m.cluster_b)] = n + t;
    }
    std::vector<int> raw(n);
    for (std::size_t i = 0; i < n; ++i) raw[i] = static_cast<int>(find(i));
    return compact_labels(raw, false);
}

/// Ward agglomerative clustering with Lance-Williams updates. Nearest
/// neighbours are cached per active cluster; Ward's reducibility means a cache
/// entry only goes stale when its target takes part in a merge. Ties in the
/// minimum cost go to the smallest (a, b) pair of active slots, where a slot
/// is identified by the lowest row index of its cluster.
inline std::pair<LinkageTree, ClusterAssignment> agglomerative_fit(const Matrix& x, std::size_t k) {
    const std::size_t n = x.rows();
    require(k >= 1 && k <= n, ErrorKind::parameter,
            "agglomerative clustering requires 1 <= k <= n (k=" + std::to_string(k) + ", n=" + std::to_string(n) +
                ")");

    LinkageTree tree;
    tree.n_leaves = n;
    if (n == 1) return {tree, ClusterAssignment{{0}, 1, false}};

    detail::CondensedMatrix cost(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) cost.at(i, j) = 0.5 * squared_distance(x.row(i), x.row(j));

    std::vector<bool> active(n, true);
    std::vector<std::size_t> size(n, 1), id(n);
    std::iota(id.begin(), id.end(), 0);
    std::vector<std::size_t> nn(n, 0);
    std::vector<double> nn_cost(n, std::numeric_limits<double>::infinity());

    auto refresh = [&](std::size_t i) {
        nn_cost[i] = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || !active[j]) continue;
            const double c = cost.at(i, j);
            if (c < nn_cost[i]) {
                nn_cost[i] = c;
                nn[i] = j;
            }
        }
    };
    for (std::size_t i = 0; i < n; ++i) refresh(i);

    tree.merges.reserve(n - 1);
    for (std::size_t t = 0; t + 1 < n; ++t) {
        std::size_t best = n;
        std::tuple<double, std::size_t, std::size_t> best_key{std::numeric_limits<double>::infinity(), n, n};
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) continue;
            const std::tuple<double, std::size_t, std::size_t> key{nn_cost[i], std::min(i, nn[i]),
                                                                   std::max(i, nn[i])};
            if (best == n || key < best_key) {
                best_key = key;
                best = i;
            }
        }
        const auto [merge_cost, a, b] = best_key;

        const double na = static_cast<double>(size[a]);
        const double nb = static_cast<double>(size[b]);
        const double cab = cost.at(a, b);
        for (std::size_t j = 0; j < n; ++j) {
            if (!active[j] || j == a || j == b) continue;
            const double nj = static_cast<double>(size[j]);
            cost.at(a, j) =
                ((na + nj) * cost.at(a, j) + (nb + nj) * cost.at(b, j) - nj * cab) / (na + nb + nj);
        }

        tree.merges.push_back({std::min(id[a], id[b]), std::max(id[a], id[b]), merge_cost, size[a] + size[b]});
        active[b] = false;
        size[a] += size[b];
        id[a] = n + t;

        for (std::size_t j = 0; j < n; ++j) {
            if (!active[j] || j == a) continue;
            if (nn[j] == a || nn[j] == b) {
                refresh(j);
            } else {
                const double c = cost.at(a, j);
                if (c < nn_cost[j] || (c == nn_cost[j] && a < nn[j])) {
                    nn_cost[j] = c;
                    nn[j] = a;
                }
            }
        }
        refresh(a);
    }

    auto labels = cut_tree(tree, k);
    return {std::move(tree), std::move(labels)};
}

}  // namespace anonymixer
