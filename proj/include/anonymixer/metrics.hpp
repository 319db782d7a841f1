#pragma once

// Internal cluster-validation indices and the model-selection sweeps built on
// them. Rows labelled kNoiseLabel are excluded from every index.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "anonymixer/assignment.hpp"
#include "anonymixer/cluster.hpp"
#include "anonymixer/error.hpp"
#include "anonymixer/matrix.hpp"

namespace anonymixer {

struct ValidationScores {
    double silhouette = 0.0;
    double calinski_harabasz = 0.0;
    double davies_bouldin = 0.0;
    std::size_t n_effective_rows = 0;

    bool operator==(const ValidationScores&) const = default;
};

namespace detail {

/// Non-noise rows with labels renumbered 0..k-1.
struct EffectiveLabels {
    std::vector<std::size_t> rows;
    std::vector<std::size_t> label;
    std::size_t k = 0;
};

inline EffectiveLabels effective_labels(const Matrix& x, const std::vector<int>& labels) {
    require(labels.size() == x.rows(), ErrorKind::shape,
            "label count " + std::to_string(labels.size()) + " does not match row count " + std::to_string(x.rows()));
    EffectiveLabels out;
    std::map<int, std::size_t> remap;
    for (int l : labels)
        if (l != kNoiseLabel) remap.emplace(l, 0);
    for (auto& [l, idx] : remap) idx = out.k++;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == kNoiseLabel) continue;
        out.rows.push_back(i);
        out.label.push_back(remap.at(labels[i]));
    }
    return out;
}

inline Matrix centroids_of(const Matrix& x, const EffectiveLabels& eff, std::vector<std::size_t>& counts) {
    Matrix c(eff.k, x.cols(), 0.0);
    counts.assign(eff.k, 0);
    for (std::size_t r = 0; r < eff.rows.size(); ++r) {
        ++counts[eff.label[r]];
        auto dst = c.row(eff.label[r]);
        auto src = x.row(eff.rows[r]);
        for (std::size_t j = 0; j < x.cols(); ++j) dst[j] += src[j];
    }
    for (std::size_t c_i = 0; c_i < eff.k; ++c_i)
        for (auto& v : c.row(c_i)) v /= static_cast<double>(counts[c_i]);
    return c;
}

}  // namespace detail

/// Mean silhouette over non-noise rows; rows in singleton clusters score 0.
inline double silhouette(const Matrix& x, const std::vector<int>& labels) {
    const auto eff = detail::effective_labels(x, labels);
    require(eff.k >= 2, ErrorKind::undefined_metric,
            "silhouette needs at least 2 clusters, found " + std::to_string(eff.k));
    const std::size_t n = eff.rows.size();

    std::vector<std::size_t> counts(eff.k, 0);
    for (auto l : eff.label) ++counts[l];

    std::vector<double> sums(eff.k);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t own = eff.label[i];
        if (counts[own] == 1) continue;
        std::fill(sums.begin(), sums.end(), 0.0);
        const auto xi = x.row(eff.rows[i]);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            sums[eff.label[j]] += euclidean_distance(xi, x.row(eff.rows[j]));
        }
        const double a = sums[own] / static_cast<double>(counts[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < eff.k; ++c)
            if (c != own) b = std::min(b, sums[c] / static_cast<double>(counts[c]));
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

/// Between/within dispersion ratio scaled by (n-k)/(k-1). A zero
/// within-cluster dispersion yields +infinity.
inline double calinski_harabasz(const Matrix& x, const std::vector<int>& labels) {
    const auto eff = detail::effective_labels(x, labels);
    const std::size_t n = eff.rows.size();
    require(eff.k >= 2 && eff.k < n, ErrorKind::undefined_metric,
            "Calinski-Harabasz needs 2 <= k < n (k=" + std::to_string(eff.k) + ", n=" + std::to_string(n) + ")");
    std::vector<std::size_t> counts;
    const Matrix centroids = detail::centroids_of(x, eff, counts);

    std::vector<double> grand(x.cols(), 0.0);
    for (auto r : eff.rows)
        for (std::size_t j = 0; j < x.cols(); ++j) grand[j] += x(r, j);
    for (auto& v : grand) v /= static_cast<double>(n);

    double between = 0.0;
    for (std::size_t c = 0; c < eff.k; ++c)
        between += static_cast<double>(counts[c]) * squared_distance(centroids.row(c), grand);
    double within = 0.0;
    for (std::size_t r = 0; r < n; ++r) within += squared_distance(x.row(eff.rows[r]), centroids.row(eff.label[r]));

    if (within == 0.0) return std::numeric_limits<double>::infinity();
    const double k = static_cast<double>(eff.k);
    return (between / (k - 1.0)) / (within / (static_cast<double>(n) - k));
}

/// Mean over clusters of the worst (s_i + s_j) / d_ij ratio. Coincident
/// centroids with nonzero dispersion yield +infinity.
inline double davies_bouldin(const Matrix& x, const std::vector<int>& labels) {
    const auto eff = detail::effective_labels(x, labels);
    require(eff.k >= 2, ErrorKind::undefined_metric,
            "Davies-Bouldin needs at least 2 clusters, found " + std::to_string(eff.k));
    std::vector<std::size_t> counts;
    const Matrix centroids = detail::centroids_of(x, eff, counts);

    std::vector<double> spread(eff.k, 0.0);
    for (std::size_t r = 0; r < eff.rows.size(); ++r)
        spread[eff.label[r]] += euclidean_distance(x.row(eff.rows[r]), centroids.row(eff.label[r]));
    for (std::size_t c = 0; c < eff.k; ++c) spread[c] /= static_cast<double>(counts[c]);

    double total = 0.0;
    for (std::size_t i = 0; i < eff.k; ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < eff.k; ++j) {
            if (j == i) continue;
            const double num = spread[i] + spread[j];
            const double d = euclidean_distance(centroids.row(i), centroids.row(j));
            double ratio;
            if (d > 0.0)
                ratio = num / d;
            else
                ratio = num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
            worst = std::max(worst, ratio);
        }
        total += worst;
    }
    return total / static_cast<double>(eff.k);
}

inline ValidationScores score_all(const Matrix& x, const std::vector<int>& labels) {
    ValidationScores s;
    s.silhouette = silhouette(x, labels);
    s.calinski_harabasz = calinski_harabasz(x, labels);
    s.davies_bouldin = davies_bouldin(x, labels);
    s.n_effective_rows = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(),
                                                                 [](int l) { return l != kNoiseLabel; }));
    return s;
}

inline ValidationScores score_all(const Matrix& x, const ClusterAssignment& a) { return score_all(x, a.labels); }

// ---------------------------------------------------------------------------
// Model selection
// ---------------------------------------------------------------------------

struct KSweepEntry {
    std::size_t k = 0;
    double silhouette = 0.0;
};

struct KSelection {
    std::size_t k_best = 0;
    std::vector<KSweepEntry> sweep;
    KMeansModel model;
    ClusterAssignment assignment;
};

/// Fits K-means for every k in [k_min, k_max] and keeps the best silhouette;
/// ties go to the smaller k.
inline KSelection select_kmeans_k(const Matrix& x, std::size_t k_min, std::size_t k_max, std::uint64_t seed,
                                  KMeansOptions options = {}) {
    const std::size_t n = x.rows();
    require(k_min >= 2 && k_min <= k_max && n >= 1 && k_max <= n - 1, ErrorKind::parameter,
            "k sweep requires 2 <= k_min <= k_max <= n-1 (got " + std::to_string(k_min) + ".." +
                std::to_string(k_max) + ", n=" + std::to_string(n) + ")");
    KSelection out;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = k_min; k <= k_max; ++k) {
        auto [model, assignment] = kmeans_fit(x, k, seed, options);
        const double s = silhouette(x, assignment.labels);
        out.sweep.push_back({k, s});
        if (s > best) {
            best = s;
            out.k_best = k;
            out.model = std::move(model);
            out.assignment = std::move(assignment);
        }
    }
    return out;
}

struct DbscanGridEntry {
    double eps = 0.0;
    std::size_t min_pts = 0;
    int n_clusters = 0;
    std::size_t noise = 0;
    std::optional<double> silhouette;  // empty when fewer than 2 clusters formed
};

struct DbscanSelection {
    DbscanParams params;
    double best_silhouette = 0.0;
    ClusterAssignment assignment;
    std::vector<DbscanGridEntry> grid;
};

/// Exhaustive (eps, min_pts) search maximizing silhouette over non-noise rows.
/// Pairs forming fewer than 2 clusters are skipped; ties go to the smaller
/// eps, then the smaller min_pts.
inline DbscanSelection select_dbscan_params(const Matrix& x, const std::vector<double>& eps_grid,
                                            const std::vector<std::size_t>& minpts_grid) {
    require(!eps_grid.empty() && !minpts_grid.empty(), ErrorKind::parameter, "DBSCAN grids must be non-empty");
    DbscanSelection out;
    bool found = false;
    for (double eps : eps_grid) {
        for (std::size_t min_pts : minpts_grid) {
            const DbscanParams params{eps, min_pts};
            auto assignment = dbscan_fit(x, params);
            DbscanGridEntry entry{eps, min_pts, assignment.n_clusters, assignment.noise_count(), std::nullopt};
            if (assignment.n_clusters >= 2) {
                const double s = silhouette(x, assignment.labels);
                entry.silhouette = s;
                const bool better = !found || s > out.best_silhouette ||
                                    (s == out.best_silhouette &&
                                     std::pair(eps, min_pts) < std::pair(out.params.eps, out.params.min_pts));
                if (better) {
                    found = true;
                    out.params = params;
                    out.best_silhouette = s;
                    out.assignment = std::move(assignment);
                }
            }
            out.grid.push_back(entry);
        }
    }
    require(found, ErrorKind::no_valid_params, "no (eps, min_pts) pair in the grid forms at least 2 clusters");
    return out;
}

}  // namespace anonymixer
