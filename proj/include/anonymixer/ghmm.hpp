#pragma once

// Gaussian hidden Markov model with diagonal covariances. The whole table is
// one observation sequence in row order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include <nlohmann/json.hpp>

#include "anonymixer/assignment.hpp"
#include "anonymixer/cluster.hpp"
#include "anonymixer/error.hpp"
#include "anonymixer/matrix.hpp"

namespace anonymixer {

inline constexpr double kGhmmVarianceFloor = 1e-6;

struct GhmmModel {
    std::vector<double> initial_probs;
    Matrix transition;  // S x S, row-stochastic
    Matrix means;       // S x m
    Matrix diag_vars;   // S x m

    std::size_t n_states() const noexcept { return initial_probs.size(); }
    std::size_t dims() const noexcept { return means.cols(); }

    void validate(double tolerance = 1e-9) const {
        const std::size_t s = n_states();
        require(s >= 1, ErrorKind::contract, "GHMM needs at least one state");
        require(transition.rows() == s && transition.cols() == s, ErrorKind::shape, "transition must be S x S");
        require(means.rows() == s && diag_vars.rows() == s && diag_vars.cols() == means.cols(), ErrorKind::shape,
                "means/variances must be S x m");
        double sum = 0.0;
        for (double p : initial_probs) sum += p;
        require(std::abs(sum - 1.0) <= tolerance, ErrorKind::contract, "initial probabilities do not sum to 1");
        for (std::size_t i = 0; i < s; ++i) {
            double row = 0.0;
            for (double p : transition.row(i)) row += p;
            require(std::abs(row - 1.0) <= tolerance, ErrorKind::contract, "transition row does not sum to 1");
        }
        for (double v : diag_vars.data())
            require(v >= kGhmmVarianceFloor, ErrorKind::contract, "variance below floor");
    }
};

struct GhmmOptions {
    std::size_t max_iter = 100;
    double tol = 1e-6;
};

namespace detail {

inline void check_dims(const GhmmModel& model, const Matrix& x) {
    require(x.cols() == model.dims(), ErrorKind::shape,
            "GHMM has dimension " + std::to_string(model.dims()) + ", data has " + std::to_string(x.cols()));
}

inline double log_gaussian_diag(std::span<const double> x, std::span<const double> mean,
                                std::span<const double> var) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = x[j] - mean[j];
        s += std::log(2.0 * std::numbers::pi * var[j]) + d * d / var[j];
    }
    return -0.5 * s;
}

inline Matrix log_emissions(const GhmmModel& model, const Matrix& x) {
    Matrix out(x.rows(), model.n_states());
    for (std::size_t t = 0; t < x.rows(); ++t)
        for (std::size_t s = 0; s < model.n_states(); ++s)
            out(t, s) = log_gaussian_diag(x.row(t), model.means.row(s), model.diag_vars.row(s));
    return out;
}

/// Emissions rescaled per row by their maximum; `shift[t]` holds that max.
struct ScaledEmissions {
    Matrix b;
    std::vector<double> shift;
};

inline ScaledEmissions scaled_emissions(const GhmmModel& model, const Matrix& x) {
    ScaledEmissions e{log_emissions(model, x), std::vector<double>(x.rows())};
    for (std::size_t t = 0; t < x.rows(); ++t) {
        auto row = e.b.row(t);
        const double mx = *std::max_element(row.begin(), row.end());
        if (!std::isfinite(mx)) throw Error(ErrorKind::numeric, "non-finite emission density at row " + std::to_string(t));
        e.shift[t] = mx;
        for (auto& v : row) v = std::exp(v - mx);
    }
    return e;
}

struct ForwardPass {
    Matrix alpha;  // normalized per row
    std::vector<double> scale;
    double loglik = 0.0;
};

inline ForwardPass forward(const GhmmModel& model, const ScaledEmissions& e) {
    const std::size_t T = e.b.rows();
    const std::size_t S = model.n_states();
    ForwardPass f{Matrix(T, S), std::vector<double>(T), 0.0};
    for (std::size_t t = 0; t < T; ++t) {
        double c = 0.0;
        for (std::size_t j = 0; j < S; ++j) {
            double a;
            if (t == 0) {
                a = model.initial_probs[j];
            } else {
                a = 0.0;
                for (std::size_t i = 0; i < S; ++i) a += f.alpha(t - 1, i) * model.transition(i, j);
            }
            a *= e.b(t, j);
            f.alpha(t, j) = a;
            c += a;
        }
        require(c > 0.0 && std::isfinite(c), ErrorKind::numeric,
                "forward recursion underflowed at row " + std::to_string(t));
        for (std::size_t j = 0; j < S; ++j) f.alpha(t, j) /= c;
        f.scale[t] = c;
        f.loglik += std::log(c) + e.shift[t];
    }
    return f;
}

}  // namespace detail

/// Log-likelihood of the sequence under the model (scaled forward pass).
inline double ghmm_loglik(const GhmmModel& model, const Matrix& x) {
    detail::check_dims(model, x);
    if (x.rows() == 0) return 0.0;
    return detail::forward(model, detail::scaled_emissions(model, x)).loglik;
}

/// Baum-Welch. Means start from seeded K-means centroids, variances from the
/// within-cluster spread, probabilities uniform. `fit_log` holds the
/// log-likelihood of every parameter set visited; the returned model is the
/// last one.
inline std::pair<GhmmModel, std::vector<double>> ghmm_fit(const Matrix& x, std::size_t n_states,
                                                          std::uint64_t seed, GhmmOptions options = {}) {
    const std::size_t T = x.rows();
    const std::size_t m = x.cols();
    const std::size_t S = n_states;
    require(S >= 1, ErrorKind::parameter, "GHMM requires at least one state");
    require(S <= T, ErrorKind::parameter,
            "GHMM requires n_states <= n (" + std::to_string(S) + " > " + std::to_string(T) + ")");

    GhmmModel model;
    {
        auto [km, assignment] = kmeans_fit(x, S, seed);
        model.means = km.centroids;
        model.diag_vars = Matrix(S, m, 0.0);
        std::vector<double> counts(S, 0.0);
        for (std::size_t t = 0; t < T; ++t) {
            const auto s = static_cast<std::size_t>(assignment.labels[t]);
            counts[s] += 1.0;
            for (std::size_t j = 0; j < m; ++j) {
                const double d = x(t, j) - model.means(s, j);
                model.diag_vars(s, j) += d * d;
            }
        }
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t j = 0; j < m; ++j)
                model.diag_vars(s, j) =
                    std::max(counts[s] > 0 ? model.diag_vars(s, j) / counts[s] : 0.0, kGhmmVarianceFloor);
        model.initial_probs.assign(S, 1.0 / static_cast<double>(S));
        model.transition = Matrix(S, S, 1.0 / static_cast<double>(S));
    }

    std::vector<double> fit_log;
    for (std::size_t iter = 0;; ++iter) {
        const auto e = detail::scaled_emissions(model, x);
        const auto f = detail::forward(model, e);
        fit_log.push_back(f.loglik);
        if (iter > 0 && f.loglik - fit_log[iter - 1] < options.tol) break;
        if (iter == options.max_iter) break;

        // backward pass and expected sufficient statistics
        Matrix beta(T, S, 1.0);
        for (std::size_t t = T - 1; t-- > 0;) {
            for (std::size_t i = 0; i < S; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < S; ++j) acc += model.transition(i, j) * e.b(t + 1, j) * beta(t + 1, j);
                beta(t, i) = acc / f.scale[t + 1];
            }
        }

        Matrix xi_sum(S, S, 0.0);
        for (std::size_t t = 0; t + 1 < T; ++t)
            for (std::size_t i = 0; i < S; ++i)
                for (std::size_t j = 0; j < S; ++j)
                    xi_sum(i, j) += f.alpha(t, i) * model.transition(i, j) * e.b(t + 1, j) * beta(t + 1, j) /
                                    f.scale[t + 1];

        Matrix gamma(T, S);
        for (std::size_t t = 0; t < T; ++t) {
            double norm = 0.0;
            for (std::size_t s = 0; s < S; ++s) norm += gamma(t, s) = f.alpha(t, s) * beta(t, s);
            for (std::size_t s = 0; s < S; ++s) gamma(t, s) /= norm;
        }

        GhmmModel next = model;
        double init_sum = 0.0;
        for (std::size_t s = 0; s < S; ++s) init_sum += gamma(0, s);
        for (std::size_t s = 0; s < S; ++s) next.initial_probs[s] = gamma(0, s) / init_sum;
        for (std::size_t i = 0; i < S; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < S; ++j) row += xi_sum(i, j);
            if (row > 0.0)
                for (std::size_t j = 0; j < S; ++j) next.transition(i, j) = xi_sum(i, j) / row;
        }
        for (std::size_t s = 0; s < S; ++s) {
            double w = 0.0;
            std::vector<double> mean(m, 0.0);
            for (std::size_t t = 0; t < T; ++t) {
                w += gamma(t, s);
                for (std::size_t j = 0; j < m; ++j) mean[j] += gamma(t, s) * x(t, j);
            }
            if (!(w > 0.0)) continue;
            std::vector<double> var(m, 0.0);
            for (std::size_t j = 0; j < m; ++j) mean[j] /= w;
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < m; ++j) {
                    const double d = x(t, j) - mean[j];
                    var[j] += gamma(t, s) * d * d;
                }
            for (std::size_t j = 0; j < m; ++j) {
                next.means(s, j) = mean[j];
                next.diag_vars(s, j) = std::max(var[j] / w, kGhmmVarianceFloor);
            }
        }
        if (!all_finite(next.means.data()))
            throw Error(ErrorKind::numeric, "non-finite mean after M-step " + std::to_string(iter));
        model = std::move(next);
    }
    return {std::move(model), std::move(fit_log)};
}

/// Viterbi decoding in log space; ties go to the lowest state index.
inline ClusterAssignment ghmm_decode(const GhmmModel& model, const Matrix& x) {
    detail::check_dims(model, x);
    const std::size_t T = x.rows();
    const std::size_t S = model.n_states();
    ClusterAssignment out{std::vector<int>(T, 0), static_cast<int>(S), false};
    if (T == 0) return out;

    const Matrix logb = detail::log_emissions(model, x);
    Matrix log_a(S, S);
    for (std::size_t i = 0; i < S; ++i)
        for (std::size_t j = 0; j < S; ++j) log_a(i, j) = std::log(model.transition(i, j));

    std::vector<double> delta(S), next(S);
    std::vector<std::size_t> back(T * S, 0);
    for (std::size_t s = 0; s < S; ++s) delta[s] = std::log(model.initial_probs[s]) + logb(0, s);
    for (std::size_t t = 1; t < T; ++t) {
        for (std::size_t j = 0; j < S; ++j) {
            std::size_t arg = 0;
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < S; ++i) {
                const double v = delta[i] + log_a(i, j);
                if (v > best) {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + logb(t, j);
            back[t * S + j] = arg;
        }
        std::swap(delta, next);
    }
    std::size_t state = static_cast<std::size_t>(std::max_element(delta.begin(), delta.end()) - delta.begin());
    for (std::size_t t = T; t-- > 0;) {
        out.labels[t] = static_cast<int>(state);
        if (t > 0) state = back[t * S + state];
    }
    // unused states leave gaps; renumber so every label is populated
    std::vector<bool> used(S, false);
    for (int l : out.labels) used[static_cast<std::size_t>(l)] = true;
    if (std::find(used.begin(), used.end(), false) != used.end()) out = compact_labels(out.labels, false);
    return out;
}

/// Log probability of one explicit state path.
inline double ghmm_path_logprob(const GhmmModel& model, const Matrix& x, const std::vector<int>& path) {
    detail::check_dims(model, x);
    require(path.size() == x.rows(), ErrorKind::shape, "path length mismatch");
    double lp = 0.0;
    for (std::size_t t = 0; t < path.size(); ++t) {
        const auto s = static_cast<std::size_t>(path[t]);
        lp += t == 0 ? std::log(model.initial_probs[s])
                     : std::log(model.transition(static_cast<std::size_t>(path[t - 1]), s));
        lp += detail::log_gaussian_diag(x.row(t), model.means.row(s), model.diag_vars.row(s));
    }
    return lp;
}

inline nlohmann::ordered_json to_json(const GhmmModel& model) {
    auto rows = [](const Matrix& m) {
        auto arr = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < m.rows(); ++i) arr.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
        return arr;
    };
    nlohmann::ordered_json j;
    j["n_states"] = model.n_states();
    j["dims"] = model.dims();
    j["initial_probs"] = model.initial_probs;
    j["transition"] = rows(model.transition);
    j["means"] = rows(model.means);
    j["diag_vars"] = rows(model.diag_vars);
    return j;
}

}  // namespace anonymixer
