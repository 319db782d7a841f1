#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "anonymixer/error.hpp"
#include "anonymixer/matrix.hpp"

namespace anonymixer {

struct SymmetricEigen {
    std::vector<double> values;  // descending
    Matrix vectors;              // row i is the eigenvector of values[i]
};

/// Cyclic Jacobi rotations for a symmetric matrix. Eigenpairs are returned
/// in descending eigenvalue order, ties kept in index order.
inline SymmetricEigen jacobi_eigen(Matrix a, std::size_t max_sweeps = 100) {
    const std::size_t n = a.rows();
    require(a.cols() == n, ErrorKind::shape, "eigendecomposition needs a square matrix");
    Matrix v(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0, diag = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            diag += a(p, p) * a(p, p);
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        }
        if (off <= 1e-30 * std::max(diag, 1e-300)) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
    SymmetricEigen out{std::vector<double>(n), Matrix(n, n)};
    for (std::size_t r = 0; r < n; ++r) {
        out.values[r] = a(order[r], order[r]);
        for (std::size_t k = 0; k < n; ++k) out.vectors(r, k) = v(k, order[r]);
    }
    return out;
}

/// Sample covariance with divisor n - 1.
inline Matrix covariance(const Matrix& x, const std::vector<double>& mean) {
    const std::size_t m = x.cols();
    Matrix cov(m, m, 0.0);
    std::vector<double> d(m);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < m; ++j) d[j] = x(i, j) - mean[j];
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = a; b < m; ++b) cov(a, b) += d[a] * d[b];
    }
    const double denom = static_cast<double>(x.rows() - 1);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a; b < m; ++b) cov(b, a) = cov(a, b) /= denom;
    return cov;
}

struct PcaModel {
    std::vector<double> mean;
    Matrix components;  // p x m, orthonormal rows, descending variance
    std::vector<double> explained_variance;
    double total_variance = 0.0;

    std::size_t n_components() const noexcept { return components.rows(); }

    std::vector<double> explained_variance_ratio() const {
        std::vector<double> r(explained_variance);
        for (auto& v : r) v = total_variance > 0.0 ? v / total_variance : 0.0;
        return r;
    }
};

/// Top-p principal axes from the eigendecomposition of the covariance. Each
/// axis is signed so its largest-magnitude entry is positive.
inline PcaModel pca_fit(const Matrix& x, std::size_t p) {
    require(x.rows() >= 2, ErrorKind::undefined_metric, "PCA needs at least 2 rows to estimate a covariance");
    require(p >= 1 && p <= std::min(x.rows(), x.cols()), ErrorKind::parameter,
            "PCA requires 1 <= p <= min(n, m), got p=" + std::to_string(p));
    PcaModel model;
    model.mean = column_means(x);
    const Matrix cov = covariance(x, model.mean);
    for (std::size_t j = 0; j < cov.rows(); ++j) model.total_variance += cov(j, j);

    const auto eig = jacobi_eigen(cov);
    model.components = Matrix(p, x.cols());
    for (std::size_t r = 0; r < p; ++r) {
        auto src = eig.vectors.row(r);
        std::size_t arg = 0;
        for (std::size_t k = 1; k < src.size(); ++k)
            if (std::abs(src[k]) > std::abs(src[arg])) arg = k;
        const double sign = src[arg] < 0.0 ? -1.0 : 1.0;
        for (std::size_t k = 0; k < src.size(); ++k) model.components(r, k) = sign * src[k];
        model.explained_variance.push_back(std::max(eig.values[r], 0.0));
    }
    return model;
}

/// Smallest p whose cumulative explained variance ratio reaches `fraction`.
inline std::size_t components_for_variance(const Matrix& x, double fraction) {
    const auto full = pca_fit(x, std::min(x.rows(), x.cols()));
    double acc = 0.0;
    const auto ratio = full.explained_variance_ratio();
    for (std::size_t i = 0; i < ratio.size(); ++i) {
        acc += ratio[i];
        if (acc >= fraction - 1e-12) return i + 1;
    }
    return ratio.size();
}

inline Matrix pca_transform(const PcaModel& model, const Matrix& x) {
    require(x.cols() == model.mean.size(), ErrorKind::shape,
            "PCA model has dimension " + std::to_string(model.mean.size()) + ", data has " +
                std::to_string(x.cols()));
    const std::size_t p = model.n_components();
    Matrix out(x.rows(), p);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t c = 0; c < p; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < x.cols(); ++j) s += (x(i, j) - model.mean[j]) * model.components(c, j);
            out(i, c) = s;
        }
    return out;
}

inline Matrix pca_reconstruct(const PcaModel& model, const Matrix& scores) {
    require(scores.cols() == model.n_components(), ErrorKind::shape, "score width does not match component count");
    Matrix out(scores.rows(), model.mean.size());
    for (std::size_t i = 0; i < scores.rows(); ++i)
        for (std::size_t j = 0; j < model.mean.size(); ++j) {
            double s = model.mean[j];
            for (std::size_t c = 0; c < scores.cols(); ++c) s += scores(i, c) * model.components(c, j);
            out(i, j) = s;
        }
    return out;
}

}  // namespace anonymixer
