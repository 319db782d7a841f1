#pragma once

// Conditional tabular GAN. Continuous columns are encoded with a per-column
// Gaussian mixture (mode one-hot plus a scaled in-mode offset); cluster
// labels provide the one-hot condition vector. The generator and
// discriminator play the standard minimax game with a non-saturating
// generator loss and a cross-entropy term tying the generated label segment
// to the condition.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anonymixer/assignment.hpp"
#include "anonymixer/cluster.hpp"
#include "anonymixer/dataio.hpp"
#include "anonymixer/error.hpp"
#include "anonymixer/matrix.hpp"
#include "anonymixer/neural.hpp"
#include "anonymixer/random.hpp"

namespace anonymixer {

// ---------------------------------------------------------------------------
// Mode-specific normalization
// ---------------------------------------------------------------------------

struct Mode {
    double weight = 1.0;
    double mean = 0.0;
    double stddev = 1.0;

    bool operator==(const Mode&) const = default;
};

struct ModeNormalizerOptions {
    double prune_threshold = 0.005;
    double sigma_floor = 1e-4;
    std::size_t em_max_iter = 200;
    double em_tol = 1e-9;
};

struct ModeSpecificNormalizer {
    std::vector<std::vector<Mode>> columns;
    double prune_threshold = 0.005;
    double sigma_floor = 1e-4;

    std::size_t column_count() const noexcept { return columns.size(); }

    /// Width of the encoded continuous block: per column 1 offset + modes.
    std::size_t encoded_width() const {
        std::size_t w = 0;
        for (const auto& c : columns) w += 1 + c.size();
        return w;
    }

    /// Bounds implied by offsets in [-1, 1]: [min(mu - 4 sigma), max(mu + 4 sigma)].
    std::pair<double, double> decode_range(std::size_t column) const {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& m : columns[column]) {
            lo = std::min(lo, m.mean - 4.0 * m.stddev);
            hi = std::max(hi, m.mean + 4.0 * m.stddev);
        }
        return {lo, hi};
    }
};

namespace detail {

struct Mixture1d {
    std::vector<Mode> modes;
    double loglik = 0.0;
};

inline double log_normal_pdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Log-sum-exp normalized responsibilities of each mode for x.
inline std::vector<double> responsibilities(double x, const std::vector<Mode>& modes) {
    std::vector<double> r(modes.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < modes.size(); ++k) {
        r[k] = modes[k].weight > 0.0 ? std::log(modes[k].weight) + log_normal_pdf(x, modes[k].mean, modes[k].stddev)
                                     : -std::numeric_limits<double>::infinity();
        mx = std::max(mx, r[k]);
    }
    double sum = 0.0;
    for (auto& v : r) sum += v = std::exp(v - mx);
    for (auto& v : r) v /= sum;
    return r;
}

inline Mixture1d fit_mixture_1d(const std::vector<double>& col, std::size_t k, std::uint64_t seed,
                                const ModeNormalizerOptions& opt) {
    const std::size_t n = col.size();
    Matrix x(n, 1, col);
    auto [km, assignment] = kmeans_fit(x, k, seed);
    k = static_cast<std::size_t>(assignment.n_clusters);
    const double var_floor = opt.sigma_floor * opt.sigma_floor;

    std::vector<double> w(k, 0.0), mu(k, 0.0), var(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::size_t>(assignment.labels[i]);
        w[c] += 1.0;
        mu[c] += col[i];
    }
    for (std::size_t c = 0; c < k; ++c) mu[c] /= w[c];
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::size_t>(assignment.labels[i]);
        var[c] += (col[i] - mu[c]) * (col[i] - mu[c]);
    }
    for (std::size_t c = 0; c < k; ++c) {
        var[c] = std::max(var[c] / w[c], var_floor);
        w[c] /= static_cast<double>(n);
    }

    Mixture1d mix;
    std::vector<double> logp(k);
    Matrix resp(n, k);
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0;; ++iter) {
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                logp[c] = w[c] > 0.0 ? std::log(w[c]) + log_normal_pdf(col[i], mu[c], std::sqrt(var[c]))
                                     : -std::numeric_limits<double>::infinity();
                mx = std::max(mx, logp[c]);
            }
            double s = 0.0;
            for (std::size_t c = 0; c < k; ++c) s += resp(i, c) = std::exp(logp[c] - mx);
            for (std::size_t c = 0; c < k; ++c) resp(i, c) /= s;
            ll += mx + std::log(s);
        }
        mix.loglik = ll;
        if (iter >= opt.em_max_iter || ll - prev < opt.em_tol * std::max(1.0, std::abs(ll))) break;
        prev = ll;
        for (std::size_t c = 0; c < k; ++c) {
            double nk = 0.0, m = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                nk += resp(i, c);
                m += resp(i, c) * col[i];
            }
            if (!(nk > 0.0)) {
                w[c] = 0.0;
                continue;
            }
            m /= nk;
            double v = 0.0;
            for (std::size_t i = 0; i < n; ++i) v += resp(i, c) * (col[i] - m) * (col[i] - m);
            w[c] = nk / static_cast<double>(n);
            mu[c] = m;
            var[c] = std::max(v / nk, var_floor);
        }
    }
    for (std::size_t c = 0; c < k; ++c) mix.modes.push_back({w[c], mu[c], std::sqrt(var[c])});
    return mix;
}

}  // namespace detail

/// Per column: Gaussian mixtures with 1..max_modes components are fit by
/// K-means-seeded EM and the lowest-BIC mixture is kept; modes lighter than
/// the pruning threshold are dropped and the weights renormalized.
inline ModeSpecificNormalizer fit_mode_normalizer(const Matrix& x, std::size_t max_modes, std::uint64_t seed,
                                                  ModeNormalizerOptions opt = {}) {
    require(max_modes >= 1, ErrorKind::parameter, "max_modes must be >= 1");
    require(x.cols() >= 1, ErrorKind::parameter, "no continuous columns to normalize");
    require(x.rows() >= 1, ErrorKind::parameter, "cannot fit a mode normalizer on an empty column");

    ModeSpecificNormalizer norm;
    norm.prune_threshold = opt.prune_threshold;
    norm.sigma_floor = opt.sigma_floor;
    const double n = static_cast<double>(x.rows());
    for (std::size_t j = 0; j < x.cols(); ++j) {
        const auto col = x.column(j);
        auto sorted = col;
        std::sort(sorted.begin(), sorted.end());
        const auto distinct = static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
        const std::size_t k_max = std::min(max_modes, distinct);

        detail::Mixture1d best;
        double best_bic = std::numeric_limits<double>::infinity();
        for (std::size_t k = 1; k <= k_max; ++k) {
            auto mix = detail::fit_mixture_1d(col, k, derive_seed(seed, "column" + std::to_string(j)), opt);
            const double params = 3.0 * static_cast<double>(mix.modes.size()) - 1.0;
            const double bic = -2.0 * mix.loglik + params * std::log(n);
            if (bic < best_bic) {
                best_bic = bic;
                best = std::move(mix);
            }
        }

        std::vector<Mode> kept;
        for (const auto& m : best.modes)
            if (m.weight >= opt.prune_threshold) kept.push_back(m);
        if (kept.empty())
            kept.push_back(*std::max_element(best.modes.begin(), best.modes.end(),
                                             [](const Mode& a, const Mode& b) { return a.weight < b.weight; }));
        double total = 0.0;
        for (const auto& m : kept) total += m.weight;
        for (auto& m : kept) m.weight /= total;
        norm.columns.push_back(std::move(kept));
    }
    return norm;
}

/// Encoded layout: for each continuous column [alpha, mode one-hot], then
/// the label one-hot.
inline std::vector<OutputSegment> encoding_segments(const ModeSpecificNormalizer& norm, std::size_t label_count,
                                                    double temperature = 1.0) {
    std::vector<OutputSegment> segs;
    for (const auto& c : norm.columns) {
        segs.push_back({1, SegmentKind::tanh, 1.0});
        segs.push_back({c.size(), SegmentKind::softmax, temperature});
    }
    segs.push_back({label_count, SegmentKind::softmax, temperature});
    return segs;
}

/// Mode drawn with probability proportional to its responsibility, then
/// alpha = clip((x - mu) / (4 sigma), -1, 1).
inline std::vector<double> encode_row(const ModeSpecificNormalizer& norm, std::span<const double> row, int label,
                                      std::size_t label_count, Rng& rng) {
    require(row.size() == norm.column_count(), ErrorKind::shape, "row width does not match normalizer");
    require(label >= 0 && static_cast<std::size_t>(label) < label_count, ErrorKind::parameter,
            "label " + std::to_string(label) + " outside [0, " + std::to_string(label_count) + ")");
    std::vector<double> out;
    out.reserve(norm.encoded_width() + label_count);
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (!std::isfinite(row[j]))
            throw Error(ErrorKind::numeric, "non-finite value in column " + std::to_string(j));
        const auto& modes = norm.columns[j];
        const std::size_t k = rng.categorical(detail::responsibilities(row[j], modes));
        const double alpha = std::clamp((row[j] - modes[k].mean) / (4.0 * modes[k].stddev), -1.0, 1.0);
        out.push_back(alpha);
        for (std::size_t m = 0; m < modes.size(); ++m) out.push_back(m == k ? 1.0 : 0.0);
    }
    for (std::size_t l = 0; l < label_count; ++l) out.push_back(static_cast<int>(l) == label ? 1.0 : 0.0);
    return out;
}

/// x = mu_k + 4 sigma_k alpha with k the argmax of the mode segment (first
/// maximum on ties); label is the argmax of the label segment.
inline std::pair<std::vector<double>, int> decode_row(const ModeSpecificNormalizer& norm,
                                                      std::span<const double> encoded, std::size_t label_count) {
    require(encoded.size() == norm.encoded_width() + label_count, ErrorKind::shape, "encoded row width mismatch");
    std::vector<double> row;
    row.reserve(norm.column_count());
    std::size_t offset = 0;
    for (const auto& modes : norm.columns) {
        const double alpha = std::clamp(encoded[offset], -1.0, 1.0);
        const auto seg = encoded.subspan(offset + 1, modes.size());
        const auto k = static_cast<std::size_t>(std::max_element(seg.begin(), seg.end()) - seg.begin());
        row.push_back(modes[k].mean + 4.0 * modes[k].stddev * alpha);
        offset += 1 + modes.size();
    }
    const auto seg = encoded.subspan(offset, label_count);
    const int label = static_cast<int>(std::max_element(seg.begin(), seg.end()) - seg.begin());
    return {std::move(row), label};
}

// ---------------------------------------------------------------------------
// Model and training
// ---------------------------------------------------------------------------

struct CtganConfig {
    std::size_t noise_dim = 64;
    std::vector<std::size_t> generator_hidden{128, 128};
    std::vector<std::size_t> discriminator_hidden{128, 128};
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    std::size_t batch_size = 64;
    std::size_t epochs = 300;
    std::size_t max_modes = 10;
    /// Softmax temperature of the generator's one-hot segments. When > 0 the
    /// segment logits are also Gumbel-perturbed, so one-hot blocks are sampled
    /// rather than averaged. 0 means a plain softmax.
    double gumbel_tau = 0.2;
    Activation hidden_activation = Activation::relu;
    Activation discriminator_activation = Activation::leaky_relu;
    std::size_t discriminator_steps = 1;  // discriminator updates per generator update
    ModeNormalizerOptions normalizer;
};

struct CtganModel {
    DenseNetwork generator;
    DenseNetwork discriminator;
    ModeSpecificNormalizer normalizer;
    std::size_t noise_dim = 0;
    std::size_t label_count = 0;
    std::vector<double> label_frequencies;
    std::vector<std::string> column_names;
    std::string label_name = "label";
    bool gumbel = false;

    std::size_t encoded_width() const { return normalizer.encoded_width() + label_count; }
};

struct TrainingStep {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double gen_loss = 0.0;
    double disc_loss = 0.0;
    double d_real_mean = 0.0;  // mean discriminator output on the real batch
    double d_fake_mean = 0.0;
};

struct TrainingLog {
    std::vector<TrainingStep> steps;
    std::size_t dropped_noise_rows = 0;
};

namespace detail {

inline constexpr double kProbClamp = 1e-12;

inline Matrix concat_columns(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        std::copy(a.row(i).begin(), a.row(i).end(), out.row(i).begin());
        std::copy(b.row(i).begin(), b.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(a.cols()));
    }
    return out;
}

inline Matrix one_hot(const std::vector<std::size_t>& labels, std::size_t width) {
    Matrix out(labels.size(), width, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) out(i, labels[i]) = 1.0;
    return out;
}

inline Matrix noise(std::size_t rows, std::size_t dim, Rng& rng) {
    Matrix z(rows, dim);
    for (auto& v : z.data()) v = rng.normal();
    return z;
}

/// Gumbel(0, 1) noise on the softmax-segment columns of the generator output.
inline Matrix gumbel_noise(const CtganModel& model, std::size_t rows, Rng& rng) {
    const auto& segments = model.generator.layers().back().segments;
    Matrix g(rows, model.generator.output_width(), 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        std::size_t offset = 0;
        for (const auto& seg : segments) {
            if (seg.kind == SegmentKind::softmax)
                for (std::size_t k = 0; k < seg.width; ++k) {
                    double u = rng.uniform();
                    while (u <= 0.0) u = rng.uniform();
                    g(i, offset + k) = -std::log(-std::log(u));
                }
            offset += seg.width;
        }
    }
    return g;
}

inline Matrix generate(const CtganModel& model, const Matrix& cond, Rng& rng, ForwardCache* cache = nullptr) {
    const Matrix z = noise(cond.rows(), model.noise_dim, rng);
    if (!model.gumbel) return model.generator.forward(concat_columns(z, cond), cache);
    const Matrix g = gumbel_noise(model, cond.rows(), rng);
    return model.generator.forward(concat_columns(z, cond), cache, &g);
}

}  // namespace detail

inline DenseNetwork build_generator(const CtganConfig& cfg, const ModeSpecificNormalizer& norm,
                                    std::size_t label_count, Rng& rng) {
    std::vector<LayerSpec> specs;
    for (auto h : cfg.generator_hidden) specs.push_back({h, cfg.hidden_activation, {}});
    const double temperature = cfg.gumbel_tau > 0.0 ? cfg.gumbel_tau : 1.0;
    specs.push_back({norm.encoded_width() + label_count, Activation::segmented,
                     encoding_segments(norm, label_count, temperature)});
    return DenseNetwork::build(cfg.noise_dim + label_count, specs, rng);
}

inline DenseNetwork build_discriminator(const CtganConfig& cfg, std::size_t encoded_width, std::size_t label_count,
                                        Rng& rng) {
    std::vector<LayerSpec> specs;
    for (auto h : cfg.discriminator_hidden) specs.push_back({h, cfg.discriminator_activation, {}});
    specs.push_back({1, Activation::sigmoid, {}});
    return DenseNetwork::build(encoded_width + label_count, specs, rng);
}

/// Adversarial training with training-by-sampling: each batch draws its
/// conditions uniformly over labels, then real rows uniformly within each
/// drawn label. Rows labelled noise are dropped first. Runs exactly
/// `epochs * ceil(n / batch)` steps; every random draw comes from one stream
/// seeded by `seed`.
inline std::pair<CtganModel, TrainingLog> ctgan_train(const Dataset& data, const ClusterAssignment& labels,
                                                      const CtganConfig& cfg, std::uint64_t seed) {
    const Matrix& all = data.values();
    require(labels.size() == all.rows(), ErrorKind::shape, "label count does not match row count");
    require(cfg.batch_size >= 1 && cfg.noise_dim >= 1, ErrorKind::parameter, "batch size and noise_dim must be >= 1");

    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels.labels[i] != kNoiseLabel) kept.push_back(i);
    const Matrix x = all.select_rows(kept);
    const std::size_t n = x.rows();
    const std::size_t L = static_cast<std::size_t>(labels.n_clusters);
    require(L >= 1, ErrorKind::parameter, "no cluster labels to condition on");
    require(n >= cfg.batch_size, ErrorKind::parameter,
            "training needs n >= batch size (n=" + std::to_string(n) + ", batch=" + std::to_string(cfg.batch_size) +
                ")");

    std::vector<std::vector<std::size_t>> rows_by_label(L);
    for (std::size_t r = 0; r < n; ++r) {
        const int l = labels.labels[kept[r]];
        require(l >= 0 && static_cast<std::size_t>(l) < L, ErrorKind::parameter, "label outside [0, n_clusters)");
        rows_by_label[static_cast<std::size_t>(l)].push_back(r);
    }
    for (std::size_t l = 0; l < L; ++l)
        require(!rows_by_label[l].empty(), ErrorKind::parameter,
                "label " + std::to_string(l) + " has no rows after dropping noise");

    Rng rng(seed);
    CtganModel model;
    model.noise_dim = cfg.noise_dim;
    model.label_count = L;
    model.gumbel = cfg.gumbel_tau > 0.0;
    model.column_names = data.continuous_names();
    model.label_name = data.label_name().value_or("label");
    for (std::size_t l = 0; l < L; ++l)
        model.label_frequencies.push_back(static_cast<double>(rows_by_label[l].size()) / static_cast<double>(n));
    model.normalizer = fit_mode_normalizer(x, cfg.max_modes, rng.next_u64(), cfg.normalizer);

    const std::size_t width = model.encoded_width();
    const std::size_t cont_width = model.normalizer.encoded_width();
    Matrix encoded(n, width);
    for (std::size_t r = 0; r < n; ++r) {
        const auto e = encode_row(model.normalizer, x.row(r), labels.labels[kept[r]], L, rng);
        std::copy(e.begin(), e.end(), encoded.row(r).begin());
    }

    model.generator = build_generator(cfg, model.normalizer, L, rng);
    model.discriminator = build_discriminator(cfg, width, L, rng);
    AdamState g_opt = AdamState::for_network(model.generator, cfg.beta1, cfg.beta2);
    AdamState d_opt = AdamState::for_network(model.discriminator, cfg.beta1, cfg.beta2);

    const std::size_t B = cfg.batch_size;
    const std::size_t steps_per_epoch = (n + B - 1) / B;
    const double inv_b = 1.0 / static_cast<double>(B);
    TrainingLog log;
    log.dropped_noise_rows = labels.size() - n;
    log.steps.reserve(cfg.epochs * steps_per_epoch);

    std::vector<std::size_t> cond(B), picked(B);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            const std::size_t step = log.steps.size();
            double d_loss = 0.0, real_mean = 0.0, fake_mean = 0.0;
            Matrix c;
            for (std::size_t d_step = 0; d_step < cfg.discriminator_steps; ++d_step) {
                d_loss = real_mean = fake_mean = 0.0;
                for (std::size_t b = 0; b < B; ++b) {
                    cond[b] = rng.index(L);
                    const auto& pool = rows_by_label[cond[b]];
                    picked[b] = pool[rng.index(pool.size())];
                }
                c = detail::one_hot(cond, L);
                const Matrix real = encoded.select_rows(picked);

                // discriminator: maximize log D(x|c) + log(1 - D(G(z|c)|c))
                const Matrix fake = detail::generate(model, c, rng);
                ForwardCache real_cache, fake_cache;
                const Matrix d_real = model.discriminator.forward(detail::concat_columns(real, c), &real_cache);
                const Matrix d_fake = model.discriminator.forward(detail::concat_columns(fake, c), &fake_cache);
                Matrix grad_real(B, 1), grad_fake(B, 1);
                for (std::size_t b = 0; b < B; ++b) {
                    const double yr = std::clamp(d_real(b, 0), detail::kProbClamp, 1.0 - detail::kProbClamp);
                    const double yf = std::clamp(d_fake(b, 0), detail::kProbClamp, 1.0 - detail::kProbClamp);
                    d_loss -= (std::log(yr) + std::log(1.0 - yf)) * inv_b;
                    grad_real(b, 0) = -inv_b / yr;
                    grad_fake(b, 0) = inv_b / (1.0 - yf);
                    real_mean += d_real(b, 0) * inv_b;
                    fake_mean += d_fake(b, 0) * inv_b;
                }
                Gradients gd = model.discriminator.backward(real_cache, grad_real);
                const Gradients gf = model.discriminator.backward(fake_cache, grad_fake);
                for (std::size_t l = 0; l < gd.layers.size(); ++l) {
                    auto& w = gd.layers[l].weight.data();
                    for (std::size_t i = 0; i < w.size(); ++i) w[i] += gf.layers[l].weight.data()[i];
                    for (std::size_t i = 0; i < gd.layers[l].bias.size(); ++i)
                        gd.layers[l].bias[i] += gf.layers[l].bias[i];
                }
                adam_step(model.discriminator, gd, d_opt, cfg.learning_rate);
            }

            // generator: minimize -log D(G(z|c)|c) + CE(c, generated label segment)
            ForwardCache g_cache, dg_cache;
            const Matrix gen = detail::generate(model, c, rng, &g_cache);
            const Matrix d_gen = model.discriminator.forward(detail::concat_columns(gen, c), &dg_cache);
            double g_loss = 0.0;
            Matrix grad_d(B, 1);
            for (std::size_t b = 0; b < B; ++b) {
                const double y = std::clamp(d_gen(b, 0), detail::kProbClamp, 1.0 - detail::kProbClamp);
                g_loss -= std::log(y) * inv_b;
                grad_d(b, 0) = -inv_b / y;
            }
            const Gradients through_d = model.discriminator.backward(dg_cache, grad_d);
            Matrix grad_gen(B, width);
            for (std::size_t b = 0; b < B; ++b) {
                std::copy_n(through_d.input.row(b).begin(), width, grad_gen.row(b).begin());
                const double p = std::max(gen(b, cont_width + cond[b]), detail::kProbClamp);
                g_loss -= std::log(p) * inv_b;
                grad_gen(b, cont_width + cond[b]) -= inv_b / p;
            }
            const Gradients gg = model.generator.backward(g_cache, grad_gen);
            adam_step(model.generator, gg, g_opt, cfg.learning_rate);

            require(std::isfinite(g_loss) && std::isfinite(d_loss), ErrorKind::numeric,
                    "non-finite loss at step " + std::to_string(step));
            log.steps.push_back({step, epoch, g_loss, d_loss, real_mean, fake_mean});
        }
    }
    return {std::move(model), std::move(log)};
}

/// Raw generator output for the given conditions (one row per condition).
inline Matrix ctgan_generate_encoded(const CtganModel& model, const std::vector<std::size_t>& conditions, Rng& rng) {
    return detail::generate(model, detail::one_hot(conditions, model.label_count), rng);
}

/// Samples n synthetic rows. With a condition every row is generated under
/// that label; otherwise labels follow the training label frequencies. The
/// condition vector is written into the label segment before decoding, so
/// each output row carries exactly the label it was generated under.
inline Dataset ctgan_sample(const CtganModel& model, std::size_t n, std::optional<int> condition, std::uint64_t seed) {
    if (condition)
        require(*condition >= 0 && static_cast<std::size_t>(*condition) < model.label_count, ErrorKind::parameter,
                "condition " + std::to_string(*condition) + " outside [0, " + std::to_string(model.label_count) +
                    ")");
    Rng rng(seed);
    const std::size_t cont_width = model.normalizer.encoded_width();
    Matrix values(n, model.normalizer.column_count());
    std::vector<int> labels(n);
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t rows = std::min(kChunk, n - start);
        std::vector<std::size_t> cond(rows);
        for (auto& c : cond)
            c = condition ? static_cast<std::size_t>(*condition) : rng.categorical(model.label_frequencies);
        Matrix enc = ctgan_generate_encoded(model, cond, rng);
        for (std::size_t r = 0; r < rows; ++r) {
            auto row = enc.row(r);
            for (std::size_t l = 0; l < model.label_count; ++l) row[cont_width + l] = l == cond[r] ? 1.0 : 0.0;
            auto [decoded, label] = decode_row(model.normalizer, row, model.label_count);
            std::copy(decoded.begin(), decoded.end(), values.row(start + r).begin());
            labels[start + r] = label;
        }
    }
    return Dataset::from_matrix(std::move(values), model.column_names, std::move(labels), model.label_name);
}

/// Fraction of generated rows whose own label segment argmax equals the
/// condition they were generated under.
inline double generated_label_agreement(const CtganModel& model, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::size_t> cond(n);
    for (std::size_t i = 0; i < n; ++i) cond[i] = i % model.label_count;
    const Matrix enc = ctgan_generate_encoded(model, cond, rng);
    const std::size_t cont_width = model.normalizer.encoded_width();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto seg = enc.row(i).subspan(cont_width, model.label_count);
        if (static_cast<std::size_t>(std::max_element(seg.begin(), seg.end()) - seg.begin()) == cond[i]) ++hits;
    }
    return n ? static_cast<double>(hits) / static_cast<double>(n) : 1.0;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const ModeSpecificNormalizer& norm) {
    nlohmann::ordered_json j;
    j["prune_threshold"] = norm.prune_threshold;
    j["sigma_floor"] = norm.sigma_floor;
    auto cols = nlohmann::ordered_json::array();
    for (const auto& c : norm.columns) {
        auto modes = nlohmann::ordered_json::array();
        for (const auto& m : c) modes.push_back({{"weight", m.weight}, {"mean", m.mean}, {"stddev", m.stddev}});
        cols.push_back(modes);
    }
    j["columns"] = cols;
    return j;
}

inline ModeSpecificNormalizer normalizer_from_json(const nlohmann::ordered_json& j) {
    ModeSpecificNormalizer n;
    n.prune_threshold = j.at("prune_threshold").get<double>();
    n.sigma_floor = j.at("sigma_floor").get<double>();
    for (const auto& c : j.at("columns")) {
        std::vector<Mode> modes;
        for (const auto& m : c)
            modes.push_back({m.at("weight").get<double>(), m.at("mean").get<double>(), m.at("stddev").get<double>()});
        n.columns.push_back(std::move(modes));
    }
    return n;
}

inline nlohmann::ordered_json to_json(const CtganModel& model) {
    nlohmann::ordered_json j;
    j["format"] = "anonymixer-ctgan-1";
    j["noise_dim"] = model.noise_dim;
    j["label_count"] = model.label_count;
    j["gumbel"] = model.gumbel;
    j["label_name"] = model.label_name;
    j["label_frequencies"] = model.label_frequencies;
    j["column_names"] = model.column_names;
    j["normalizer"] = to_json(model.normalizer);
    j["generator"] = to_json(model.generator);
    j["discriminator"] = to_json(model.discriminator);
    return j;
}

inline CtganModel ctgan_from_json(const nlohmann::ordered_json& j) {
    require(j.value("format", "") == "anonymixer-ctgan-1", ErrorKind::parse, "not a CTGAN checkpoint");
    CtganModel m;
    m.noise_dim = j.at("noise_dim").get<std::size_t>();
    m.label_count = j.at("label_count").get<std::size_t>();
    m.gumbel = j.value("gumbel", false);
    m.label_name = j.at("label_name").get<std::string>();
    m.label_frequencies = j.at("label_frequencies").get<std::vector<double>>();
    m.column_names = j.at("column_names").get<std::vector<std::string>>();
    m.normalizer = normalizer_from_json(j.at("normalizer"));
    m.generator = network_from_json(j.at("generator"));
    m.discriminator = network_from_json(j.at("discriminator"));
    require(m.generator.output_width() == m.encoded_width(), ErrorKind::shape, "generator width mismatch");
    require(m.discriminator.input_width() == m.encoded_width() + m.label_count, ErrorKind::shape,
            "discriminator width mismatch");
    return m;
}

inline std::uint64_t checkpoint_hash(const CtganModel& model) { return fnv1a(to_json(model).dump()); }

inline void write_training_log_csv(std::ostream& out, const TrainingLog& log) {
    out << "step,epoch,gen_loss,disc_loss\n";
    for (const auto& s : log.steps)
        out << s.step << ',' << s.epoch << ',' << detail::format_real(s.gen_loss) << ','
            << detail::format_real(s.disc_loss) << '\n';
}

}  // namespace anonymixer
