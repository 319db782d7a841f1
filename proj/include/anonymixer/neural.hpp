#pragma once

// Minimal dense feed-forward networks with explicit reverse-mode gradients
// and an Adam optimizer. Everything is double precision.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "anonymixer/error.hpp"
#include "anonymixer/matrix.hpp"
#include "anonymixer/random.hpp"

namespace anonymixer {

enum class Activation { linear, relu, leaky_relu, tanh, sigmoid, segmented };

inline constexpr double kLeakySlope = 0.2;

/// Piece of a segmented output layer: tanh over a scalar block, or softmax
/// over a one-hot block. Softmax blocks compute softmax(z / temperature).
enum class SegmentKind { tanh, softmax };

struct OutputSegment {
    std::size_t width = 1;
    SegmentKind kind = SegmentKind::tanh;
    double temperature = 1.0;

    bool operator==(const OutputSegment&) const = default;
};

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::segmented: return "softmax-segment";
    }
    return "?";
}

inline Activation parse_activation(std::string_view s) {
    if (s == "linear") return Activation::linear;
    if (s == "relu") return Activation::relu;
    if (s == "leaky_relu") return Activation::leaky_relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "softmax-segment") return Activation::segmented;
    throw Error(ErrorKind::parse, "unknown activation '" + std::string(s) + "'");
}

struct DenseLayer {
    Matrix weight;  // out x in
    std::vector<double> bias;
    Activation activation = Activation::linear;
    std::vector<OutputSegment> segments;  // only for Activation::segmented

    std::size_t in() const noexcept { return weight.cols(); }
    std::size_t out() const noexcept { return weight.rows(); }
};

struct LayerSpec {
    std::size_t width = 0;
    Activation activation = Activation::linear;
    std::vector<OutputSegment> segments;
};

struct LayerGradient {
    Matrix weight;
    std::vector<double> bias;
};

struct Gradients {
    std::vector<LayerGradient> layers;
    Matrix input;
};

struct ForwardCache {
    std::uint64_t network_id = 0;
    std::uint64_t network_version = 0;
    std::vector<Matrix> inputs;       // input of each layer
    std::vector<Matrix> activations;  // output of each layer
};

namespace detail {

inline std::uint64_t next_network_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// z = W x + b, four output rows at a time so the dot products overlap.
inline void affine(const DenseLayer& layer, std::span<const double> x, std::span<double> z) {
    const std::size_t in = x.size(), out = z.size();
    const double* w = layer.weight.data().data();
    const double* xp = x.data();
    std::size_t o = 0;
    for (; o + 4 <= out; o += 4) {
        const double *w0 = w + o * in, *w1 = w0 + in, *w2 = w1 + in, *w3 = w2 + in;
        double s0 = layer.bias[o], s1 = layer.bias[o + 1], s2 = layer.bias[o + 2], s3 = layer.bias[o + 3];
        for (std::size_t j = 0; j < in; ++j) {
            const double v = xp[j];
            s0 += w0[j] * v;
            s1 += w1[j] * v;
            s2 += w2[j] * v;
            s3 += w3[j] * v;
        }
        z[o] = s0;
        z[o + 1] = s1;
        z[o + 2] = s2;
        z[o + 3] = s3;
    }
    for (; o < out; ++o) {
        const double* wr = w + o * in;
        double s = layer.bias[o];
        for (std::size_t j = 0; j < in; ++j) s += wr[j] * xp[j];
        z[o] = s;
    }
}

inline void apply_segments(std::span<double> row, const std::vector<OutputSegment>& segments) {
    std::size_t offset = 0;
    for (const auto& seg : segments) {
        auto block = row.subspan(offset, seg.width);
        if (seg.kind == SegmentKind::tanh) {
            for (auto& v : block) v = std::tanh(v);
        } else {
            const double mx = *std::max_element(block.begin(), block.end());
            double sum = 0.0;
            for (auto& v : block) sum += v = std::exp((v - mx) / seg.temperature);
            for (auto& v : block) v /= sum;
        }
        offset += seg.width;
    }
}

inline void segments_backward(std::span<const double> y, std::span<double> grad,
                              const std::vector<OutputSegment>& segments) {
    std::size_t offset = 0;
    for (const auto& seg : segments) {
        auto yb = y.subspan(offset, seg.width);
        auto gb = grad.subspan(offset, seg.width);
        if (seg.kind == SegmentKind::tanh) {
            for (std::size_t i = 0; i < seg.width; ++i) gb[i] *= 1.0 - yb[i] * yb[i];
        } else {
            double dot = 0.0;
            for (std::size_t i = 0; i < seg.width; ++i) dot += gb[i] * yb[i];
            for (std::size_t i = 0; i < seg.width; ++i) gb[i] = yb[i] * (gb[i] - dot) / seg.temperature;
        }
        offset += seg.width;
    }
}

}  // namespace detail

/// Stack of dense layers. Parameters change only through adam_step or
/// mutable_layers(); both invalidate outstanding forward caches.
class DenseNetwork {
public:
    DenseNetwork() : id_(detail::next_network_id()) {}

    explicit DenseNetwork(std::vector<DenseLayer> layers) : id_(detail::next_network_id()), layers_(std::move(layers)) {
        validate();
    }

    DenseNetwork(const DenseNetwork& other) : id_(detail::next_network_id()), layers_(other.layers_) {}
    DenseNetwork& operator=(const DenseNetwork& other) {
        if (this != &other) {
            layers_ = other.layers_;
            ++version_;
        }
        return *this;
    }
    DenseNetwork(DenseNetwork&&) noexcept = default;
    DenseNetwork& operator=(DenseNetwork&&) noexcept = default;

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization of weights and biases.
    static DenseNetwork build(std::size_t input_width, const std::vector<LayerSpec>& specs, Rng& rng) {
        std::vector<DenseLayer> layers;
        std::size_t in = input_width;
        for (const auto& spec : specs) {
            DenseLayer layer{Matrix(spec.width, in), std::vector<double>(spec.width), spec.activation, spec.segments};
            const double bound = 1.0 / std::sqrt(static_cast<double>(in));
            for (auto& w : layer.weight.data()) w = (2.0 * rng.uniform() - 1.0) * bound;
            for (auto& b : layer.bias) b = (2.0 * rng.uniform() - 1.0) * bound;
            layers.push_back(std::move(layer));
            in = spec.width;
        }
        return DenseNetwork(std::move(layers));
    }

    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    std::vector<DenseLayer>& mutable_layers() {
        ++version_;
        return layers_;
    }
    std::uint64_t id() const noexcept { return id_; }
    std::uint64_t version() const noexcept { return version_; }

    std::size_t input_width() const { return layers_.empty() ? 0 : layers_.front().in(); }
    std::size_t output_width() const { return layers_.empty() ? 0 : layers_.back().out(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.weight.data().size() + l.bias.size();
        return n;
    }

    void validate() const {
        require(!layers_.empty(), ErrorKind::contract, "network has no layers");
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& l = layers_[i];
            require(l.bias.size() == l.out(), ErrorKind::shape, "bias width mismatch in layer " + std::to_string(i));
            if (i > 0)
                require(l.in() == layers_[i - 1].out(), ErrorKind::shape,
                        "layer " + std::to_string(i) + " input does not match previous output");
            if (l.activation == Activation::segmented) {
                std::size_t total = 0;
                for (const auto& s : l.segments) {
                    require(s.width >= 1, ErrorKind::shape, "empty output segment");
                    total += s.width;
                }
                require(total == l.out(), ErrorKind::shape, "segments do not cover layer " + std::to_string(i));
            }
        }
    }

    /// `output_noise`, when given, is added to the last layer's
    /// pre-activations (used for Gumbel-perturbed softmax segments).
    Matrix forward(const Matrix& batch, ForwardCache* cache = nullptr, const Matrix* output_noise = nullptr) const {
        require(batch.cols() == input_width(), ErrorKind::shape,
                "network expects input width " + std::to_string(input_width()) + ", got " +
                    std::to_string(batch.cols()));
        require(all_finite(batch.data()), ErrorKind::numeric, "non-finite network input");
        if (cache) {
            cache->network_id = id_;
            cache->network_version = version_;
            cache->inputs.clear();
            cache->activations.clear();
        }
        if (output_noise)
            require(output_noise->rows() == batch.rows() && output_noise->cols() == output_width(), ErrorKind::shape,
                    "output noise shape mismatch");
        Matrix a = batch;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& layer = layers_[l];
            const bool last = l + 1 == layers_.size();
            Matrix z(a.rows(), layer.out());
            for (std::size_t i = 0; i < a.rows(); ++i) {
                const auto xi = a.row(i);
                auto zi = z.row(i);
                detail::affine(layer, xi, zi);
                if (last && output_noise)
                    for (std::size_t o = 0; o < layer.out(); ++o) zi[o] += (*output_noise)(i, o);
                switch (layer.activation) {
                    case Activation::linear: break;
                    case Activation::relu:
                        for (auto& v : zi) v = v > 0.0 ? v : 0.0;
                        break;
                    case Activation::leaky_relu:
                        for (auto& v : zi) v = v > 0.0 ? v : kLeakySlope * v;
                        break;
                    case Activation::tanh:
                        for (auto& v : zi) v = std::tanh(v);
                        break;
                    case Activation::sigmoid:
                        for (auto& v : zi) v = detail::sigmoid(v);
                        break;
                    case Activation::segmented: detail::apply_segments(zi, layer.segments); break;
                }
            }
            if (cache) {
                cache->inputs.push_back(std::move(a));
                cache->activations.push_back(z);
            }
            a = std::move(z);
        }
        return a;
    }

    /// Reverse-mode gradients given dLoss/dOutput.
    Gradients backward(const ForwardCache& cache, const Matrix& output_grad) const {
        require(cache.network_id == id_ && cache.network_version == version_ &&
                    cache.inputs.size() == layers_.size(),
                ErrorKind::contract, "forward cache does not belong to this network state");
        const Matrix& out = cache.activations.back();
        require(output_grad.rows() == out.rows() && output_grad.cols() == out.cols(), ErrorKind::shape,
                "output gradient shape mismatch");

        Gradients g;
        g.layers.resize(layers_.size());
        Matrix delta = output_grad;
        for (std::size_t l = layers_.size(); l-- > 0;) {
            const auto& layer = layers_[l];
            const Matrix& y = cache.activations[l];
            const Matrix& x = cache.inputs[l];
            for (std::size_t i = 0; i < delta.rows(); ++i) {
                auto d = delta.row(i);
                const auto yi = y.row(i);
                switch (layer.activation) {
                    case Activation::linear: break;
                    case Activation::relu:
                        for (std::size_t o = 0; o < d.size(); ++o)
                            if (!(yi[o] > 0.0)) d[o] = 0.0;
                        break;
                    case Activation::leaky_relu:
                        for (std::size_t o = 0; o < d.size(); ++o)
                            if (!(yi[o] > 0.0)) d[o] *= kLeakySlope;
                        break;
                    case Activation::tanh:
                        for (std::size_t o = 0; o < d.size(); ++o) d[o] *= 1.0 - yi[o] * yi[o];
                        break;
                    case Activation::sigmoid:
                        for (std::size_t o = 0; o < d.size(); ++o) d[o] *= yi[o] * (1.0 - yi[o]);
                        break;
                    case Activation::segmented: detail::segments_backward(yi, d, layer.segments); break;
                }
            }
            LayerGradient lg{Matrix(layer.out(), layer.in(), 0.0), std::vector<double>(layer.out(), 0.0)};
            Matrix prev(delta.rows(), layer.in(), 0.0);
            for (std::size_t i = 0; i < delta.rows(); ++i) {
                const auto d = delta.row(i);
                const auto xi = x.row(i);
                auto pi = prev.row(i);
                for (std::size_t o = 0; o < layer.out(); ++o) {
                    const double dv = d[o];
                    if (dv == 0.0) continue;
                    lg.bias[o] += dv;
                    auto gw = lg.weight.row(o);
                    const auto w = layer.weight.row(o);
                    for (std::size_t j = 0; j < xi.size(); ++j) {
                        gw[j] += dv * xi[j];
                        pi[j] += dv * w[j];
                    }
                }
            }
            g.layers[l] = std::move(lg);
            delta = std::move(prev);
        }
        g.input = std::move(delta);
        return g;
    }

private:
    std::uint64_t id_;
    std::uint64_t version_ = 0;
    std::vector<DenseLayer> layers_;
};

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<LayerGradient> first;
    std::vector<LayerGradient> second;

    static AdamState for_network(const DenseNetwork& net, double beta1 = 0.9, double beta2 = 0.999,
                                 double epsilon = 1e-8) {
        AdamState s;
        s.beta1 = beta1;
        s.beta2 = beta2;
        s.epsilon = epsilon;
        for (const auto& l : net.layers()) {
            s.first.push_back({Matrix(l.out(), l.in(), 0.0), std::vector<double>(l.out(), 0.0)});
            s.second.push_back({Matrix(l.out(), l.in(), 0.0), std::vector<double>(l.out(), 0.0)});
        }
        return s;
    }
};

/// Bias-corrected Adam update in place.
inline void adam_step(DenseNetwork& net, const Gradients& grads, AdamState& state, double lr) {
    const auto& layers = net.layers();
    require(grads.layers.size() == layers.size() && state.first.size() == layers.size(), ErrorKind::shape,
            "gradient/optimizer layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        require(grads.layers[l].weight.rows() == layers[l].out() && grads.layers[l].weight.cols() == layers[l].in() &&
                    grads.layers[l].bias.size() == layers[l].out(),
                ErrorKind::shape, "gradient shape mismatch in layer " + std::to_string(l));
        if (!all_finite(grads.layers[l].weight.data()) || !all_finite(grads.layers[l].bias))
            throw Error(ErrorKind::numeric, "non-finite gradient in layer " + std::to_string(l));
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    auto update = [&](double& p, double g, double& m, double& v) {
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g * g;
        p -= lr * (m / c1) / (std::sqrt(v / c2) + state.epsilon);
    };

    auto& mut = net.mutable_layers();
    for (std::size_t l = 0; l < mut.size(); ++l) {
        auto& w = mut[l].weight.data();
        const auto& gw = grads.layers[l].weight.data();
        auto& mw = state.first[l].weight.data();
        auto& vw = state.second[l].weight.data();
        for (std::size_t i = 0; i < w.size(); ++i) update(w[i], gw[i], mw[i], vw[i]);
        for (std::size_t i = 0; i < mut[l].bias.size(); ++i)
            update(mut[l].bias[i], grads.layers[l].bias[i], state.first[l].bias[i], state.second[l].bias[i]);
        if (!all_finite(w)) throw Error(ErrorKind::numeric, "non-finite weight in layer " + std::to_string(l));
    }
}

inline nlohmann::ordered_json to_json(const DenseNetwork& net) {
    auto layers = nlohmann::ordered_json::array();
    for (const auto& l : net.layers()) {
        nlohmann::ordered_json j;
        j["in"] = l.in();
        j["out"] = l.out();
        j["activation"] = to_string(l.activation);
        if (l.activation == Activation::segmented) {
            auto segs = nlohmann::ordered_json::array();
            for (const auto& s : l.segments)
                segs.push_back({{"width", s.width},
                                {"kind", s.kind == SegmentKind::tanh ? "tanh" : "softmax"},
                                {"temperature", s.temperature}});
            j["segments"] = segs;
        }
        j["weight"] = l.weight.data();
        j["bias"] = l.bias;
        layers.push_back(std::move(j));
    }
    return {{"layers", layers}};
}

inline DenseNetwork network_from_json(const nlohmann::ordered_json& j) {
    std::vector<DenseLayer> layers;
    for (const auto& jl : j.at("layers")) {
        DenseLayer l;
        const auto in = jl.at("in").get<std::size_t>();
        const auto out = jl.at("out").get<std::size_t>();
        l.weight = Matrix(out, in, jl.at("weight").get<std::vector<double>>());
        l.bias = jl.at("bias").get<std::vector<double>>();
        l.activation = parse_activation(jl.at("activation").get<std::string>());
        if (jl.contains("segments"))
            for (const auto& s : jl.at("segments"))
                l.segments.push_back({s.at("width").get<std::size_t>(),
                                      s.at("kind").get<std::string>() == "tanh" ? SegmentKind::tanh
                                                                                : SegmentKind::softmax,
                                      s.value("temperature", 1.0)});
        layers.push_back(std::move(l));
    }
    return DenseNetwork(std::move(layers));
}

}  // namespace anonymixer
