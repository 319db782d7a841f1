#pragma once

// End-to-end orchestration: real-data clustering suite, CTGAN synthesis
// conditioned on each algorithm's labels, re-clustering of the synthetic
// data, similarity assessment and artifact emission.

#include <array>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anonymixer/cluster.hpp"
#include "anonymixer/config.hpp"
#include "anonymixer/ctgan.hpp"
#include "anonymixer/dataio.hpp"
#include "anonymixer/ghmm.hpp"
#include "anonymixer/metrics.hpp"
#include "anonymixer/pca.hpp"
#include "anonymixer/svg.hpp"

namespace anonymixer {

using ordered_json = nlohmann::ordered_json;

enum class Algorithm { kmeans, dbscan, ghmm, agglomerative };

inline constexpr std::array<Algorithm, 4> kAllAlgorithms{Algorithm::kmeans, Algorithm::dbscan, Algorithm::ghmm,
                                                         Algorithm::agglomerative};

inline std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::kmeans: return "kmeans";
        case Algorithm::dbscan: return "dbscan";
        case Algorithm::ghmm: return "ghmm";
        case Algorithm::agglomerative: return "agglomerative";
    }
    return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
    for (auto a : kAllAlgorithms)
        if (to_string(a) == s) return a;
    throw Error(ErrorKind::usage,
                "unknown algorithm '" + std::string(s) + "' (expected kmeans, dbscan, ghmm or agglomerative)");
}

/// Space in which validation scores are computed. `pca` scores on the
/// principal components covering `pca_variance` of the total variance,
/// fitted separately on each dataset being scored.
enum class MetricSpace { full, pca };

inline std::string to_string(MetricSpace s) { return s == MetricSpace::full ? "full" : "pca"; }

inline MetricSpace parse_metric_space(std::string_view s) {
    if (s == "full") return MetricSpace::full;
    if (s == "pca") return MetricSpace::pca;
    throw Error(ErrorKind::usage, "unknown metric space '" + std::string(s) + "' (expected full or pca)");
}

struct RunConfig {
    std::string input_path;
    Schema schema;
    std::vector<Algorithm> algorithms{kAllAlgorithms.begin(), kAllAlgorithms.end()};
    std::size_t k_min = 2;
    std::size_t k_max = 10;
    std::vector<double> eps_grid{0.02, 0.038, 0.05, 0.1, 0.2};
    std::vector<std::size_t> minpts_grid{3, 5, 10};
    std::size_t ghmm_states = 3;
    GhmmOptions ghmm;
    std::size_t agglomerative_k = 3;
    CtganConfig ctgan;
    std::optional<std::size_t> synthetic_rows;  // default: real non-noise count
    std::size_t pca_components = 2;             // visualization
    MetricSpace metric_space = MetricSpace::full;
    double pca_variance = 0.95;
    std::uint64_t seed = 42;
    std::optional<double> threshold;
    std::string config_hash;

    void validate() const {
        require(!algorithms.empty(), ErrorKind::usage, "no clustering algorithm selected");
        require(k_min >= 2 && k_min <= k_max, ErrorKind::usage, "k range must satisfy 2 <= k-min <= k-max");
        require(!eps_grid.empty() && !minpts_grid.empty(), ErrorKind::usage, "DBSCAN grids must be non-empty");
        for (double e : eps_grid) require(e > 0.0 && std::isfinite(e), ErrorKind::usage, "eps grid values must be > 0");
        for (auto p : minpts_grid) require(p >= 1, ErrorKind::usage, "minpts grid values must be >= 1");
        require(ghmm_states >= 1, ErrorKind::usage, "GHMM needs at least one state");
        require(agglomerative_k >= 1, ErrorKind::usage, "agglomerative k must be >= 1");
        require(ctgan.epochs >= 1 && ctgan.batch_size >= 1, ErrorKind::usage, "epochs and batch must be >= 1");
        require(pca_components >= 1, ErrorKind::usage, "pca components must be >= 1");
        require(pca_variance > 0.0 && pca_variance <= 1.0, ErrorKind::usage, "pca variance must lie in (0, 1]");
        if (threshold) require(*threshold >= 0.0, ErrorKind::usage, "threshold must be >= 0");
    }

    bool uses(Algorithm a) const { return std::find(algorithms.begin(), algorithms.end(), a) != algorithms.end(); }

    /// Per-stage seeds, all derived from the root seed.
    std::uint64_t seed_for(const std::string& stage) const { return derive_seed(seed, stage); }

    std::vector<std::string> seed_stages() const {
        std::vector<std::string> stages{"kmeans", "ghmm", "normalizer"};
        for (auto a : algorithms) {
            stages.push_back("ctgan.train." + to_string(a));
            stages.push_back("ctgan.sample." + to_string(a));
        }
        return stages;
    }
};

/// Builds a RunConfig from an INI file. Recognised sections: [data],
/// [pipeline], [cluster], [ghmm], [ctgan], [pca], [schema].
inline RunConfig run_config_from(const Config& c) {
    RunConfig r;
    if (auto in = c.get("data", "input")) r.input_path = c.resolve_path(*in);
    r.schema = c.schema();
    if (c.has("pipeline", "algorithms")) {
        r.algorithms.clear();
        for (const auto& name : c.get_list("pipeline", "algorithms", {})) {
            const auto a = parse_algorithm(name);
            if (!r.uses(a)) r.algorithms.push_back(a);
        }
    }
    r.seed = c.get_size("pipeline", "seed", r.seed);
    r.metric_space = parse_metric_space(c.get_string("pipeline", "metric_space", "full"));
    if (c.has("pipeline", "threshold")) r.threshold = c.get_double("pipeline", "threshold", 0.0);
    if (c.has("pipeline", "synthetic_rows")) r.synthetic_rows = c.get_size("pipeline", "synthetic_rows", 0);

    r.k_min = c.get_size("cluster", "k_min", r.k_min);
    r.k_max = c.get_size("cluster", "k_max", r.k_max);
    r.eps_grid = c.get_doubles("cluster", "eps_grid", r.eps_grid);
    r.minpts_grid = c.get_sizes("cluster", "minpts_grid", r.minpts_grid);
    r.agglomerative_k = c.get_size("cluster", "agglomerative_k", r.agglomerative_k);

    r.ghmm_states = c.get_size("ghmm", "states", r.ghmm_states);
    r.ghmm.max_iter = c.get_size("ghmm", "max_iter", r.ghmm.max_iter);
    r.ghmm.tol = c.get_double("ghmm", "tol", r.ghmm.tol);

    auto& g = r.ctgan;
    g.noise_dim = c.get_size("ctgan", "noise_dim", g.noise_dim);
    g.generator_hidden = c.get_sizes("ctgan", "generator_hidden", g.generator_hidden);
    g.discriminator_hidden = c.get_sizes("ctgan", "discriminator_hidden", g.discriminator_hidden);
    g.learning_rate = c.get_double("ctgan", "learning_rate", g.learning_rate);
    g.beta1 = c.get_double("ctgan", "beta1", g.beta1);
    g.beta2 = c.get_double("ctgan", "beta2", g.beta2);
    g.batch_size = c.get_size("ctgan", "batch", g.batch_size);
    g.epochs = c.get_size("ctgan", "epochs", g.epochs);
    g.max_modes = c.get_size("ctgan", "max_modes", g.max_modes);
    g.gumbel_tau = c.get_double("ctgan", "gumbel_tau", g.gumbel_tau);
    g.discriminator_steps = c.get_size("ctgan", "discriminator_steps", g.discriminator_steps);
    if (auto a = c.get("ctgan", "hidden_activation")) g.hidden_activation = parse_activation(*a);
    if (auto a = c.get("ctgan", "discriminator_activation")) g.discriminator_activation = parse_activation(*a);

    r.pca_components = c.get_size("pca", "components", r.pca_components);
    r.pca_variance = c.get_double("pca", "variance", r.pca_variance);
    r.config_hash = c.hash();
    r.validate();
    return r;
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

/// Finite numbers as-is; infinities as the strings "inf" / "-inf"; NaN as "nan".
inline ordered_json json_real(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

inline double real_from_json(const ordered_json& j) {
    if (j.is_number()) return j.get<double>();
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
}

inline ordered_json to_json(const ValidationScores& s) {
    ordered_json j;
    j["silhouette"] = json_real(s.silhouette);
    j["calinski_harabasz"] = json_real(s.calinski_harabasz);
    j["davies_bouldin"] = json_real(s.davies_bouldin);
    j["n_effective_rows"] = s.n_effective_rows;
    return j;
}

inline ValidationScores scores_from_json(const ordered_json& j) {
    return {real_from_json(j.at("silhouette")), real_from_json(j.at("calinski_harabasz")),
            real_from_json(j.at("davies_bouldin")), j.value("n_effective_rows", std::size_t{0})};
}

// ---------------------------------------------------------------------------
// Clustering suite
// ---------------------------------------------------------------------------

struct AlgorithmResult {
    ClusterAssignment assignment;
    ValidationScores scores;
    ordered_json selection;  // chosen parameters and sweep details
};

using SuiteResult = std::map<Algorithm, AlgorithmResult>;

/// The matrix scores are computed on, per the configured metric space.
inline Matrix scoring_space(const Matrix& x, const RunConfig& cfg) {
    if (cfg.metric_space == MetricSpace::full) return x;
    const std::size_t p = components_for_variance(x, cfg.pca_variance);
    return pca_transform(pca_fit(x, p), x);
}

inline AlgorithmResult run_algorithm(Algorithm alg, const Matrix& x, const RunConfig& cfg) {
    AlgorithmResult r;
    switch (alg) {
        case Algorithm::kmeans: {
            auto sel = select_kmeans_k(x, cfg.k_min, std::min(cfg.k_max, x.rows() - 1), cfg.seed_for("kmeans"));
            r.selection["k"] = sel.k_best;
            auto& sweep = r.selection["sweep"] = ordered_json::array();
            for (const auto& e : sel.sweep)
                sweep.push_back({{"k", e.k}, {"silhouette", json_real(e.silhouette)}});
            r.assignment = std::move(sel.assignment);
            break;
        }
        case Algorithm::dbscan: {
            auto sel = select_dbscan_params(x, cfg.eps_grid, cfg.minpts_grid);
            r.selection["eps"] = sel.params.eps;
            r.selection["min_pts"] = sel.params.min_pts;
            r.selection["silhouette"] = json_real(sel.best_silhouette);
            r.assignment = std::move(sel.assignment);
            r.selection["noise_rows"] = r.assignment.noise_count();
            break;
        }
        case Algorithm::ghmm: {
            auto [model, log] = ghmm_fit(x, cfg.ghmm_states, cfg.seed_for("ghmm"), cfg.ghmm);
            r.selection["states"] = cfg.ghmm_states;
            r.selection["iterations"] = log.size();
            r.selection["log_likelihood"] = json_real(log.back());
            r.assignment = ghmm_decode(model, x);
            break;
        }
        case Algorithm::agglomerative: {
            auto [tree, assignment] = agglomerative_fit(x, cfg.agglomerative_k);
            r.selection["k"] = cfg.agglomerative_k;
            r.assignment = std::move(assignment);
            break;
        }
    }
    r.selection["n_clusters"] = r.assignment.n_clusters;
    r.scores = score_all(scoring_space(x, cfg), r.assignment);
    return r;
}

inline Error with_context(const Error& e, const std::string& context) {
    return Error(e.kind(), context + ": " + e.message());
}

/// Runs each selected algorithm's selection procedure and scores the result.
/// Errors carry the algorithm name.
inline SuiteResult run_clustering_suite(const Dataset& data, const RunConfig& cfg) {
    SuiteResult out;
    for (auto alg : cfg.algorithms) {
        try {
            out.emplace(alg, run_algorithm(alg, data.values(), cfg));
        } catch (const Error& e) {
            throw with_context(e, to_string(alg));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

struct Anonymized {
    Dataset synthetic;
    CtganModel model;
    TrainingLog log;
};

/// Trains a CTGAN conditioned on `labels` and samples the synthetic table.
inline Anonymized anonymize(const Dataset& data, const ClusterAssignment& labels, const RunConfig& cfg,
                            Algorithm alg) {
    auto [model, log] = ctgan_train(data, labels, cfg.ctgan, cfg.seed_for("ctgan.train." + to_string(alg)));
    const std::size_t n = cfg.synthetic_rows.value_or(labels.size() - labels.noise_count());
    auto synthetic = ctgan_sample(model, n, std::nullopt, cfg.seed_for("ctgan.sample." + to_string(alg)));
    return {std::move(synthetic), std::move(model), std::move(log)};
}

// ---------------------------------------------------------------------------
// Similarity assessment
// ---------------------------------------------------------------------------

inline constexpr double kRelativeDivisorFloor = 1e-12;

enum class Metric { silhouette, calinski_harabasz, davies_bouldin };
inline constexpr std::array<Metric, 3> kAllMetrics{Metric::silhouette, Metric::calinski_harabasz,
                                                   Metric::davies_bouldin};

inline std::string to_string(Metric m) {
    switch (m) {
        case Metric::silhouette: return "silhouette";
        case Metric::calinski_harabasz: return "calinski_harabasz";
        case Metric::davies_bouldin: return "davies_bouldin";
    }
    return "?";
}

inline double metric_value(const ValidationScores& s, Metric m) {
    switch (m) {
        case Metric::silhouette: return s.silhouette;
        case Metric::calinski_harabasz: return s.calinski_harabasz;
        case Metric::davies_bouldin: return s.davies_bouldin;
    }
    return 0.0;
}

/// |r - s|, with equal values (including equal infinities) giving 0.
inline double absolute_deviation(double r, double s) { return r == s ? 0.0 : std::abs(r - s); }

inline double relative_deviation(double r, double s) {
    return absolute_deviation(r, s) / std::max(std::abs(r), kRelativeDivisorFloor);
}

struct Comparison {
    std::string algorithm;
    ValidationScores real;
    ValidationScores synthetic;
    std::array<double, 3> absolute{};
    std::array<double, 3> relative{};
    std::optional<bool> preserved;
};

struct Provenance {
    std::uint64_t root_seed = 0;
    std::map<std::string, std::uint64_t> seeds;
    std::string config_hash;
    std::string metric_space = "full";
    std::size_t real_rows = 0;
    std::map<std::string, std::size_t> real_noise_rows;
    std::map<std::string, std::size_t> synthetic_noise_rows;
    std::map<std::string, std::size_t> synthetic_rows;
};

struct SimilarityReport {
    std::vector<Comparison> algorithms;  // sorted by name
    std::optional<double> threshold;
    Provenance provenance;
    std::map<std::string, ordered_json> details;  // per-algorithm selection audit

    const Comparison& at(const std::string& name) const {
        for (const auto& c : algorithms)
            if (c.algorithm == name) return c;
        throw Error(ErrorKind::contract, "report has no algorithm '" + name + "'");
    }

    /// Algorithm with the largest relative deviation on `m`.
    std::string largest_deviation(Metric m) const {
        require(!algorithms.empty(), ErrorKind::contract, "empty report");
        const auto i = static_cast<std::size_t>(m);
        const auto it = std::max_element(algorithms.begin(), algorithms.end(), [&](const auto& a, const auto& b) {
            return a.relative[i] < b.relative[i];
        });
        return it->algorithm;
    }
};

using ScoreTable = std::map<std::string, ValidationScores>;

inline SimilarityReport assess_similarity(const ScoreTable& real, const ScoreTable& synthetic,
                                          std::optional<double> threshold = std::nullopt) {
    require(real.size() == synthetic.size() &&
                std::equal(real.begin(), real.end(), synthetic.begin(),
                           [](const auto& a, const auto& b) { return a.first == b.first; }),
            ErrorKind::contract, "real and synthetic score tables cover different algorithms");
    SimilarityReport rep;
    rep.threshold = threshold;
    for (const auto& [name, r] : real) {
        const auto& s = synthetic.at(name);
        Comparison c{name, r, s, {}, {}, std::nullopt};
        bool ok = true;
        for (auto m : kAllMetrics) {
            const auto i = static_cast<std::size_t>(m);
            c.absolute[i] = absolute_deviation(metric_value(r, m), metric_value(s, m));
            c.relative[i] = relative_deviation(metric_value(r, m), metric_value(s, m));
            if (threshold) ok = ok && c.relative[i] <= *threshold;
        }
        if (threshold) c.preserved = ok;
        rep.algorithms.push_back(std::move(c));
    }
    return rep;
}

inline ordered_json payload_json(const SimilarityReport& rep) {
    ordered_json p;
    p["format"] = "anonymixer-report-1";
    p["threshold"] = rep.threshold ? ordered_json(*rep.threshold) : ordered_json(nullptr);
    auto& algs = p["algorithms"] = ordered_json::object();
    for (const auto& c : rep.algorithms) {
        ordered_json a;
        a["real"] = to_json(c.real);
        a["synthetic"] = to_json(c.synthetic);
        ordered_json abs, rel;
        for (auto m : kAllMetrics) {
            abs[to_string(m)] = json_real(c.absolute[static_cast<std::size_t>(m)]);
            rel[to_string(m)] = json_real(c.relative[static_cast<std::size_t>(m)]);
        }
        a["deviations"] = {{"absolute", abs}, {"relative", rel}};
        if (c.preserved) a["preserved"] = *c.preserved;
        if (auto it = rep.details.find(c.algorithm); it != rep.details.end()) a["details"] = it->second;
        algs[c.algorithm] = std::move(a);
    }
    const auto& pv = rep.provenance;
    ordered_json prov;
    prov["root_seed"] = pv.root_seed;
    prov["seeds"] = pv.seeds;
    prov["config_hash"] = pv.config_hash;
    prov["metric_space"] = pv.metric_space;
    prov["real_rows"] = pv.real_rows;
    prov["real_noise_rows"] = pv.real_noise_rows;
    prov["synthetic_rows"] = pv.synthetic_rows;
    prov["synthetic_noise_rows"] = pv.synthetic_noise_rows;
    p["provenance"] = std::move(prov);
    return p;
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// `{"generated_at": ..., "payload": {...}}`; only the timestamp varies
/// between identical runs.
inline ordered_json to_json(const SimilarityReport& rep, const std::string& generated_at = utc_timestamp()) {
    ordered_json j;
    j["generated_at"] = generated_at;
    j["payload"] = payload_json(rep);
    return j;
}

inline SimilarityReport report_from_json(const ordered_json& j) {
    const auto& p = j.at("payload");
    SimilarityReport rep;
    if (!p.at("threshold").is_null()) rep.threshold = p.at("threshold").get<double>();
    for (const auto& [name, a] : p.at("algorithms").items()) {
        Comparison c{name, scores_from_json(a.at("real")), scores_from_json(a.at("synthetic")), {}, {}, std::nullopt};
        for (auto m : kAllMetrics) {
            const auto i = static_cast<std::size_t>(m);
            c.absolute[i] = real_from_json(a.at("deviations").at("absolute").at(to_string(m)));
            c.relative[i] = real_from_json(a.at("deviations").at("relative").at(to_string(m)));
        }
        if (a.contains("preserved")) c.preserved = a.at("preserved").get<bool>();
        if (a.contains("details")) rep.details[name] = a.at("details");
        rep.algorithms.push_back(std::move(c));
    }
    const auto& pv = p.at("provenance");
    rep.provenance.root_seed = pv.at("root_seed").get<std::uint64_t>();
    rep.provenance.seeds = pv.at("seeds").get<std::map<std::string, std::uint64_t>>();
    rep.provenance.config_hash = pv.at("config_hash").get<std::string>();
    rep.provenance.metric_space = pv.at("metric_space").get<std::string>();
    rep.provenance.real_rows = pv.at("real_rows").get<std::size_t>();
    rep.provenance.real_noise_rows = pv.at("real_noise_rows").get<std::map<std::string, std::size_t>>();
    rep.provenance.synthetic_rows = pv.at("synthetic_rows").get<std::map<std::string, std::size_t>>();
    rep.provenance.synthetic_noise_rows = pv.at("synthetic_noise_rows").get<std::map<std::string, std::size_t>>();
    return rep;
}

/// Plain-text table of real vs synthetic scores.
inline std::string format_report_table(const SimilarityReport& rep) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-14s %-9s %12s %14s %12s\n", "algorithm", "data", "silhouette",
                  "calinski_h", "davies_b");
    out << line;
    auto row = [&](const std::string& alg, const char* which, const ValidationScores& s) {
        std::snprintf(line, sizeof line, "%-14s %-9s %12.4f %14.2f %12.4f\n", alg.c_str(), which, s.silhouette,
                      s.calinski_harabasz, s.davies_bouldin);
        out << line;
    };
    for (const auto& c : rep.algorithms) {
        row(c.algorithm, "real", c.real);
        row(c.algorithm, "synthetic", c.synthetic);
        std::snprintf(line, sizeof line, "%-14s %-9s %12.4f %14.4f %12.4f%s\n", "", "rel.dev", c.relative[0],
                      c.relative[1], c.relative[2],
                      c.preserved ? (*c.preserved ? "  preserved" : "  not preserved") : "");
        out << line;
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

using LogFn = std::function<void(const std::string&)>;

/// Loads, strips quasi-identifiers and min-max normalizes the input table.
struct Prepared {
    Dataset raw;
    Dataset normalized;
    NormalizationParams params;
};

inline Prepared prepare_input(const RunConfig& cfg) {
    require(!cfg.input_path.empty(), ErrorKind::usage, "no input file configured ([data] input)");
    auto raw = strip_quasi_identifiers(load_csv(cfg.input_path, cfg.schema));
    auto [normalized, params] = minmax_normalize(raw);
    return {std::move(raw), std::move(normalized), std::move(params)};
}

/// Tracks files written so a failed run can remove them.
class ArtifactSet {
public:
    explicit ArtifactSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

    std::ofstream open(const std::string& name) {
        const auto p = dir_ / name;
        std::ofstream out(p);
        require(out.good(), ErrorKind::io, "cannot write '" + p.string() + "'");
        written_.push_back(p);
        out.precision(17);
        return out;
    }

    void remove_all() noexcept {
        std::error_code ec;
        for (const auto& p : written_) std::filesystem::remove(p, ec);
        written_.clear();
    }

    const std::vector<std::filesystem::path>& files() const noexcept { return written_; }

private:
    std::filesystem::path dir_;
    std::vector<std::filesystem::path> written_;
};

inline void write_scatter_artifacts(ArtifactSet& files, const std::string& stem, const Matrix& x,
                                    const std::vector<int>& labels, std::size_t components,
                                    const std::string& title) {
    const std::size_t p = std::min({components, x.rows(), x.cols()});
    Matrix scores = x.rows() >= 2 ? pca_transform(pca_fit(x, p), x) : Matrix(x.rows(), p, 0.0);
    {
        auto out = files.open(stem + ".csv");
        for (std::size_t c = 0; c < p; ++c) out << "pc" << c + 1 << ',';
        out << "label\n";
        for (std::size_t i = 0; i < scores.rows(); ++i) {
            for (std::size_t c = 0; c < p; ++c) out << detail::format_real(scores(i, c)) << ',';
            out << labels[i] << '\n';
        }
    }
    auto out = files.open(stem + ".svg");
    svg::scatter(out, scores, labels, title);
}

inline void write_loss_artifacts(ArtifactSet& files, const std::string& stem, const TrainingLog& log,
                                 const std::string& title) {
    {
        auto out = files.open(stem + ".csv");
        write_training_log_csv(out, log);
    }
    svg::Series g{"generator", {}}, d{"discriminator", {}};
    for (const auto& s : log.steps) {
        g.values.push_back(s.gen_loss);
        d.values.push_back(s.disc_loss);
    }
    auto out = files.open(stem + ".svg");
    svg::line_chart(out, {g, d}, title);
}

/// Runs a stage, prefixing any error with the stage name.
template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error& e) {
        throw with_context(e, name);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse, name + ": " + e.what());
    }
}

/// The full flow. Writes report.json plus per-algorithm synthetic CSVs, PCA
/// scatters and loss curves into `out_dir`. On failure every file written so
/// far is removed and the error names the failing stage.
inline SimilarityReport run_pipeline(const RunConfig& cfg, const std::filesystem::path& out_dir,
                                     const LogFn& log = {}) {
    auto info = [&](const std::string& msg) {
        if (log) log(msg);
    };
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    ArtifactSet files(out_dir);
    try {
        const auto input = stage("ingest", [&] { return prepare_input(cfg); });
        const Matrix& x = input.normalized.values();
        info("ingest: " + std::to_string(x.rows()) + " rows, " + std::to_string(x.cols()) + " columns");

        const auto real = stage("cluster", [&] { return run_clustering_suite(input.normalized, cfg); });

        SimilarityReport rep;
        ScoreTable real_table, synth_table;
        auto& pv = rep.provenance;
        pv.root_seed = cfg.seed;
        for (const auto& s : cfg.seed_stages()) pv.seeds[s] = cfg.seed_for(s);
        pv.config_hash = cfg.config_hash;
        pv.metric_space = to_string(cfg.metric_space);
        pv.real_rows = x.rows();

        for (const auto& [alg, result] : real) {
            const auto name = to_string(alg);
            info("cluster: " + name + " -> " + std::to_string(result.assignment.n_clusters) +
                 " clusters, silhouette " + detail::format_real(result.scores.silhouette));
            real_table[name] = result.scores;
            pv.real_noise_rows[name] = result.assignment.noise_count();

            auto anon = stage("train", [&] { return anonymize(input.normalized, result.assignment, cfg, alg); });
            info("train: " + name + " " + std::to_string(anon.log.steps.size()) + " steps");

            const auto resynth = stage("evaluate", [&] {
                try {
                    return run_algorithm(alg, anon.synthetic.values(), cfg);
                } catch (const Error& e) {
                    throw with_context(e, name + " on synthetic data");
                }
            });
            synth_table[name] = resynth.scores;
            pv.synthetic_rows[name] = anon.synthetic.rows();
            pv.synthetic_noise_rows[name] = resynth.assignment.noise_count();

            stage("synthesize", [&] {
                std::map<int, std::size_t> counts;
                for (int l : *anon.synthetic.labels()) ++counts[l];
                ordered_json conditioned = ordered_json::object();
                for (const auto& [l, c] : counts) conditioned[std::to_string(l)] = c;
                rep.details[name] = {{"real_selection", result.selection},
                                     {"synthetic_selection", resynth.selection},
                                     {"training_steps", anon.log.steps.size()},
                                     {"dropped_noise_rows", anon.log.dropped_noise_rows},
                                     {"conditioned_label_counts", conditioned}};
                {
                    auto out = files.open("synthetic_" + name + ".csv");
                    write_csv(out, inverse_normalize(anon.synthetic, input.params));
                }
                write_scatter_artifacts(files, "pca_real_" + name, x, result.assignment.labels, cfg.pca_components,
                                        name + " clusters, real data");
                write_scatter_artifacts(files, "pca_synth_" + name, anon.synthetic.values(),
                                        resynth.assignment.labels, cfg.pca_components,
                                        name + " clusters, synthetic data");
                write_loss_artifacts(files, "loss_" + name, anon.log, name + "-conditioned CTGAN losses");
            });
        }

        auto assessed = stage("report", [&] { return assess_similarity(real_table, synth_table, cfg.threshold); });
        assessed.provenance = std::move(pv);
        assessed.details = std::move(rep.details);
        stage("report", [&] {
            auto out = files.open("report.json");
            out << to_json(assessed).dump(2) << '\n';
        });
        info("report: " + (out_dir / "report.json").string());
        return assessed;
    } catch (...) {
        files.remove_all();
        throw;
    }
}

}  // namespace anonymixer
