#pragma once

// Command-line front end. Subcommands map onto pipeline stages; flags are
// written over the config file's values before the run config is built.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "anonymixer/config.hpp"
#include "anonymixer/pipeline.hpp"

namespace anonymixer {

enum class LogLevel { quiet, info, debug };

/// Diagnostics go to stderr and respect ANONYMIXER_LOG; results go to stdout.
class Logger {
public:
    explicit Logger(LogLevel level) : level_(level) {}

    static Logger from_env() {
        const char* v = std::getenv("ANONYMIXER_LOG");
        if (!v || std::string_view(v).empty() || std::string_view(v) == "info") return Logger(LogLevel::info);
        if (std::string_view(v) == "quiet") return Logger(LogLevel::quiet);
        if (std::string_view(v) == "debug") return Logger(LogLevel::debug);
        throw Error(ErrorKind::usage, "ANONYMIXER_LOG must be quiet, info or debug (got '" + std::string(v) + "')");
    }

    void info(const std::string& msg) const {
        if (level_ >= LogLevel::info) std::cerr << "[info] " << msg << '\n';
    }
    void debug(const std::string& msg) const {
        if (level_ >= LogLevel::debug) std::cerr << "[debug] " << msg << '\n';
    }
    LogLevel level() const noexcept { return level_; }

private:
    LogLevel level_;
};

namespace cli_detail {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::vector<std::string> algorithms;
    std::optional<std::size_t> k_min, k_max, states, epochs, batch;
    std::string eps_grid, minpts_grid, metric_space;
    std::optional<double> threshold;
    // gen-toy
    std::size_t rows = 400, clusters = 2, dims = 15;
    double separation = 10.0;
    // synthesize
    std::optional<std::size_t> synth_rows;
};

template <typename T>
std::string text(const T& v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

inline Config merged_config(const Options& o) {
    require(!o.config_path.empty(), ErrorKind::usage, "--config is required");
    Config c = Config::load(o.config_path);
    if (o.seed) c.set("pipeline", "seed", text(*o.seed));
    if (!o.algorithms.empty()) {
        std::string joined;
        for (const auto& a : o.algorithms) joined += (joined.empty() ? "" : ",") + a;
        c.set("pipeline", "algorithms", joined);
    }
    if (o.k_min) c.set("cluster", "k_min", text(*o.k_min));
    if (o.k_max) c.set("cluster", "k_max", text(*o.k_max));
    if (!o.eps_grid.empty()) c.set("cluster", "eps_grid", o.eps_grid);
    if (!o.minpts_grid.empty()) c.set("cluster", "minpts_grid", o.minpts_grid);
    if (o.states) c.set("ghmm", "states", text(*o.states));
    if (o.epochs) c.set("ctgan", "epochs", text(*o.epochs));
    if (o.batch) c.set("ctgan", "batch", text(*o.batch));
    if (!o.metric_space.empty()) c.set("pipeline", "metric_space", o.metric_space);
    if (o.threshold) c.set("pipeline", "threshold", text(*o.threshold));
    return c;
}

inline Algorithm single_algorithm(const RunConfig& cfg, const Options& o) {
    require(o.algorithms.size() <= 1, ErrorKind::usage, "this subcommand takes a single --algorithm");
    return o.algorithms.empty() ? cfg.algorithms.front() : parse_algorithm(o.algorithms.front());
}

inline std::filesystem::path out_dir(const Options& o) {
    std::filesystem::path p(o.out);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    require(!ec && std::filesystem::is_directory(p), ErrorKind::io, "cannot create output directory '" + o.out + "'");
    return p;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p);
    require(out.good(), ErrorKind::io, "cannot write '" + p.string() + "'");
    out.precision(17);
    return out;
}

inline Matrix normalize_with(const Matrix& x, const NormalizationParams& params) {
    require(x.cols() == params.min.size(), ErrorKind::shape, "column count does not match normalization");
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j)
            out(i, j) = params.is_constant(j) ? 0.0 : (x(i, j) - params.min[j]) / (params.max[j] - params.min[j]);
    return out;
}

inline void print_selection(std::ostream& out, Algorithm alg, const AlgorithmResult& r) {
    const auto& s = r.selection;
    out << to_string(alg) << ": " << r.assignment.n_clusters << " clusters";
    if (s.contains("k") && alg == Algorithm::kmeans) out << " (selected k=" << s["k"] << ")";
    if (alg == Algorithm::dbscan)
        out << " (eps=" << s["eps"] << ", min_pts=" << s["min_pts"] << ", noise=" << s["noise_rows"] << ")";
    out << "  silhouette=" << detail::format_real(r.scores.silhouette)
        << " calinski_harabasz=" << detail::format_real(r.scores.calinski_harabasz)
        << " davies_bouldin=" << detail::format_real(r.scores.davies_bouldin) << '\n';
    if (alg == Algorithm::kmeans && s.contains("sweep")) {
        out << "    k  silhouette\n";
        for (const auto& e : s["sweep"]) {
            char line[64];
            std::snprintf(line, sizeof line, "  %3zu  %.6f\n", e["k"].get<std::size_t>(),
                          real_from_json(e["silhouette"]));
            out << line;
        }
    }
}

/// DBSCAN eps candidates for a generated table: high percentiles of the
/// 10-NN distance after the same min-max scaling the pipeline applies,
/// rounded up to three decimals.
inline std::vector<double> toy_eps_grid(const Dataset& raw) {
    auto grid = kdistance_eps_grid(minmax_normalize(raw).first.values(), 10, {0.95, 0.98, 0.99});
    for (auto& e : grid) e = std::ceil(e * 1000.0) / 1000.0;
    return grid;
}

inline void write_labels(const std::filesystem::path& p, const std::vector<int>& labels) {
    auto out = open_out(p);
    out << "row,label\n";
    for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline int cmd_gen_toy(const Options& o, const Logger& log) {
    const auto dir = out_dir(o);
    const std::uint64_t seed = o.seed.value_or(7);
    auto [data, truth] = generate_toy_telemetry(seed, o.rows, o.clusters, o.dims, o.separation);
    {
        auto out = open_out(dir / "toy.csv");
        out << "device_id";
        for (const auto& name : data.continuous_names()) out << ',' << name;
        out << '\n';
        for (std::size_t i = 0; i < data.rows(); ++i) {
            char id[24];
            std::snprintf(id, sizeof id, "ap-%05zu", i);
            out << id;
            for (double v : data.values().row(i)) out << ',' << detail::format_real(v);
            out << '\n';
        }
    }
    write_labels(dir / "toy_truth.csv", truth.labels);
    {
        std::string eps_list;
        for (double e : toy_eps_grid(data)) eps_list += (eps_list.empty() ? "" : ", ") + detail::format_real(e);
        auto out = open_out(dir / "toy.conf");
        out << "# generated by anonymixer gen-toy --seed " << seed << "\n\n"
            << "[data]\ninput = toy.csv\n\n[schema]\ndevice_id = quasi_identifier\n";
        for (const auto& name : data.continuous_names()) out << name << " = continuous\n";
        out << "\n[pipeline]\nalgorithms = kmeans, dbscan, ghmm, agglomerative\nseed = 42\nmetric_space = full\n"
            << "\n[cluster]\nk_min = 2\nk_max = 10\neps_grid = " << eps_list << "\nminpts_grid = 5, 10\n"
            << "agglomerative_k = " << o.clusters << "\n\n[ghmm]\nstates = " << o.clusters << "\n\n"
            << "[ctgan]\nepochs = 300\nbatch = 64\ndiscriminator_steps = 5\n\n[pca]\ncomponents = 2\n";
    }
    log.info("gen-toy: wrote toy.csv, toy_truth.csv and toy.conf to " + dir.string());
    std::cout << "toy dataset: " << data.rows() << " rows, " << data.values().cols() << " columns, " << o.clusters
              << " clusters -> " << (dir / "toy.csv").string() << '\n';
    return 0;
}

inline int cmd_ingest(const Options& o, const Logger& log) {
    const auto cfg = run_config_from(merged_config(o));
    const auto dir = out_dir(o);
    const auto in = prepare_input(cfg);
    {
        auto out = open_out(dir / "normalized.csv");
        write_csv(out, in.normalized);
    }
    ordered_json j;
    j["columns"] = in.normalized.continuous_names();
    j["min"] = in.params.min;
    j["max"] = in.params.max;
    open_out(dir / "normalization.json") << j.dump(2) << '\n';
    log.info("ingest: wrote normalized.csv and normalization.json");
    std::cout << "ingested " << in.raw.rows() << " rows; kept " << in.normalized.values().cols()
              << " continuous columns; config hash " << cfg.config_hash << '\n';
    return 0;
}

inline int cmd_cluster(const Options& o, const Logger& log) {
    const auto cfg = run_config_from(merged_config(o));
    const auto in = prepare_input(cfg);
    const auto suite = run_clustering_suite(in.normalized, cfg);
    const auto dir = out_dir(o);
    for (const auto& [alg, r] : suite) {
        print_selection(std::cout, alg, r);
        write_labels(dir / ("labels_" + to_string(alg) + ".csv"), r.assignment.labels);
        log.debug(to_string(alg) + " selection: " + r.selection.dump());
    }
    std::cout << "config hash " << cfg.config_hash << '\n';
    return 0;
}

inline int cmd_train(const Options& o, const Logger& log) {
    const auto cfg = run_config_from(merged_config(o));
    const auto alg = single_algorithm(cfg, o);
    const auto in = prepare_input(cfg);
    const auto real = stage("cluster", [&] { return run_algorithm(alg, in.normalized.values(), cfg); });
    log.info("train: conditioning on " + to_string(alg) + " labels (" + std::to_string(real.assignment.n_clusters) +
             " clusters)");
    auto [model, tlog] = stage("train", [&] {
        return ctgan_train(in.normalized, real.assignment, cfg.ctgan, cfg.seed_for("ctgan.train." + to_string(alg)));
    });
    const auto dir = out_dir(o);
    const auto name = to_string(alg);
    open_out(dir / ("model_" + name + ".json")) << to_json(model).dump() << '\n';
    ArtifactSet files(dir);
    write_loss_artifacts(files, "loss_" + name, tlog, name + "-conditioned CTGAN losses");
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(checkpoint_hash(model)));
    std::cout << "trained " << tlog.steps.size() << " steps; final gen_loss "
              << detail::format_real(tlog.steps.back().gen_loss) << ", disc_loss "
              << detail::format_real(tlog.steps.back().disc_loss) << "; checkpoint " << hash << '\n';
    return 0;
}

inline int cmd_synthesize(const Options& o, const Logger& log) {
    const auto cfg = run_config_from(merged_config(o));
    const auto alg = single_algorithm(cfg, o);
    const auto dir = out_dir(o);
    const auto model_path = dir / ("model_" + to_string(alg) + ".json");
    std::ifstream in(model_path);
    require(in.good(), ErrorKind::io, "cannot open '" + model_path.string() + "' (run `train` first)");
    const auto model = stage("synthesize", [&] { return ctgan_from_json(ordered_json::parse(in)); });
    const auto input = prepare_input(cfg);
    const std::size_t n = o.synth_rows.value_or(cfg.synthetic_rows.value_or(input.normalized.rows()));
    const auto synthetic = ctgan_sample(model, n, std::nullopt, cfg.seed_for("ctgan.sample." + to_string(alg)));
    auto out = open_out(dir / ("synthetic_" + to_string(alg) + ".csv"));
    write_csv(out, inverse_normalize(synthetic, input.params));
    log.info("synthesize: wrote synthetic_" + to_string(alg) + ".csv");
    std::cout << "synthesized " << n << " rows\n";
    return 0;
}

inline int cmd_evaluate(const Options& o, const Logger& log) {
    const auto cfg = run_config_from(merged_config(o));
    const auto dir = out_dir(o);
    const auto input = prepare_input(cfg);
    ScoreTable real, synth;
    for (auto alg : cfg.algorithms) {
        const auto name = to_string(alg);
        const auto path = dir / ("synthetic_" + name + ".csv");
        if (!std::filesystem::exists(path)) {
            log.info("evaluate: skipping " + name + " (no " + path.filename().string() + ")");
            continue;
        }
        Schema schema;
        for (const auto& c : input.normalized.continuous_names()) schema.push_back({c, ColumnKind::continuous});
        schema.push_back({input.normalized.label_name().value_or("label"), ColumnKind::discrete_label});
        const auto data = load_csv(path.string(), schema);
        const Matrix x = normalize_with(data.values(), input.params);
        real[name] = run_algorithm(alg, input.normalized.values(), cfg).scores;
        synth[name] = stage("evaluate", [&] { return run_algorithm(alg, x, cfg).scores; });
    }
    require(!real.empty(), ErrorKind::empty_input, "no synthetic_<algorithm>.csv files found in " + dir.string());
    auto rep = assess_similarity(real, synth, cfg.threshold);
    rep.provenance.root_seed = cfg.seed;
    for (const auto& s : cfg.seed_stages()) rep.provenance.seeds[s] = cfg.seed_for(s);
    rep.provenance.config_hash = cfg.config_hash;
    rep.provenance.metric_space = to_string(cfg.metric_space);
    rep.provenance.real_rows = input.normalized.rows();
    open_out(dir / "evaluation.json") << to_json(rep).dump(2) << '\n';
    std::cout << format_report_table(rep) << "config hash " << cfg.config_hash << '\n';
    return 0;
}

inline int cmd_report(const Options& o, const Logger&) {
    const auto path = std::filesystem::path(o.out) / "report.json";
    std::ifstream in(path);
    require(in.good(), ErrorKind::io, "cannot open '" + path.string() + "' (run `run-all` first)");
    const auto j = stage("report", [&] { return ordered_json::parse(in); });
    const auto rep = stage("report", [&] { return report_from_json(j); });
    std::cout << "generated at " << j.value("generated_at", std::string("?")) << '\n'
              << format_report_table(rep) << "config hash " << rep.provenance.config_hash << '\n';
    return 0;
}

inline int cmd_run_all(const Options& o, const Logger& log) {
    const auto cfg = run_config_from(merged_config(o));
    const auto dir = out_dir(o);
    log.info("run-all: config hash " + cfg.config_hash + ", seed " + std::to_string(cfg.seed));
    const auto rep = run_pipeline(cfg, dir, [&](const std::string& m) { log.info(m); });
    std::cout << format_report_table(rep) << "config hash " << cfg.config_hash << '\n'
              << "artifacts in " << dir.string() << '\n';
    return 0;
}

}  // namespace cli_detail

/// Parses argv, runs one subcommand and maps failures onto exit codes:
/// 0 ok, 1 usage, 2 data or contract, 3 numeric.
inline int parse_and_dispatch(int argc, char** argv) {
    using namespace cli_detail;
    CLI::App app{"anonymixer: cluster-conditioned synthetic data for tabular telemetry"};
    app.require_subcommand(1);
    Options o;
    int (*handler)(const Options&, const Logger&) = nullptr;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", o.config_path, "INI config file");
        if (needs_config) c->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "root seed; stage seeds are derived from it");
        sub->add_option("--out", o.out, "output directory")->capture_default_str();
    };
    auto add_cluster_flags = [&](CLI::App* sub) {
        sub->add_option("--algorithm", o.algorithms, "kmeans, dbscan, ghmm or agglomerative (repeatable)")
            ->delimiter(',');
        sub->add_option("--k-min", o.k_min, "smallest k in the K-means sweep");
        sub->add_option("--k-max", o.k_max, "largest k in the K-means sweep");
        sub->add_option("--eps-grid", o.eps_grid, "comma-separated DBSCAN eps values");
        sub->add_option("--minpts-grid", o.minpts_grid, "comma-separated DBSCAN min_pts values");
        sub->add_option("--states", o.states, "GHMM hidden states");
        sub->add_option("--metric-space", o.metric_space, "score on the full space or PCA components")
            ->check(CLI::IsMember({"full", "pca"}));
    };
    auto add_train_flags = [&](CLI::App* sub) {
        sub->add_option("--epochs", o.epochs, "CTGAN training epochs");
        sub->add_option("--batch", o.batch, "CTGAN batch size");
    };
    auto bind = [&](CLI::App* sub, int (*fn)(const Options&, const Logger&)) {
        sub->callback([&handler, fn] { handler = fn; });
    };

    auto* ingest = app.add_subcommand("ingest", "load, strip quasi-identifiers and normalize the input table");
    add_common(ingest, false);
    bind(ingest, cmd_ingest);

    auto* cluster = app.add_subcommand("cluster", "run the clustering suite and print selections and scores");
    add_common(cluster, false);
    add_cluster_flags(cluster);
    bind(cluster, cmd_cluster);

    auto* train = app.add_subcommand("train", "train a CTGAN conditioned on one algorithm's labels");
    add_common(train, false);
    add_cluster_flags(train);
    add_train_flags(train);
    bind(train, cmd_train);

    auto* synth = app.add_subcommand("synthesize", "sample synthetic rows from a trained model");
    add_common(synth, false);
    synth->add_option("--algorithm", o.algorithms, "which model_<algorithm>.json to sample from");
    synth->add_option("--rows", o.synth_rows, "number of rows (default: real row count)");
    bind(synth, cmd_synthesize);

    auto* evaluate = app.add_subcommand("evaluate", "score real and synthetic data and compare");
    add_common(evaluate, false);
    add_cluster_flags(evaluate);
    evaluate->add_option("--threshold", o.threshold, "relative deviation at which structure counts as preserved");
    bind(evaluate, cmd_evaluate);

    auto* report = app.add_subcommand("report", "print the score table of an existing report.json");
    report->add_option("--out", o.out, "directory holding report.json")->capture_default_str();
    bind(report, cmd_report);

    auto* run_all = app.add_subcommand("run-all", "full pipeline: cluster, synthesize, re-cluster, compare");
    add_common(run_all, false);
    add_cluster_flags(run_all);
    add_train_flags(run_all);
    run_all->add_option("--threshold", o.threshold, "relative deviation at which structure counts as preserved");
    bind(run_all, cmd_run_all);

    auto* toy = app.add_subcommand("gen-toy", "write a seeded Gaussian-blob dataset with a matching config");
    toy->add_option("--seed", o.seed, "generator seed (default 7)");
    toy->add_option("--out", o.out, "output directory")->capture_default_str();
    toy->add_option("--rows", o.rows, "row count")->capture_default_str();
    toy->add_option("--clusters", o.clusters, "number of blobs")->capture_default_str();
    toy->add_option("--dims", o.dims, "continuous columns")->capture_default_str();
    toy->add_option("--sep", o.separation, "distance between the closest blob centres")->capture_default_str();
    bind(toy, cmd_gen_toy);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_code_for(ErrorKind::usage);
    }

    std::string which = "anonymixer";
    for (const auto* sub : app.get_subcommands()) which = sub->get_name();
    try {
        const Logger log = Logger::from_env();
        return handler(o, log);
    } catch (const Error& e) {
        std::cerr << "error [" << which << "] " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error [" << which << "] (io): " << e.what() << '\n';
        return exit_code_for(ErrorKind::io);
    } catch (const std::exception& e) {
        std::cerr << "error [" << which << "]: " << e.what() << '\n';
        return exit_code_for(ErrorKind::contract);
    }
}

}  // namespace anonymixer
