#pragma once

// Tabular dataset handling: schema-checked CSV ingestion, quasi-identifier
// removal, min-max normalization and a seeded Gaussian-blob generator.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "anonymixer/assignment.hpp"
#include "anonymixer/error.hpp"
#include "anonymixer/matrix.hpp"
#include "anonymixer/random.hpp"

namespace anonymixer {

enum class ColumnKind { continuous, quasi_identifier, discrete_label };

inline std::string_view to_string(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::continuous: return "continuous";
        case ColumnKind::quasi_identifier: return "quasi_identifier";
        case ColumnKind::discrete_label: return "discrete_label";
    }
    return "?";
}

inline ColumnKind parse_column_kind(std::string_view text) {
    if (text == "continuous" || text == "cont") return ColumnKind::continuous;
    if (text == "quasi_identifier" || text == "qid") return ColumnKind::quasi_identifier;
    if (text == "discrete_label" || text == "label") return ColumnKind::discrete_label;
    throw Error(ErrorKind::schema, "unknown column kind '" + std::string(text) + "'");
}

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;

    bool operator==(const ColumnSpec&) const = default;
};

using Schema = std::vector<ColumnSpec>;

inline void validate_schema(const Schema& schema) {
    std::set<std::string> names;
    int label_columns = 0;
    for (const auto& col : schema) {
        require(!col.name.empty(), ErrorKind::schema, "empty column name");
        require(names.insert(col.name).second, ErrorKind::schema, "duplicate column '" + col.name + "'");
        if (col.kind == ColumnKind::discrete_label) ++label_columns;
    }
    require(label_columns <= 1, ErrorKind::schema, "more than one discrete_label column");
}

inline std::size_t count_kind(const Schema& schema, ColumnKind kind) {
    return static_cast<std::size_t>(
        std::count_if(schema.begin(), schema.end(), [kind](const ColumnSpec& c) { return c.kind == kind; }));
}

/// Immutable table. Continuous columns live in a dense matrix (in schema
/// order), quasi-identifier cells are kept verbatim as text, and the optional
/// discrete_label column is a vector of integers. Row index is time order.
class Dataset {
public:
    Dataset() = default;

    Dataset(Schema schema, Matrix values, std::vector<std::vector<std::string>> qid_cells = {},
            std::optional<std::vector<int>> labels = std::nullopt)
        : schema_(std::move(schema)), values_(std::move(values)), qid_cells_(std::move(qid_cells)),
          labels_(std::move(labels)) {
        validate_schema(schema_);
        const std::size_t n_cont = count_kind(schema_, ColumnKind::continuous);
        const std::size_t n_qid = count_kind(schema_, ColumnKind::quasi_identifier);
        const bool has_label = count_kind(schema_, ColumnKind::discrete_label) == 1;
        require(values_.cols() == n_cont, ErrorKind::shape,
                "value matrix has " + std::to_string(values_.cols()) + " columns, schema declares " +
                    std::to_string(n_cont) + " continuous columns");
        require(qid_cells_.size() == n_qid, ErrorKind::shape, "quasi-identifier column count mismatch");
        for (const auto& col : qid_cells_)
            require(col.size() == values_.rows(), ErrorKind::shape, "quasi-identifier column length mismatch");
        require(labels_.has_value() == has_label, ErrorKind::shape,
                "label vector presence does not match schema");
        if (labels_) {
            require(labels_->size() == values_.rows(), ErrorKind::shape, "label column length mismatch");
            for (int l : *labels_)
                require(l >= kNoiseLabel, ErrorKind::contract, "label " + std::to_string(l) + " is invalid");
        }
        require(all_finite(values_.data()), ErrorKind::numeric, "non-finite value in continuous column");
    }

    /// Dataset of continuous columns only.
    static Dataset from_matrix(Matrix values, const std::vector<std::string>& names,
                               std::optional<std::vector<int>> labels = std::nullopt,
                               const std::string& label_name = "label") {
        Schema schema;
        for (const auto& name : names) schema.push_back({name, ColumnKind::continuous});
        if (labels) schema.push_back({label_name, ColumnKind::discrete_label});
        return Dataset(std::move(schema), std::move(values), {}, std::move(labels));
    }

    const Schema& schema() const noexcept { return schema_; }
    const Matrix& values() const noexcept { return values_; }
    std::size_t rows() const noexcept { return values_.rows(); }
    std::size_t continuous_columns() const noexcept { return values_.cols(); }
    bool has_labels() const noexcept { return labels_.has_value(); }
    const std::optional<std::vector<int>>& labels() const noexcept { return labels_; }
    const std::vector<std::vector<std::string>>& qid_cells() const noexcept { return qid_cells_; }

    std::vector<std::string> continuous_names() const {
        std::vector<std::string> out;
        for (const auto& c : schema_)
            if (c.kind == ColumnKind::continuous) out.push_back(c.name);
        return out;
    }

    std::optional<std::string> label_name() const {
        for (const auto& c : schema_)
            if (c.kind == ColumnKind::discrete_label) return c.name;
        return std::nullopt;
    }

    Dataset with_values(Matrix values) const {
        return Dataset(schema_, std::move(values), qid_cells_, labels_);
    }

    /// Copy with the label column replaced (or added, named `label_name`).
    Dataset with_labels(std::vector<int> labels, const std::string& label_name = "label") const {
        Schema schema = schema_;
        if (!has_labels()) schema.push_back({label_name, ColumnKind::discrete_label});
        return Dataset(std::move(schema), values_, qid_cells_, std::move(labels));
    }

    Dataset select_rows(std::span<const std::size_t> indices) const {
        std::vector<std::vector<std::string>> qids;
        for (const auto& col : qid_cells_) {
            std::vector<std::string> c;
            for (auto i : indices) c.push_back(col[i]);
            qids.push_back(std::move(c));
        }
        std::optional<std::vector<int>> labels;
        if (labels_) {
            labels.emplace();
            for (auto i : indices) labels->push_back((*labels_)[i]);
        }
        return Dataset(schema_, values_.select_rows(indices), std::move(qids), std::move(labels));
    }

private:
    Schema schema_;
    Matrix values_;
    std::vector<std::vector<std::string>> qid_cells_;
    std::optional<std::vector<int>> labels_;
};

struct NormalizationParams {
    std::vector<double> min;
    std::vector<double> max;

    std::size_t size() const noexcept { return min.size(); }
    bool is_constant(std::size_t column) const { return min[column] == max[column]; }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

inline std::optional<double> parse_real(std::string_view cell) {
    if (cell.empty()) return std::nullopt;
    if (cell.front() == '+') cell.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::optional<int> parse_int(std::string_view cell) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
    return v;
}

inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace detail

/// Parses CSV text. `schema` maps column names to kinds; the resulting
/// Dataset keeps the file's column order. Row numbers in errors are 1-based
/// data rows (the header is row 0).
inline Dataset parse_csv(std::istream& in, const Schema& schema) {
    validate_schema(schema);
    std::string line;
    if (!std::getline(in, line) || detail::trim(line).empty())
        throw Error(ErrorKind::empty_input, "input has no header row");

    const auto header = detail::split_csv_line(line);
    Schema ordered;
    for (auto name : header) {
        auto it = std::find_if(schema.begin(), schema.end(), [&](const ColumnSpec& c) { return c.name == name; });
        require(it != schema.end(), ErrorKind::schema, "column '" + std::string(name) + "' is not in the schema");
        ordered.push_back(*it);
    }
    for (const auto& col : schema) {
        const bool present = std::find(header.begin(), header.end(), col.name) != header.end();
        require(present, ErrorKind::schema, "schema column '" + col.name + "' missing from header");
    }
    validate_schema(ordered);

    const std::size_t n_cont = count_kind(ordered, ColumnKind::continuous);
    std::vector<double> values;
    std::vector<std::vector<std::string>> qids(count_kind(ordered, ColumnKind::quasi_identifier));
    std::optional<std::vector<int>> labels;
    if (count_kind(ordered, ColumnKind::discrete_label) == 1) labels.emplace();

    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto cells = detail::split_csv_line(line);
        require(cells.size() == ordered.size(), ErrorKind::parse,
                "row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " cells, expected " +
                    std::to_string(ordered.size()));
        std::size_t q = 0;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto& spec = ordered[c];
            switch (spec.kind) {
                case ColumnKind::continuous: {
                    auto v = detail::parse_real(cells[c]);
                    require(v.has_value(), ErrorKind::parse,
                            "row " + std::to_string(row) + ", column " + std::to_string(c + 1) + " ('" + spec.name +
                                "'): cannot parse '" + std::string(cells[c]) + "' as a finite real");
                    values.push_back(*v);
                    break;
                }
                case ColumnKind::quasi_identifier: qids[q++].emplace_back(cells[c]); break;
                case ColumnKind::discrete_label: {
                    auto v = detail::parse_int(cells[c]);
                    require(v.has_value() && *v >= kNoiseLabel, ErrorKind::parse,
                            "row " + std::to_string(row) + ", column " + std::to_string(c + 1) + " ('" + spec.name +
                                "'): label '" + std::string(cells[c]) + "' is not an integer >= -1");
                    labels->push_back(*v);
                    break;
                }
            }
        }
    }
    require(row > 0, ErrorKind::empty_input, "input has a header but no data rows");
    return Dataset(std::move(ordered), Matrix(row, n_cont, std::move(values)), std::move(qids), std::move(labels));
}

inline Dataset load_csv(const std::string& path, const Schema& schema) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::io, "cannot open '" + path + "'");
    return parse_csv(in, schema);
}

/// Writes CSV with 12 significant digits for continuous cells.
inline void write_csv(std::ostream& out, const Dataset& data) {
    const auto& schema = data.schema();
    for (std::size_t c = 0; c < schema.size(); ++c) out << (c ? "," : "") << schema[c].name;
    out << '\n';
    for (std::size_t r = 0; r < data.rows(); ++r) {
        std::size_t v = 0, q = 0;
        for (std::size_t c = 0; c < schema.size(); ++c) {
            if (c) out << ',';
            switch (schema[c].kind) {
                case ColumnKind::continuous: out << detail::format_real(data.values()(r, v++)); break;
                case ColumnKind::quasi_identifier: out << data.qid_cells()[q++][r]; break;
                case ColumnKind::discrete_label: out << (*data.labels())[r]; break;
            }
        }
        out << '\n';
    }
}

inline void save_csv(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    require(out.good(), ErrorKind::io, "cannot write '" + path + "'");
    write_csv(out, data);
}

inline Dataset strip_quasi_identifiers(const Dataset& data) {
    Schema kept;
    for (const auto& c : data.schema())
        if (c.kind != ColumnKind::quasi_identifier) kept.push_back(c);
    require(count_kind(kept, ColumnKind::continuous) > 0, ErrorKind::empty_result,
            "no continuous columns remain after removing quasi-identifiers");
    return Dataset(std::move(kept), data.values(), {}, data.labels());
}

/// Maps each continuous column onto [0, 1]; constant columns map to 0.
inline std::pair<Dataset, NormalizationParams> minmax_normalize(const Dataset& data) {
    const Matrix& x = data.values();
    NormalizationParams params{std::vector<double>(x.cols(), 0.0), std::vector<double>(x.cols(), 0.0)};
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            lo = std::min(lo, x(i, j));
            hi = std::max(hi, x(i, j));
        }
        if (x.rows() == 0) lo = hi = 0.0;
        params.min[j] = lo;
        params.max[j] = hi;
    }
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j)
            out(i, j) = params.is_constant(j) ? 0.0 : (x(i, j) - params.min[j]) / (params.max[j] - params.min[j]);
    return {data.with_values(std::move(out)), std::move(params)};
}

inline Matrix inverse_normalize(const Matrix& x, const NormalizationParams& params) {
    require(params.size() == x.cols(), ErrorKind::shape,
            "normalization params cover " + std::to_string(params.size()) + " columns, data has " +
                std::to_string(x.cols()));
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j)
            out(i, j) = params.is_constant(j) ? params.min[j]
                                              : x(i, j) * (params.max[j] - params.min[j]) + params.min[j];
    return out;
}

inline Dataset inverse_normalize(const Dataset& data, const NormalizationParams& params) {
    return data.with_values(inverse_normalize(data.values(), params));
}

/// k isotropic unit-variance Gaussian blobs in m dimensions. Centroids are
/// scaled so the closest pair is exactly `separation` apart. Labels are
/// balanced (counts differ by at most one) and shuffled in row order.
inline std::pair<Dataset, ClusterAssignment> generate_toy_telemetry(std::uint64_t seed, std::size_t n,
                                                                    std::size_t k, std::size_t m,
                                                                    double separation) {
    require(k >= 1 && n >= k, ErrorKind::parameter, "toy generator requires n >= k >= 1");
    require(m >= 2, ErrorKind::parameter, "toy generator requires m >= 2");
    require(separation > 0.0 && std::isfinite(separation), ErrorKind::parameter, "separation must be > 0");

    Rng rng(seed);
    Matrix centroids(k, m);
    if (k > 1) {
        double min_dist = 0.0;
        while (!(min_dist > 1e-3)) {
            for (auto& v : centroids.data()) v = 2.0 * rng.uniform() - 1.0;
            min_dist = std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = a + 1; b < k; ++b)
                    min_dist = std::min(min_dist, euclidean_distance(centroids.row(a), centroids.row(b)));
        }
        for (auto& v : centroids.data()) v *= separation / min_dist;
    }

    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % k);
    rng.shuffle(labels);

    Matrix x(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = centroids.row(static_cast<std::size_t>(labels[i]));
        for (std::size_t j = 0; j < m; ++j) x(i, j) = c[j] + rng.normal();
    }

    std::vector<std::string> names;
    for (std::size_t j = 0; j < m; ++j) {
        char buf[24];
        std::snprintf(buf, sizeof buf, "f%02zu", j);
        names.emplace_back(buf);
    }
    ClusterAssignment truth{std::move(labels), static_cast<int>(k), false};
    return {Dataset::from_matrix(std::move(x), names), std::move(truth)};
}

}  // namespace anonymixer
