#include <gtest/gtest.h>

#include <sstream>

#include "anonymixer/cluster.hpp"
#include "anonymixer/dataio.hpp"
#include "oracles.hpp"

using namespace anonymixer;

namespace {

Schema telemetry_schema() {
    return {{"mac", ColumnKind::quasi_identifier}, {"rssi", ColumnKind::continuous}, {"bytes", ColumnKind::continuous}};
}

Dataset parse(const std::string& text, const Schema& schema) {
    std::istringstream in(text);
    return parse_csv(in, schema);
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::usage;
}

}  // namespace

TEST(Csv, ParsesContinuousAndQidColumns) {
    const auto d = parse("mac,rssi,bytes\naa:01,-40.5,1200\naa:02,-71,300\n", telemetry_schema());
    ASSERT_EQ(d.rows(), 2u);
    EXPECT_EQ(d.continuous_names(), (std::vector<std::string>{"rssi", "bytes"}));
    EXPECT_DOUBLE_EQ(d.values()(0, 0), -40.5);
    EXPECT_DOUBLE_EQ(d.values()(1, 1), 300.0);
    EXPECT_EQ(d.qid_cells()[0][1], "aa:02");
}

TEST(Csv, MissingSchemaColumnIsSchemaError) {
    std::string msg;
    try {
        parse("mac,rssi\naa,1\n", telemetry_schema());
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::schema);
        msg = e.what();
    }
    EXPECT_NE(msg.find("bytes"), std::string::npos);
}

TEST(Csv, NonNumericCellNamesRowAndColumn) {
    std::string msg;
    try {
        parse("mac,rssi,bytes\naa,1,2\nbb,x,3\n", telemetry_schema());
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::parse);
        msg = e.what();
    }
    EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("rssi"), std::string::npos) << msg;
}

TEST(Csv, HeaderOnlyIsEmptyInput) {
    EXPECT_EQ(kind_of([] { parse("mac,rssi,bytes\n", telemetry_schema()); }), ErrorKind::empty_input);
    EXPECT_EQ(kind_of([] { parse("", telemetry_schema()); }), ErrorKind::empty_input);
}

TEST(Csv, MissingFileIsIoError) {
    EXPECT_EQ(kind_of([] { load_csv("/nonexistent/file.csv", telemetry_schema()); }), ErrorKind::io);
}

TEST(Csv, WriteThenReadKeepsTwelveSignificantDigits) {
    Rng rng(4);
    Matrix x(30, 3);
    for (auto& v : x.data()) v = rng.normal() * 1e3;
    const auto d = Dataset::from_matrix(x, {"a", "b", "c"});
    std::ostringstream out;
    write_csv(out, d);
    Schema s{{"a", ColumnKind::continuous}, {"b", ColumnKind::continuous}, {"c", ColumnKind::continuous}};
    const auto back = parse(out.str(), s);
    for (std::size_t i = 0; i < x.data().size(); ++i)
        EXPECT_NEAR(back.values().data()[i], x.data()[i], std::abs(x.data()[i]) * 1e-11);
}

TEST(Strip, DropsQuasiIdentifiersOnly) {
    const auto d = parse("mac,rssi,bytes\naa,1,2\nbb,3,4\n", telemetry_schema());
    const auto s = strip_quasi_identifiers(d);
    EXPECT_EQ(s.continuous_names(), (std::vector<std::string>{"rssi", "bytes"}));
    EXPECT_EQ(count_kind(s.schema(), ColumnKind::quasi_identifier), 0u);
    EXPECT_EQ(s.values(), d.values());
}

TEST(Strip, NoQidIsIdentity) {
    const auto d = Dataset::from_matrix(Matrix::from_rows({{1, 2}, {3, 4}}), {"a", "b"});
    const auto s = strip_quasi_identifiers(d);
    EXPECT_EQ(s.values(), d.values());
    EXPECT_EQ(s.schema().size(), d.schema().size());
}

TEST(Strip, AllQidIsEmptyResult) {
    Schema s{{"mac", ColumnKind::quasi_identifier}};
    const auto d = parse("mac\naa\n", s);
    EXPECT_EQ(kind_of([&] { strip_quasi_identifiers(d); }), ErrorKind::empty_result);
}

TEST(Normalize, LinearMapToUnitInterval) {
    const auto d = Dataset::from_matrix(Matrix::from_rows({{2}, {4}, {6}}), {"a"});
    const auto [n, p] = minmax_normalize(d);
    EXPECT_EQ(n.values().column(0), (std::vector<double>{0.0, 0.5, 1.0}));
    const auto back = inverse_normalize(n, p);
    EXPECT_EQ(back.values().column(0), (std::vector<double>{2, 4, 6}));
}

TEST(Normalize, ConstantColumnMapsToZeroAndBack) {
    const auto d = Dataset::from_matrix(Matrix::from_rows({{5}, {5}}), {"a"});
    const auto [n, p] = minmax_normalize(d);
    EXPECT_TRUE(p.is_constant(0));
    EXPECT_EQ(n.values().column(0), (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(inverse_normalize(n, p).values().column(0), (std::vector<double>{5.0, 5.0}));
}

TEST(Normalize, RoundTripAndRangeOnRandomData) {
    Rng rng(11);
    Matrix x(50, 4);
    for (auto& v : x.data()) v = rng.normal() * 7.0 + 3.0;
    const auto [n, p] = minmax_normalize(Dataset::from_matrix(x, {"a", "b", "c", "d"}));
    for (double v : n.values().data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    const auto back = inverse_normalize(n, p);
    for (std::size_t i = 0; i < x.data().size(); ++i) EXPECT_NEAR(back.values().data()[i], x.data()[i], 1e-12);
}

TEST(Normalize, InverseShapeMismatch) {
    const auto [n, p] = minmax_normalize(Dataset::from_matrix(Matrix::from_rows({{1, 2}, {3, 4}}), {"a", "b"}));
    EXPECT_EQ(kind_of([&] { inverse_normalize(Matrix(2, 3), p); }), ErrorKind::shape);
}

TEST(Toy, ShapeAndBalance) {
    const auto [d, truth] = generate_toy_telemetry(1, 200, 2, 15, 10.0);
    EXPECT_EQ(d.rows(), 200u);
    EXPECT_EQ(d.values().cols(), 15u);
    const auto sizes = truth.cluster_sizes();
    for (auto s : sizes) {
        EXPECT_GE(s, 80u);
        EXPECT_LE(s, 120u);
    }
}

TEST(Toy, Deterministic) {
    const auto a = generate_toy_telemetry(5, 100, 3, 4, 8.0);
    const auto b = generate_toy_telemetry(5, 100, 3, 4, 8.0);
    EXPECT_EQ(a.first.values(), b.first.values());
    EXPECT_EQ(a.second.labels, b.second.labels);
}

TEST(Toy, SingleBlobAllZero) {
    const auto [d, truth] = generate_toy_telemetry(2, 40, 1, 3, 1.0);
    for (int l : truth.labels) EXPECT_EQ(l, 0);
}

TEST(Toy, InvalidCounts) {
    EXPECT_EQ(kind_of([] { generate_toy_telemetry(1, 1, 2, 3, 1.0); }), ErrorKind::parameter);
    EXPECT_EQ(kind_of([] { generate_toy_telemetry(1, 10, 2, 1, 1.0); }), ErrorKind::parameter);
    EXPECT_EQ(kind_of([] { generate_toy_telemetry(1, 10, 2, 3, 0.0); }), ErrorKind::parameter);
}

TEST(Toy, SeparatedBlobsAreRecoveredByKMeans) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto [d, truth] = generate_toy_telemetry(seed, 300, 3, 15, 10.0);
        const auto [model, a] = kmeans_fit(d.values(), 3, seed);
        EXPECT_GE(oracle::adjusted_rand(a.labels, truth.labels), 0.99) << "seed " << seed;
    }
}
