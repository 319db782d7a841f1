#include <gtest/gtest.h>

#include <sstream>

#include "anonymixer/config.hpp"
#include "anonymixer/pipeline.hpp"

using namespace anonymixer;

namespace {

Config parse(const std::string& text) {
    std::istringstream in(text);
    return Config::parse(in);
}

const char* kBasic = R"(# comment
[data]
input = toy.csv

[schema]
mac = qid
rssi = continuous
bytes = cont

[cluster]
k_min = 3
eps_grid = 0.1, 0.2
)";

}  // namespace

TEST(Config, ReadsSectionsAndLists) {
    const auto c = parse(kBasic);
    EXPECT_EQ(c.get("data", "input"), "toy.csv");
    EXPECT_EQ(c.get_size("cluster", "k_min", 2), 3u);
    EXPECT_EQ(c.get_size("cluster", "k_max", 10), 10u);
    EXPECT_EQ(c.get_doubles("cluster", "eps_grid", {}), (std::vector<double>{0.1, 0.2}));
    EXPECT_FALSE(c.get("data", "missing").has_value());
}

TEST(Config, SchemaKeepsFileOrder) {
    const auto s = parse(kBasic).schema();
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s[0].name, "mac");
    EXPECT_EQ(s[0].kind, ColumnKind::quasi_identifier);
    EXPECT_EQ(s[2].kind, ColumnKind::continuous);
}

TEST(Config, HashIgnoresLayoutButNotValues) {
    const auto a = parse(kBasic);
    const auto b = parse("[cluster]\neps_grid=0.1, 0.2\nk_min=3\n[schema]\nbytes=cont\nmac=qid\nrssi=continuous\n"
                         "[data]\ninput=toy.csv\n");
    EXPECT_EQ(a.hash(), b.hash());
    auto c = a;
    c.set("cluster", "k_min", "4");
    EXPECT_NE(a.hash(), c.hash());
    EXPECT_EQ(a.hash().size(), 16u);
}

TEST(Config, LaterKeyOverrides) {
    const auto c = parse("[a]\nx = 1\nx = 2\n");
    EXPECT_EQ(c.get("a", "x"), "2");
}

TEST(Config, MalformedLinesAreParseErrors) {
    EXPECT_THROW(parse("[a\nx=1\n"), Error);
    EXPECT_THROW(parse("[a]\njust text\n"), Error);
}

TEST(Config, BadNumberIsUsageError) {
    const auto c = parse("[cluster]\nk_min = two\n");
    try {
        c.get_size("cluster", "k_min", 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::usage);
    }
}

TEST(Config, MissingFileNamesPath) {
    try {
        Config::load("/no/such/dir/run.conf");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::usage);
        EXPECT_NE(std::string(e.what()).find("/no/such/dir/run.conf"), std::string::npos);
    }
}

TEST(RunConfig, ParsesPipelineSections) {
    auto c = parse(std::string(kBasic) +
                   "[pipeline]\nalgorithms = kmeans, ghmm\nseed = 9\nthreshold = 0.1\nmetric_space = pca\n"
                   "[ghmm]\nstates = 2\n[ctgan]\nepochs = 5\nbatch = 16\ndiscriminator_steps = 2\n");
    const auto r = run_config_from(c);
    EXPECT_EQ(r.algorithms, (std::vector<Algorithm>{Algorithm::kmeans, Algorithm::ghmm}));
    EXPECT_EQ(r.seed, 9u);
    EXPECT_EQ(r.threshold, 0.1);
    EXPECT_EQ(r.metric_space, MetricSpace::pca);
    EXPECT_EQ(r.ghmm_states, 2u);
    EXPECT_EQ(r.ctgan.epochs, 5u);
    EXPECT_EQ(r.ctgan.batch_size, 16u);
    EXPECT_EQ(r.ctgan.discriminator_steps, 2u);
    EXPECT_EQ(r.k_min, 3u);
    EXPECT_EQ(r.config_hash, c.hash());
}

TEST(RunConfig, UnknownAlgorithmIsUsageError) {
    auto c = parse(std::string(kBasic) + "[pipeline]\nalgorithms = kmeans, spectral\n");
    try {
        run_config_from(c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::usage);
    }
}

TEST(RunConfig, SeedsDeriveFromRoot) {
    RunConfig a, b;
    a.seed = 1;
    b.seed = 2;
    EXPECT_NE(a.seed_for("kmeans"), b.seed_for("kmeans"));
    EXPECT_NE(a.seed_for("kmeans"), a.seed_for("ghmm"));
    EXPECT_EQ(a.seed_for("kmeans"), derive_seed(1, "kmeans"));
}
