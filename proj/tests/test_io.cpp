#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "aao/io.hpp"

namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test, cleaned up on construction.
fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("aao_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

aao::Field random_field(int nt, int nx, unsigned seed) {
    aao::Field f(nt, nx);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> draw(-2.0, 2.0);
    for (double& v : f.v) v = draw(rng);
    return f;
}

aao::ordered_json small_config_doc() {
    return aao::ordered_json::parse(R"({
        "seed": 42,
        "grid": {"nx": 13, "nt": 10, "T": 0.1},
        "truth": {"nonlinearity": "square", "n_samples": 1},
        "measurement": {"indices": [1, 5, 10]},
        "noise": {"mode": "absolute", "level": 0.05},
        "solver": {"kind": "adam", "iters": 15, "trace_every": 5}
    })");
}

}  // namespace

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

TEST(Config, EmptyDocumentYieldsRunnableDefaults) {
    const auto spec = aao::parse_run_spec(aao::ordered_json::object());
    EXPECT_EQ(spec.exp.nx, 51);
    EXPECT_EQ(spec.exp.nt, 50);
    EXPECT_DOUBLE_EQ(spec.exp.T, 0.1);
    EXPECT_EQ(spec.exp.truth, aao::TruthId::square);
    EXPECT_EQ(spec.exp.family, aao::FamilyKind::network);
    // Snapshot mode without explicit indices observes every step.
    ASSERT_EQ(spec.exp.meas.indices.size(), 50u);
    EXPECT_EQ(spec.exp.meas.indices.front(), 1);
    EXPECT_EQ(spec.exp.meas.indices.back(), 50);
    EXPECT_TRUE(spec.out.fields);
    EXPECT_FALSE(spec.out.binary);
}

TEST(Config, FullDocumentParses) {
    auto doc = small_config_doc();
    doc["weights"] = {{"beta_e", 2.0}, {"r_u", 1e-3}};
    doc["baseline"] = {{"family", "trig"}, {"dof", 9}};
    doc["output"] = {{"fields", false}, {"binary", true}};
    const auto spec = aao::parse_run_spec(doc);
    EXPECT_EQ(spec.exp.seed, 42u);
    EXPECT_EQ(spec.exp.nx, 13);
    EXPECT_EQ(spec.exp.adam.iters, 15);
    EXPECT_EQ(spec.exp.meas.indices, (std::vector<int>{1, 5, 10}));
    EXPECT_DOUBLE_EQ(spec.exp.weights.beta_e, 2.0);
    EXPECT_DOUBLE_EQ(spec.exp.weights.r_u, 1e-3);
    EXPECT_DOUBLE_EQ(spec.exp.weights.beta_M, 1.0);  // untouched default
    EXPECT_EQ(spec.exp.family, aao::FamilyKind::trig);
    EXPECT_EQ(spec.exp.family_dof, 9);
    EXPECT_FALSE(spec.out.fields);
    EXPECT_TRUE(spec.out.binary);
}

TEST(Config, UnknownKeysAreHardErrorsAtEveryLevel) {
    {
        auto doc = small_config_doc();
        doc["grd"] = aao::ordered_json::object();
        EXPECT_THROW(aao::parse_run_spec(doc), std::invalid_argument);
    }
    {
        auto doc = small_config_doc();
        doc["grid"]["nxx"] = 3;
        EXPECT_THROW(aao::parse_run_spec(doc), std::invalid_argument);
    }
    {
        auto doc = small_config_doc();
        doc["solver"]["learning_rate"] = 0.1;  // the key is "lr"
        EXPECT_THROW(aao::parse_run_spec(doc), std::invalid_argument);
    }
    {
        auto doc = small_config_doc();
        doc["output"] = {{"format", "csv"}};
        EXPECT_THROW(aao::parse_run_spec(doc), std::invalid_argument);
    }
}

TEST(Config, WrongTypesAndBadEnumsThrow) {
    {
        auto doc = small_config_doc();
        doc["grid"]["nx"] = "big";
        EXPECT_THROW(aao::parse_run_spec(doc), std::invalid_argument);
    }
    {
        auto doc = small_config_doc();
        doc["measurement"]["mode"] = "sometimes";
        EXPECT_THROW(aao::parse_run_spec(doc), std::invalid_argument);
    }
    {
        auto doc = small_config_doc();
        doc["solver"]["kind"] = "sgd";
        EXPECT_THROW(aao::parse_run_spec(doc), std::invalid_argument);
    }
    {
        auto doc = small_config_doc();
        doc["truth"]["nonlinearity"] = "sine";
        EXPECT_THROW(aao::parse_run_spec(doc), std::invalid_argument);
    }
    {
        auto doc = small_config_doc();
        doc["noise"]["level"] = -0.1;
        EXPECT_THROW(aao::parse_run_spec(doc), std::invalid_argument);
    }
}

TEST(Config, NormalizedEchoRoundTrips) {
    const auto spec = aao::parse_run_spec(small_config_doc());
    const auto echo = aao::run_spec_to_json(spec);
    const auto spec2 = aao::parse_run_spec(echo);
    const auto echo2 = aao::run_spec_to_json(spec2);
    EXPECT_EQ(echo.dump(), echo2.dump());
    EXPECT_EQ(spec2.exp.nx, spec.exp.nx);
    EXPECT_EQ(spec2.exp.adam.iters, spec.exp.adam.iters);
    EXPECT_EQ(spec2.exp.meas.indices, spec.exp.meas.indices);
}

// ---------------------------------------------------------------------------
// Field dumps
// ---------------------------------------------------------------------------

TEST(FieldDump, BinaryRoundTripsBitForBit) {
    const auto dir = scratch_dir("field_bin");
    const aao::Field f = random_field(7, 11, 3);
    const std::string path = (dir / "f.bin").string();
    aao::write_field_binary(path, f);

    const std::string bytes = slurp(path);
    ASSERT_EQ(bytes.size(), 16u + f.v.size() * sizeof(double));
    EXPECT_EQ(bytes.substr(0, 8), "AAOFLD01");
    // Header dimensions are little-endian 32-bit.
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 7u);
    EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 11u);

    const aao::Field g = aao::read_field_binary(path);
    EXPECT_EQ(g.nt, f.nt);
    EXPECT_EQ(g.nx, f.nx);
    EXPECT_EQ(g.v, f.v);
}

TEST(FieldDump, CsvRoundTripsBitForBit) {
    const auto dir = scratch_dir("field_csv");
    const aao::Field f = random_field(5, 9, 4);
    const std::string path = (dir / "f.csv").string();
    aao::write_field_csv(path, f);
    const aao::Field g = aao::read_field_csv(path);
    EXPECT_EQ(g.v, f.v);
}

TEST(FieldDump, RejectsForeignFiles) {
    const auto dir = scratch_dir("field_bad");
    const std::string path = (dir / "junk.bin").string();
    std::ofstream(path) << "this is not a field dump";
    EXPECT_THROW(aao::read_field_binary(path), std::runtime_error);
    EXPECT_THROW(aao::read_field_binary((dir / "missing.bin").string()), std::runtime_error);
}

// ---------------------------------------------------------------------------
// Network files
// ---------------------------------------------------------------------------

TEST(NetFile, JsonRoundTripsExactly) {
    aao::Net net = aao::make_net({1, 2, 4, 2, 1});
    aao::randomize_uniform(net, 99);
    const auto j = aao::net_to_json(net);
    const aao::Net back = aao::net_from_json(j);
    EXPECT_EQ(aao::flatten(back), aao::flatten(net));
    EXPECT_EQ(back.arch, net.arch);
}

TEST(NetFile, RejectsShapeMismatches) {
    aao::Net net = aao::make_net({1, 2, 1});
    auto j = aao::net_to_json(net);
    j["weights"][0].push_back(1.0);
    EXPECT_THROW(aao::net_from_json(j), std::invalid_argument);

    auto j2 = aao::net_to_json(net);
    j2["extra"] = 1;
    EXPECT_THROW(aao::net_from_json(j2), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Trace CSV
// ---------------------------------------------------------------------------

TEST(Trace, CsvHasPinnedColumnsAndOneRowPerEntry) {
    const auto dir = scratch_dir("trace");
    std::vector<aao::TraceRow> rows(3);
    rows[0] = {0, 1.5, 0.5, 0.25, 0.0};
    rows[1] = {10, 1.0, 0.4, 0.2, 0.01};
    rows[2] = {20, 0.75, 0.3, 0.15, 0.01};
    const std::string path = (dir / "trace.csv").string();
    aao::write_trace_csv(path, rows);

    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "iter,objective,pde_residual_W,data_misfit_Y,step_size");
    int count = 0;
    while (std::getline(in, line)) ++count;
    EXPECT_EQ(count, 3);
}

// ---------------------------------------------------------------------------
// Full artifact bundle
// ---------------------------------------------------------------------------

TEST(Artifacts, BundleContainsReportTraceFieldsAndPlots) {
    const auto spec = aao::parse_run_spec(small_config_doc());
    const auto res = aao::run_experiment(spec.exp);
    const auto dir = scratch_dir("bundle");
    aao::write_artifacts(dir, spec, res, /*include_errors=*/true);

    EXPECT_TRUE(fs::exists(dir / "report.json"));
    EXPECT_TRUE(fs::exists(dir / "trace.csv"));
    EXPECT_TRUE(fs::exists(dir / "family.json"));
    EXPECT_TRUE(fs::exists(dir / "fields" / "state_0.csv"));
    EXPECT_TRUE(fs::exists(dir / "fields" / "truth_0.csv"));
    EXPECT_TRUE(fs::exists(dir / "plotdata" / "nonlinearity.csv"));
    EXPECT_TRUE(fs::exists(dir / "plotdata" / "state_final_0.csv"));
    EXPECT_TRUE(fs::exists(dir / "plotdata" / "source_0.csv"));

    const auto report = aao::ordered_json::parse(slurp(dir / "report.json"));
    ASSERT_TRUE(report.contains("errors"));
    for (const char* key : {"nonlinearity_error", "state_error", "parameter_error", "pde_residual",
                            "nonlinearity_rel_l2", "state_rel_l2", "parameter_rel_l2", "offset"}) {
        EXPECT_TRUE(report["errors"].contains(key)) << key;
    }
    EXPECT_EQ(report["config"]["grid"]["nx"], 13);
    EXPECT_EQ(report["run"]["stop_reason"], "max-iterations");
    EXPECT_FALSE(report.contains("timestamp"));

    // The dumped network must reload with exactly the recovered parameters.
    const aao::Net net = aao::read_net_file((dir / "family.json").string());
    EXPECT_EQ(aao::flatten(net), res.family_params);
}

TEST(Artifacts, ReportIsByteIdenticalAcrossRuns) {
    const auto spec = aao::parse_run_spec(small_config_doc());
    const auto dir_a = scratch_dir("determinism_a");
    const auto dir_b = scratch_dir("determinism_b");
    aao::write_artifacts(dir_a, spec, aao::run_experiment(spec.exp), true);
    aao::write_artifacts(dir_b, spec, aao::run_experiment(spec.exp), true);
    EXPECT_EQ(slurp(dir_a / "report.json"), slurp(dir_b / "report.json"));
    EXPECT_EQ(slurp(dir_a / "trace.csv"), slurp(dir_b / "trace.csv"));
    EXPECT_EQ(slurp(dir_a / "fields" / "state_0.csv"), slurp(dir_b / "fields" / "state_0.csv"));
}

TEST(Artifacts, BinaryFlagSwitchesFieldFormat) {
    auto doc = small_config_doc();
    doc["output"] = {{"binary", true}};
    const auto spec = aao::parse_run_spec(doc);
    const auto res = aao::run_experiment(spec.exp);
    const auto dir = scratch_dir("bundle_bin");
    aao::write_artifacts(dir, spec, res, true);
    EXPECT_TRUE(fs::exists(dir / "fields" / "state_0.bin"));
    EXPECT_FALSE(fs::exists(dir / "fields" / "state_0.csv"));
    const aao::Field f = aao::read_field_binary((dir / "fields" / "state_0.bin").string());
    EXPECT_EQ(f.v, res.state.u[0].v);
}

TEST(ConfigFile, MissingPathNamesTheFile) {
    try {
        aao::load_config_file("/nonexistent/config.json");
        FAIL() << "expected invalid_argument";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/config.json"), std::string::npos);
    }
}
