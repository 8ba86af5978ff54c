#include "catmap/io.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <sys/wait.h>

using namespace catmap;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int status = -1;
    std::string out;
};

CliRun run_cli(const std::string& args) {
    const std::string cmd = std::string(CATMAP_CLI) + " " + args + " 2>/dev/null";
    CliRun r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf{};
    size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    const int st = pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

fs::path scratch_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("catmap_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(Io, ContainerRoundTrip) {
    const fs::path dir = scratch_dir("container");
    Container c{ContainerKind::state, QuantumTorus(4, 1, {0.5, 1.25}), CMatrix::Random(4, 3)};
    const std::string file = (dir / "x.bin").string();
    write_container(file, c);
    EXPECT_EQ(fs::file_size(file), 8u + 4 * 4 + 2 * 8 + 2 * 8 + 4 * 3 * 16);
    const Container back = read_container(file);
    EXPECT_EQ(back.kind, ContainerKind::state);
    EXPECT_EQ(back.torus.N, 4);
    EXPECT_EQ(back.torus.kappa, c.torus.kappa);
    EXPECT_EQ(back.data, c.data);
}

TEST(Io, ContainerRejectsForeignFiles) {
    const fs::path dir = scratch_dir("foreign");
    const std::string file = (dir / "y.bin").string();
    std::ofstream(file) << "not a container";
    EXPECT_THROW(read_container(file), ValidationError);
    EXPECT_THROW(read_container((dir / "missing.bin").string()), ValidationError);
}

TEST(Io, JsonUsesSeventeenDigits) {
    json j{{"x", 0.1}, {"v", json::array({1.0 / 3, 2})}, {"s", "a"}};
    const std::string text = to_json_text(j);
    EXPECT_NE(text.find("0.10000000000000001"), std::string::npos);
    EXPECT_NE(text.find("0.33333333333333331"), std::string::npos);
    EXPECT_EQ(json::parse(text)["x"].get<double>(), 0.1);
}

TEST(Io, ObservableParsing) {
    EXPECT_EQ(parse_observable("cos_x1", 1).coeffs().size(), 2u);
    const TrigObservable a = parse_observable(R"([{"r": [0, 1], "c": [0.5, 0]}, {"r": [0, -1], "c": [0.5, 0]}])", 1);
    EXPECT_TRUE(a.is_real());
    for (double x : {0.0, 0.2, 0.5}) EXPECT_NEAR(a.value({x, 0.3}).real(), parse_observable("cos_x1", 1).value({x, 0.3}).real(), 1e-15);
    EXPECT_THROW(parse_observable("no_such_thing", 1), ValidationError);
    EXPECT_THROW(parse_observable("bump_3@0.1", 1), DimensionError);
}

TEST(Io, HusimiCsvHeader) {
    const fs::path dir = scratch_dir("csv");
    MeasureGrid H;
    H.d = 1;
    H.N = 8;
    H.resolution = 2;
    H.density = {1, 2, 3, 4};
    write_husimi_csv((dir / "h.csv").string(), H);
    std::ifstream is(dir / "h.csv");
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "# d=1,N=8,resolution=2");
    std::getline(is, line);
    EXPECT_EQ(line, "1,2");
}

// ---------------------------------------------------------------------------------------------
// End-to-end runs of the command-line tool.

TEST(Cli, AnalyzeGolden) {
    const CliRun r = run_cli("analyze-matrix --matrix \"2,1;1,1\"");
    ASSERT_EQ(r.status, 0);
    const json j = json::parse(r.out);
    EXPECT_NEAR(j["lyapunov"]["Lambda_zero"].get<double>(), 0.481212, 1e-6);
    EXPECT_EQ(j["library_version"], library_version);
    EXPECT_EQ(j["config"]["matrix"], "2,1;1,1");
}

TEST(Cli, AnalyzeShearIsNotQuantizable) {
    const CliRun r = run_cli("analyze-matrix --matrix \"1,1;0,1\"");
    EXPECT_NE(r.status, 0);
    EXPECT_EQ(r.status, 3);
    EXPECT_FALSE(json::parse(r.out)["quantizable"].get<bool>());
}

TEST(Cli, ValidationErrorsExitTwo) {
    EXPECT_EQ(run_cli("propagator --N 8x").status, 2);
    EXPECT_EQ(run_cli("propagator --matrix \"2,1;1\"").status, 2);
    EXPECT_EQ(run_cli("entropy --quantizer weyl --N 16").status, 2);
    EXPECT_EQ(run_cli("certify --eigvec-policy sometimes").status, 2);
}

TEST(Cli, BudgetErrorsExitFour) {
    EXPECT_EQ(run_cli("entropy --N 16 --K 10 --m 4 --delta0 0.05 --G 256 --quantizer anti_wick").status, 4);
}

TEST(Cli, PropagatorWritesContainer) {
    const fs::path dir = scratch_dir("prop");
    const CliRun r = run_cli("propagator --N 16 --out-dir " + dir.string());
    ASSERT_EQ(r.status, 0);
    const json j = json::parse(r.out);
    EXPECT_LE(j["runs"][0]["intertwining_defect"].get<double>(), 1e-10);
    const Container c = read_container(j["runs"][0]["file"].get<std::string>());
    EXPECT_EQ(c.data.rows(), 16);
    EXPECT_LT(unitarity_defect(c.data), 1e-12);
    EXPECT_TRUE(fs::exists(dir / "propagator.json"));
}

TEST(Cli, ConfigFileAndOverride) {
    const fs::path dir = scratch_dir("config");
    const std::string cfg = (dir / "c.json").string();
    std::ofstream(cfg) << R"({"N": [16, 24], "quantizer": "anti_wick", "eigvec_policy": "all"})";
    const CliRun r = run_cli("measure --config " + cfg + " --N 8");
    ASSERT_EQ(r.status, 0);
    const json j = json::parse(r.out);
    EXPECT_EQ(j["config"]["N"], json::array({8}));
    EXPECT_EQ(j["config"]["quantizer"], "anti_wick");
    EXPECT_EQ(j["runs"][0]["vectors"].size(), 8u);
    std::ofstream(cfg) << R"({"bogus": 1})";
    EXPECT_EQ(run_cli("measure --config " + cfg).status, 2);
}

TEST(Cli, DeterministicOutput) {
    const std::string args = "c-bound --N 16 --samples 64 --seed 9";
    const CliRun a = run_cli(args), b = run_cli(args);
    ASSERT_EQ(a.status, 0);
    EXPECT_EQ(a.out, b.out);
    const CliRun c = run_cli("eup-check --N 6,8 --trials 20 --jobs 2"), d = run_cli("eup-check --N 6,8 --trials 20 --jobs 1");
    ASSERT_EQ(c.status, 0);
    EXPECT_EQ(json::parse(c.out)["runs"], json::parse(d.out)["runs"]);
}

TEST(Cli, EntropyAndEgorovReports) {
    const CliRun e = run_cli("entropy --N 32 --K 2 --m 2 --m0 1");
    ASSERT_EQ(e.status, 0);
    const json je = json::parse(e.out);
    EXPECT_GE(je["runs"][0]["vectors"][0]["subadditivity"]["worst_triple_margin"].get<double>(), -1e-3);
    const CliRun g = run_cli("egorov --N 32");
    ASSERT_EQ(g.status, 0);
    for (const auto& v : json::parse(g.out)["runs"][0]["vectors"][0]["weyl"]) EXPECT_LE(v.get<double>(), 1e-8);
}

TEST(Cli, HusimiWritesCsv) {
    const fs::path dir = scratch_dir("husimi");
    const CliRun r = run_cli("husimi --N 16 --resolution 16 --out-dir " + dir.string());
    ASSERT_EQ(r.status, 0);
    EXPECT_TRUE(fs::exists(dir / "husimi_N16_v0.csv"));
}

TEST(Cli, CertifyGolden) {
    const CliRun r = run_cli("certify --matrix \"2,1;1,1\" --N 32 --K 2 --m 1");
    ASSERT_EQ(r.status, 0);
    EXPECT_GE(json::parse(r.out)["runs"][0]["vectors"][0]["margin"].get<double>(), -1e-6);
}
