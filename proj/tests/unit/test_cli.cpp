#include "abc/cli_persistence.hpp"
#include "abc/errors.hpp"

#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace abc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("abc_unit_" + std::to_string(::getpid()) + "_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("configuration text") {
    ExperimentConfig a = ExperimentConfig::parse("stages = 2\n# comment\neta=0.04 # trailing\ngrid_n = 32\n");
    ExperimentConfig b = ExperimentConfig::parse("grid_n = 32\neta = 0.04\nstages = 2\n");
    CHECK(a.stages == 2);
    CHECK(a.eta == 0.04);
    CHECK(a.canonical() == b.canonical());
    CHECK(a.hash() == b.hash());
    b.output_dir = "elsewhere";
    CHECK(a.hash() == b.hash());
    b.seed = 7;
    CHECK(a.hash() != b.hash());
    CHECK(ExperimentConfig::parse(a.canonical()).canonical() == a.canonical());
    CHECK_THROWS_AS(ExperimentConfig::parse("nonsense = 1\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("stages = 1\nstages = 2\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("stages = two\n"), ConfigError);
}

TEST_CASE("configuration validation") {
    ExperimentConfig c;
    c.eta = 0.3;
    c.eps = 0.2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    ExperimentConfig d;
    d.grid_n = 8;
    CHECK_THROWS_AS(d.validate(), ConfigError);
    ExperimentConfig e;
    e.tol_det = 0;
    CHECK_THROWS_AS(e.validate(), ConfigError);
    ExperimentConfig f;
    f.stages = 3;
    f.amplitudes = {0.1, 0.05};
    CHECK_THROWS_AS(f.validate(), ConfigError);
    // Rejected before the run directory is touched.
    ExperimentConfig g;
    g.eta = 0.3;
    g.eps = 0.2;
    g.output_dir = scratch("invalid").string();
    CHECK_THROWS_AS(run(g), ConfigError);
    CHECK_FALSE(fs::exists(g.output_dir));
}

TEST_CASE("sha256 of known strings") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("runs are deterministic, resumable and diagnosable") {
    ExperimentConfig cfg;
    cfg.stages = 1;
    cfg.output_dir = scratch("a").string();
    RunManifest m = run(cfg);
    CHECK(m.status == "complete");
    CHECK(m.stage_files.size() == 1);

    ExperimentConfig again = cfg;
    again.output_dir = scratch("b").string();
    run(again);
    CHECK(slurp(fs::path(cfg.output_dir) / "stage_1.json") == slurp(fs::path(again.output_dir) / "stage_1.json"));

    // Stage record text round-trips exactly.
    std::string text = slurp(fs::path(cfg.output_dir) / "stage_1.json");
    CHECK(stage_to_json(stage_from_json(text)) == text);

    // Resuming a complete run recomputes nothing.
    RunManifest r = run(cfg, true);
    CHECK(r.stage_sha256 == m.stage_sha256);

    RunDirectory dir(cfg.output_dir);
    CHECK(dir.stage_count() == 2);
    DiagnosticReport lv = diagnose(dir, "liouville", 1);
    CHECK(lv.pass);
    CHECK(fs::exists(lv.file));
    DiagnosticReport dn = diagnose(dir, "density", 1);
    CHECK(dn.pass);
    CHECK(dn.text.find("covering") != std::string::npos);
    CHECK(dn.text.find("threshold") != std::string::npos);
    CHECK(diagnose(dir, "symplectic", 1).pass);
    CHECK(diagnose(dir, "sigma", 1).pass);
    CHECK_THROWS_AS(diagnose(dir, "nonsense", 1), UnknownCheck);
    CHECK_THROWS_AS(diagnose(dir, "symplectic", 4), MissingStage);

    // Orbit export: identity at stage 0, and a re-evaluated round trip at stage 1.
    fs::path o0 = fs::path(cfg.output_dir) / "orbit0.txt";
    export_orbit(dir, 0, {}, o0);
    std::string t0 = slurp(o0);
    CHECK(t0.find("# alpha 0/1\n") != std::string::npos);
    CHECK(t0.substr(t0.rfind("# columns")).find("\n0 0 0\n") != std::string::npos);

    fs::path o1 = fs::path(cfg.output_dir) / "orbit1.txt";
    OrbitExportOptions opt{0.3, 0.2, 6};
    export_orbit(dir, 1, opt, o1);
    std::istringstream in(slurp(o1));
    std::string line;
    SchemeStage s1 = dir.stage(1).stage;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            if (line.rfind("# alpha ", 0) == 0) CHECK(line.substr(8) == s1.alpha.str());
            continue;
        }
        std::istringstream ls(line);
        long k;
        double th, y;
        ls >> k >> th >> y;
        CylinderPoint c = stage_iterate(s1, XPoint(CylinderPoint(0.3, 0.2)), BigInt(k)).to_cylinder();
        CHECK(th == c.theta);
        CHECK(y == c.y);
        CHECK(cyl_distance(CylinderPoint(th, y), c) <= 1e-12);
        ++rows;
    }
    CHECK(rows == 6);
    CHECK_THROWS_AS(export_orbit(dir, 9, opt, o1), MissingStage);

    fs::remove_all(cfg.output_dir);
    fs::remove_all(again.output_dir);
}

TEST_CASE("resume continues an interrupted run with identical records") {
    ExperimentConfig one;
    one.stages = 1;
    one.grid_n = 32;
    one.output_dir = scratch("resume").string();
    run(one);
    ExperimentConfig two = one;
    two.stages = 2;
    run(two, true);
    ExperimentConfig fresh = two;
    fresh.output_dir = scratch("fresh").string();
    run(fresh);
    CHECK(slurp(fs::path(two.output_dir) / "stage_2.json") == slurp(fs::path(fresh.output_dir) / "stage_2.json"));
    ExperimentConfig other = two;
    other.eta = 0.04;
    CHECK_THROWS_AS(run(other, true), ConfigError);
    fs::remove_all(one.output_dir);
    fs::remove_all(fresh.output_dir);
}
