// Acceptance suite: one PASS/FAIL line per criterion.
//   abc_acceptance --prepare DIR        compute (or resume) the shared 3-stage run
//   abc_acceptance --run-dir DIR [N..]  evaluate criteria N (all when omitted)
// Exit status is nonzero when any evaluated criterion fails.

#include "abc/cli_persistence.hpp"
#include "abc/errors.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

using namespace abc;
namespace fs = std::filesystem;

namespace {

constexpr int kGrid = 64;
constexpr double kPi = std::numbers::pi;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string g(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

ExperimentConfig run_config(const fs::path& dir) {
    ExperimentConfig c;
    c.stages = 3;
    c.output_dir = dir.string();
    return c;
}

int prepare(const fs::path& dir) {
    ExperimentConfig cfg = run_config(dir);
    if (fs::exists(dir / "manifest.json")) {
        RunManifest m = RunManifest::from_json([&] {
            std::ifstream in(dir / "manifest.json");
            std::stringstream ss;
            ss << in.rdbuf();
            return ss.str();
        }());
        if (m.status == "complete" && m.config_hash == cfg.hash() && m.tool_version == kToolVersion &&
            fs::exists(dir / "elapsed.txt")) {
            std::cout << "run directory " << dir << " is complete\n";
            return 0;
        }
    }
    fs::remove_all(dir);
    auto t0 = std::chrono::steady_clock::now();
    RunManifest m = run(cfg, false);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ofstream(dir / "elapsed.txt") << secs << "\n";
    std::cout << "3-stage run " << m.status << " in " << secs << " s\n";
    return m.status == "complete" ? 0 : 1;
}

// ---------------------------------------------------------------- criteria

Outcome c1(const RunDirectory& run) {
    auto st = run.stages();
    double worst = 0;
    for (std::size_t n = 0; n + 1 < st.size(); ++n) {
        MapExpr rot = MapExpr::rotation(st[n].alpha);
        MapExpr a = MapExpr::compose({st[n + 1].conjugator.inverse(), rot, st[n + 1].conjugator});
        MapExpr b = MapExpr::compose({st[n].conjugator.inverse(), rot, st[n].conjugator});
        worst = std::max(worst, map_distance(a, b, kGrid, run.config().flow));
    }
    double secs = -1;
    std::ifstream(run.path() / "elapsed.txt") >> secs;
    return {worst <= 1e-8 && secs >= 0 && secs <= 300,
            "max grid residual " + g(worst) + " (limit 1e-8), run time " + g(secs) + " s (limit 300)"};
}

Outcome c2(const RunDirectory& run) {
    double worst = 0;
    for (const auto& s : run.stages())
        worst = std::max(worst, symplectic_residual(stage_map(s), kGrid, run.config().flow));
    return {worst <= 1e-6, "max |det Df_n - 1| " + g(worst) + " over stages 0..3 (limit 1e-6)"};
}

Outcome c3(const RunDirectory& run) {
    auto st = run.stages();
    EngineConfig ecfg = run.config().engine();
    bool ok = true;
    std::string d;
    for (std::size_t n = 1; n <= 3 && n < st.size(); ++n) {
        double level = std::pow(3.0, -static_cast<double>(n)) + 2.0 / kGrid;
        OrbitDensity od = orbit_density(st[n], level, ecfg);
        ok = ok && od.covering <= level;
        d += "n=" + std::to_string(n) + " radius " + g(od.covering) + " <= " + g(level) + " (N has " +
             std::to_string(mpz_sizeinbase(od.N.get_mpz_t(), 10)) + " digits); ";
    }
    return {ok && st.size() >= 4, d};
}

Outcome c4(const RunDirectory& run) {
    auto st = run.stages();
    bool ok = true;
    std::string d;
    for (std::size_t n = 0; n + 1 < st.size(); ++n) {
        GrowthReport r = growth_inequality(st[n], st[n + 1], kGrid, run.config().flow);
        ok = ok && r.pass;
        d += "n=" + std::to_string(n) + " k<" + std::to_string(r.range + 1) + (r.exhaustive ? " exhaustive" : " sampled") +
             " checked " + std::to_string(r.checked) + " worst excess " + g(r.worst_excess) + "; ";
    }
    if (!ok) d += "the full k range is not enumerable at this q_n on a 64x64 grid";
    return {ok, d};
}

Outcome c5(const RunDirectory& run) {
    std::vector<RationalAngle> a;
    for (const auto& s : run.stages()) a.push_back(s.alpha);
    try {
        LiouvilleReport r = liouville_certificate(a);
        std::string d = "exact check over " + std::to_string(a.size()) + " angles, q = ";
        for (const auto& x : a) d += std::to_string(mpz_sizeinbase(x.q().get_mpz_t(), 2)) + "-bit ";
        return {r.pass, d};
    } catch (const CertificateFailure& e) {
        return {false, std::string("violated at ") + std::to_string(e.index) + ": " + e.what()};
    }
}

Outcome c6(const RunDirectory& run) {
    auto st = run.stages();
    EngineConfig ecfg = run.config().engine();
    bool ok = true;
    std::string d;
    for (std::size_t n = 1; n < st.size(); ++n) {
        SeparationReport r = separation_report(st, n, ecfg);
        ok = ok && r.pass;
        d += "n=" + std::to_string(n) + (r.scanned ? " scan min " + g(r.measured) : " bound 1e" + g(r.lower_bound_log10)) +
             " product " + g(r.product) + "; ";
    }
    return {ok, d};
}

Outcome c7(const RunDirectory& run) {
    auto st = run.stages();
    EngineConfig ecfg = run.config().engine();
    bool poles = true;
    double seam = 0;
    for (const auto& s : st) {
        SurfaceLift lift(s, Surface::Sphere, run.config().flow);
        SpherePoint n = lift(SpherePoint(0, 0, 1)), so = lift(SpherePoint(0, 0, -1));
        poles = poles && n.x1 == 0 && n.x2 == 0 && n.x3 == 1 && so.x1 == 0 && so.x2 == 0 && so.x3 == -1;
        seam = std::max(seam, seam_residual(lift, 1000, 1e-3, run.config().seed));
    }
    bool witness = false;
    std::string wd;
    try {
        Witness w = transitivity_witness(st[2], 0.5, ecfg);
        double low = 1;
        for (const auto& p : w.orbit) low = std::min(low, p.x3);
        witness = low < 0 && w.start.x3 > 0;
        wd = "stage-2 witness start x3 " + g(w.start.x3) + " reaches x3 " + g(low);
    } catch (const WitnessNotFound& e) {
        wd = std::string("no witness: ") + e.what();
    }
    return {poles && seam <= 1e-6 && witness, std::string("poles fixed ") + (poles ? "yes" : "no") +
                                                  ", seam residual " + g(seam) + " (limit 1e-6), " + wd};
}

Outcome c8(const RunDirectory&) {
    BumpProfile beta(0.05, 0.2);
    GlueReport r = glue_and_report(EntireMapSpec::shear_twist(0.05, 0.03, 1), beta, 2.0, kGrid);
    VolumeCorrection id([](double, double) { return 1.0; }, beta);
    bool exact = id.trivial();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> T(0, 1), Y(-1, 1);
    for (int i = 0; i < 1000 && exact; ++i) {
        CylinderPoint p(T(rng), Y(rng));
        CylinderPoint a = id.apply(p), b = id.inverse(p);
        exact = a.theta == p.theta && a.y == p.y && b.theta == p.theta && b.y == p.y;
    }
    bool ok = r.det_residual <= 1e-6 && r.support_moved == 0 && r.sigma_residual <= 1e-10 &&
              r.mass_residual <= 1e-8 && exact;
    return {ok, "det " + g(r.det_residual) + ", moved " + std::to_string(r.support_moved) + "/" +
                    std::to_string(r.support_samples) + ", sigma " + g(r.sigma_residual) + ", mass " +
                    g(r.mass_residual) + ", g=1 identity " + (exact ? "exact" : "not exact")};
}

// A smooth non-holomorphic diffeomorphism of the complexified cylinder near the identity.
Vec4 generic_map(const Vec4& v) {
    return {v[0] + 0.05 * std::sin(2 * kPi * v[1]) + 0.03 * v[2] * v[3], v[1] + 0.04 * std::cos(v[2]),
            v[2] + 0.05 * std::sin(2 * kPi * v[0]) + 0.02 * v[1] * v[1], v[3] + 0.03 * std::sin(v[2]) * v[1]};
}

Outcome c9(const RunDirectory& run) {
    const std::vector<double> steps{1e-2, 1e-3, 1e-4};
    auto pts = random_domain_points(2.0, 20, run.config().seed);
    GluedMap glued(EntireMapSpec::shear_twist(0.05, 0.03, 1), BumpProfile(0.05, 0.2));
    DeformationBuilder ladder = run.ladder(3);
    std::vector<std::pair<std::string, Map4>> maps = {
        {"generic", generic_map}, {"glued", glued.map4()}, {"H_3", ladder.map(3)}};
    bool ok = true;
    std::string d;
    for (const auto& [name, h] : maps) {
        double min_slope = INFINITY, holo = 0;
        int floor = 0;
        for (const auto& p : pts) {
            std::vector<double> r;
            for (double s : steps) r.push_back(nijenhuis_residual(pullback_structure_field(h, s), p, s));
            DecaySlope ds = decay_slope(steps, r);
            ok = ok && ds.pass(1.5);
            if (ds.below_roundoff())
                ++floor;
            else
                min_slope = std::min(min_slope, ds.slope);
            holo = std::max(holo, holomorphic_form_residual(pullback_form_field(h, 1e-4), pullback_structure_field(h, 1e-4),
                                                            p, 1e-4)
                                      .value());
        }
        ok = ok && holo <= 1e-5;
        d += name + ": slope " + g(min_slope) + " (" + std::to_string(floor) + " at roundoff), holo " + g(holo) + "; ";
    }
    double sigma = 0;
    for (const auto& p : pts) sigma = std::max(sigma, sigma_structure_residual(pullback_structure_field(glued.map4(), 1e-4), p));
    double lo = INFINITY, hi = 0;
    JField tw = twisted_structure(1.0);
    for (const auto& p : pts)
        for (double s : steps) {
            double r = nijenhuis_residual(tw, p, s);
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
    // "Stable across steps": the residual varies by less than 10% between steps.
    ok = ok && sigma <= 1e-6 && lo >= 1e-2 && hi < 1.1 * lo;
    d += "sigma " + g(sigma) + ", non-integrable residual in [" + g(lo) + ", " + g(hi) + "]";
    return {ok, d};
}

Outcome c10(const RunDirectory& run) {
    DeformationBuilder b = run.ladder(3);
    std::vector<JField> J;
    std::vector<FormField> W;
    for (std::size_t n = 0; n <= 3; ++n) {
        J.push_back(b.structure(n));
        W.push_back(b.form(n));
    }
    ConvergenceReport r = convergence_tracker(J, W, b.points());
    std::string d;
    int halvings = 0;
    for (std::size_t n = 1; n <= 3; ++n) {
        LadderStage s = run.stage(n).ladder;
        halvings += s.halvings;
        d += "n=" + std::to_string(n) + " t=" + g(s.amplitude) + " dJ " + g(r.dJ[n - 1]) + " dW " + g(r.dOmega[n - 1]) +
             " < " + g(std::ldexp(1.0, -static_cast<int>(n))) + "; ";
    }
    d += std::to_string(halvings) + " automatic halvings";
    return {r.pass(), d};
}

Outcome c11(const RunDirectory&) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> T(0, 1), Y(-0.999, 0.999);
    double sphere = 0, disk = 0, inv = 0, fix = 0, symp = 0;
    const double h = 1e-5;
    for (int i = 0; i < 10000; ++i) {
        CylinderPoint c(T(rng), Y(rng));
        sphere = std::max(sphere, cyl_distance(axial_project(axial_unproject(c)), c));
        disk = std::max(disk, cyl_distance(polar_project(polar_unproject(c)), c));
        DiskPoint d = polar_unproject(c);
        DiskPoint dd = disk_involution(disk_involution(d));
        inv = std::max(inv, std::hypot(dd.x1 - d.x1, dd.x2 - d.x2));
        double a = 2 * kPi * T(rng);
        DiskPoint u{std::cos(a), std::sin(a)};
        DiskPoint iu = disk_involution(u);
        fix = std::max(fix, std::hypot(iu.x1 - u.x1, iu.x2 - u.x2));
        if (i % 10 == 0 && std::abs(c.y) < 0.99) {
            // Area forms: sphere 2 pi dtheta^dy, disk -(pi/2) dtheta^dy (theta turns counterclockwise while y
            // grows outward), by Richardson-combined differences.
            auto sph = [](double t, double y) {
                SpherePoint s = axial_unproject(CylinderPoint(t, y));
                return std::array<double, 3>{s.x1, s.x2, s.x3};
            };
            auto dsk = [](double t, double y) {
                DiskPoint s = polar_unproject(CylinderPoint(t, y));
                return std::array<double, 3>{s.x1, s.x2, 0};
            };
            auto diff = [&](auto f, double t, double y, bool dt, double s) {
                auto p = dt ? f(t + s, y) : f(t, y + s), m = dt ? f(t - s, y) : f(t, y - s);
                return std::array<double, 3>{(p[0] - m[0]) / (2 * s), (p[1] - m[1]) / (2 * s), (p[2] - m[2]) / (2 * s)};
            };
            auto rich = [&](auto f, double t, double y, bool dt) {
                auto a1 = diff(f, t, y, dt, h), a2 = diff(f, t, y, dt, h / 2);
                return std::array<double, 3>{(4 * a2[0] - a1[0]) / 3, (4 * a2[1] - a1[1]) / 3, (4 * a2[2] - a1[2]) / 3};
            };
            auto x = sph(c.theta, c.y);
            auto u1 = rich(sph, c.theta, c.y, true), v1 = rich(sph, c.theta, c.y, false);
            double area = x[0] * (u1[1] * v1[2] - u1[2] * v1[1]) - x[1] * (u1[0] * v1[2] - u1[2] * v1[0]) +
                          x[2] * (u1[0] * v1[1] - u1[1] * v1[0]);
            symp = std::max(symp, std::abs(area / (2 * kPi) - 1));
            auto u2 = rich(dsk, c.theta, c.y, true), v2 = rich(dsk, c.theta, c.y, false);
            symp = std::max(symp, std::abs((u2[0] * v2[1] - u2[1] * v2[0]) / (-kPi / 2) - 1));
        }
    }
    bool ok = sphere <= 1e-12 && disk <= 1e-12 && symp <= 1e-8 && inv <= 1e-12 && fix <= 1e-12;
    return {ok, "round trips " + g(sphere) + " / " + g(disk) + ", area-form residual " + g(symp) + ", involution " +
                    g(inv) + ", unit circle " + g(fix)};
}

const std::map<int, std::pair<std::string, std::function<Outcome(const RunDirectory&)>>>& criteria() {
    static const std::map<int, std::pair<std::string, std::function<Outcome(const RunDirectory&)>>> c = {
        {1, {"conjugacy invariance", c1}},   {2, {"symplecticity", c2}},
        {3, {"density ladder", c3}},         {4, {"growth inequality", c4}},
        {5, {"Liouville certificate", c5}},  {6, {"periodic separation", c6}},
        {7, {"surface lift", c7}},           {8, {"gluing pipeline", c8}},
        {9, {"complex diagnostics", c9}},    {10, {"structural convergence budget", c10}},
        {11, {"geometry oracles", c11}},
    };
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    fs::path dir = "acceptance_run";
    std::vector<int> which;
    bool prep = false;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if ((args[i] == "--run-dir" || args[i] == "--prepare") && i + 1 < args.size()) {
            prep = prep || args[i] == "--prepare";
            dir = args[++i];
        } else {
            try {
                which.push_back(std::stoi(args[i]));
            } catch (const std::exception&) {
                std::cerr << "usage: abc_acceptance [--prepare DIR | --run-dir DIR] [criterion...]\n";
                return 2;
            }
        }
    }
    try {
        if (prep) return prepare(dir);
        if (!fs::exists(dir / "elapsed.txt") && prepare(dir) != 0) return 1;
        if (which.empty())
            for (const auto& [k, v] : criteria()) which.push_back(k);
        RunDirectory run(dir);
        bool all = true;
        for (int k : which) {
            auto it = criteria().find(k);
            if (it == criteria().end()) {
                std::cerr << "unknown criterion " << k << "\n";
                return 2;
            }
            Outcome o;
            try {
                o = it->second.second(run);
            } catch (const std::exception& e) {
                o = {false, std::string("error: ") + e.what()};
            }
            all = all && o.pass;
            std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << k << " (" << it->second.first << "): " << o.detail
                      << std::endl;
        }
        return all ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
