#include "abc/abc_engine.hpp"
#include "abc/errors.hpp"

#include "doctest.h"

#include <cmath>

using namespace abc;

namespace {

const std::vector<SchemeStage>& stages01() {
    static const std::vector<SchemeStage> s = [] {
        EngineConfig cfg;
        SchemeStage s0 = initial_stage(cfg);
        return std::vector<SchemeStage>{s0, step(s0, cfg)};
    }();
    return s;
}

const SchemeStage& stage2() {
    static const SchemeStage s = step(stages01()[1], EngineConfig{});
    return s;
}

}  // namespace

TEST_CASE("covering radius") {
    std::vector<CylinderPoint> grid;
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) grid.push_back(grid_point(i, j, 16));
    CHECK(covering_radius(grid, 16) == 0.0);
    std::vector<CylinderPoint> eq;
    for (int i = 0; i < 256; ++i) eq.emplace_back(i / 256.0, 0.0);
    // Brute-force oracle over the 64 x 64 grid gives exactly 1/2 (tests/oracles/compute_oracles.py).
    CHECK(covering_radius(eq, 64) == 0.5);
    CHECK(covering_radius(std::vector<CylinderPoint>{{0.0, 0.0}}, 64) >= 0.5);
}

TEST_CASE("conjugator construction") {
    Conjugator g = make_conjugator(1, 0.3);
    CHECK(g.covering <= 0.3);
    CHECK(g.commutation <= 1e-9);
    CHECK_THROWS_AS(make_conjugator(1, 1.5), PreconditionError);
}

TEST_CASE("angle selection") {
    // Smallest Q with 1/Q < 1/3 is 4.
    CHECK(choose_next_alpha(RationalAngle(), Rational(1, 3), 0).str() == "1/4");
}

TEST_CASE("periodic separation") {
    auto half = [](const XPoint& x, std::uint64_t k) { return XPoint(x.theta + (quad)k / 2, x.y); };
    auto id = [](const XPoint& x, std::uint64_t) { return x; };
    CHECK(periodic_separation(half, 2, 16) == 0.5);
    CHECK(periodic_separation(id, 2, 16) == 0.0);
}

TEST_CASE("first step of the scheme") {
    const auto& s = stages01();
    const SchemeStage& s1 = s[1];
    CHECK(s1.n == 1);
    CHECK(s1.j >= s[0].j);
    CHECK(s1.alpha.q() >= 1);
    // Budget from q_0 = 1: |alpha_1 - alpha_0| < 2^-1.
    CHECK(circle_distance(s1.alpha, s[0].alpha) < Rational(1, 2));
    CHECK(s1.cert.conjugacy <= 1e-8);
    CHECK(s1.cert.symplectic <= 1e-6);
    CHECK(s1.cert.orbit_covering <= 1.0 / 3 + 2.0 / 64);
    CHECK(periodic_separation(s1, 32) > 0);
    XPoint x(CylinderPoint(0.3, 0.2));
    XPoint back = stage_iterate(s1, x, s1.alpha.q());
    CHECK(xdistance(back, x) < 1e-10);
}

TEST_CASE("Liouville certificate") {
    auto A = [](const char* s) { return RationalAngle::parse(s); };
    // Q = 4097 is the smallest admissible step after 1/4 (tests/oracles/compute_oracles.py).
    CHECK(liouville_certificate({A("0/1"), A("1/4"), A("4101/16388")}).pass);
    // 1/4 + 1/4096 sits exactly on the budget.
    CHECK_THROWS_AS(liouville_certificate({A("0/1"), A("1/4"), A("1025/4096")}), CertificateFailure);
    // q_2 = 1 < 2.
    CHECK_THROWS_AS(liouville_certificate({A("0/1"), A("1/4"), A("0/1")}), CertificateFailure);
}

TEST_CASE("surface lifts") {
    const SchemeStage& s1 = stages01()[1];
    SurfaceLift sphere(s1, Surface::Sphere);
    SpherePoint n = sphere(SpherePoint(0, 0, 1));
    CHECK(n.x3 == 1.0);
    CHECK(n.x1 == 0.0);
    SurfaceLift disk(s1, Surface::Disk);
    DiskPoint c = disk(DiskPoint{0, 0});
    CHECK(c.x1 == 0.0);
    CHECK(c.x2 == 0.0);
    CHECK_THROWS_AS(SurfaceLift(s1, Surface::Cylinder), PreconditionError);
}

TEST_CASE("transitivity witness") {
    // f_1 is too close to a rotation to carry the polar collar south; f_2 is not.
    CHECK_THROWS_AS(transitivity_witness(stages01()[1], 0.5), WitnessNotFound);
    const SchemeStage& s2 = stage2();
    Witness w = transitivity_witness(s2, 0.5);
    CHECK(w.length <= s2.N);
    CHECK(w.start.x3 > 0);
    double low = 1;
    for (const auto& p : w.orbit) low = std::min(low, p.x3);
    CHECK(low < 0);
}
