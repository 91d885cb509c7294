#include "abc/errors.hpp"
#include "abc/geometry.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace abc;

TEST_CASE("cylinder metric") {
    CHECK(cyl_distance({0.9, 0}, {0.1, 0}) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(cyl_distance({0.3, 1}, {0.3, -1}) == 1.0);
    CHECK(cyl_distance({0.0, 1}, {0.5, -1}) == 1.0);
    CHECK(circle_gap(0.05, 0.95) == doctest::Approx(0.1).epsilon(1e-14));
}

TEST_CASE("axial projection") {
    CylinderPoint a = axial_project(SpherePoint(1, 0, 0));
    CHECK(a.theta == 0.0);
    CHECK(a.y == 0.0);
    CylinderPoint b = axial_project(SpherePoint(0, 1, 0));
    CHECK(b.theta == doctest::Approx(0.25).epsilon(1e-15));
    CHECK_THROWS_AS(axial_project(SpherePoint(0, 0, 1)), PoleError);
    SpherePoint s = axial_unproject(CylinderPoint(0.5, 0));
    CHECK(s.x1 == doctest::Approx(-1.0));
    CHECK(std::abs(s.x2) < 1e-15);
}

TEST_CASE("polar projection") {
    CylinderPoint a = polar_project(DiskPoint{1, 0});
    CHECK(a.theta == 0.0);
    CHECK(a.y == doctest::Approx(1.0));
    CylinderPoint b = polar_project(DiskPoint{0, std::sqrt(0.5)});
    CHECK(b.theta == doctest::Approx(0.25));
    CHECK(std::abs(b.y) < 1e-15);
    CHECK_THROWS_AS(polar_project(DiskPoint{0, 0}), OriginError);
}

TEST_CASE("round trips on random points") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> T(0, 1), Y(-0.999, 0.999);
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
        CylinderPoint c(T(rng), Y(rng));
        worst = std::max(worst, cyl_distance(axial_project(axial_unproject(c)), c));
        worst = std::max(worst, cyl_distance(polar_project(polar_unproject(c)), c));
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("disk involution") {
    DiskPoint u = disk_involution(DiskPoint{1, 0});
    CHECK(u.x1 == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(u.x2 == 0.0);
    // Closed form sqrt(3/2) (tests/oracles/compute_oracles.py).
    DiskPoint p = disk_involution(DiskPoint{std::sqrt(0.5), 0});
    CHECK(p.x1 == doctest::Approx(1.2247448713915890491).epsilon(1e-15));
    DiskPoint q = disk_involution(disk_involution(DiskPoint{0.3, -0.4}));
    CHECK(std::hypot(q.x1 - 0.3, q.x2 + 0.4) < 1e-15);
}

TEST_CASE("complexified domains") {
    DomainSpec A2(Surface::Cylinder, 2.0);
    CHECK(domain_contains(DomainSpec(Surface::Cylinder, 1.01), CylinderPoint(0, 0)));
    // 2 cosh(0) + |2i|^2 = 6 = 3 rho sits on the boundary.
    CHECK(domain_contains(A2, ComplexCylinderPoint(cplx(0, 0), cplx(0, 2))));
    CHECK_FALSE(domain_contains(A2, ComplexCylinderPoint(cplx(0, 0), cplx(0, 2.01))));
    ComplexSpherePoint z;
    double r = std::sqrt(2.1 / 3.0);
    z.z = {cplx(r, 0), cplx(r, 0), cplx(r, 0)};
    CHECK_FALSE(domain_contains(DomainSpec(Surface::Sphere, 2.0), z));
}

TEST_CASE("complexified axial projection extends the real one") {
    CylinderPoint c(0.3, 0.4);
    ComplexSpherePoint z = axial_unproject(ComplexCylinderPoint(c));
    SpherePoint s = axial_unproject(c);
    CHECK(std::abs(z.z[0] - cplx(s.x1, 0)) < 1e-15);
    CHECK(std::abs(z.z[2] - cplx(s.x3, 0)) < 1e-15);
    ComplexCylinderPoint back = axial_project(z);
    CHECK(std::abs(back.theta - cplx(0.3, 0)) < 1e-14);
}

TEST_CASE("surface names") {
    CHECK(parse_surface("sphere") == Surface::Sphere);
    CHECK(std::string(surface_name(Surface::Disk)) == "disk");
    CHECK_THROWS_AS(parse_surface("torus"), ConfigError);
}
