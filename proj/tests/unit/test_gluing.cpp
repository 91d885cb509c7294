#include "abc/errors.hpp"
#include "abc/gluing.hpp"

#include "doctest.h"

#include <cmath>
#include <numbers>

using namespace abc;

namespace {
constexpr double kPi = std::numbers::pi;
const BumpProfile kBeta(0.05, 0.2);
}  // namespace

TEST_CASE("bump profile") {
    CHECK(kBeta(0.0) == 1.0);
    CHECK(kBeta(0.8) == 1.0);
    CHECK(kBeta(0.95) == 0.0);
    CHECK(kBeta(-0.99) == 0.0);
    double m = kBeta(0.875);
    CHECK(m > 0);
    CHECK(m < 1);
    CHECK_THROWS_AS(BumpProfile(0.2, 0.1), ConfigError);
    CHECK_THROWS_AS(BumpProfile(0.4, 0.5), ConfigError);
}

TEST_CASE("blend is exact on the plateau and outside the support") {
    EntireMapSpec h = EntireMapSpec::shear_twist(0.05, 0.03, 1);
    ComplexCylinderPoint p(cplx(0.3, 0.1), cplx(0.0, 0.2));
    ComplexCylinderPoint a = blend(h, kBeta, p), b = h(p);
    CHECK(a.theta == b.theta);
    CHECK(a.y == b.y);
    ComplexCylinderPoint q(cplx(0.3, 0.1), cplx(0.999, 0.2));
    ComplexCylinderPoint c = blend(h, kBeta, q);
    CHECK(c.theta == q.theta);
    CHECK(c.y == q.y);
}

TEST_CASE("area density") {
    BlendedMap id(EntireMapSpec::shear_twist(0, 0, 1), kBeta);
    CHECK(area_density(id, 0.3, 0.9) == 1.0);
    BlendedMap m(EntireMapSpec::shear_twist(0.05, 0.03, 1), kBeta);
    CHECK(std::abs(area_density(m, 0.3, 0.2) - 1) <= 1e-10);
    // Transition band: compare against central differences of the blended map.
    double t = 0.3, y = 0.87, s = 1e-5;
    auto f = [&](double a, double b) { return m(CylinderPoint(a, b)); };
    auto dt = [&](CylinderPoint u, CylinderPoint v) {
        double d = u.theta - v.theta;
        return d - std::round(d);
    };
    double a11 = dt(f(t + s, y), f(t - s, y)) / (2 * s), a12 = dt(f(t, y + s), f(t, y - s)) / (2 * s);
    double a21 = (f(t + s, y).y - f(t - s, y).y) / (2 * s), a22 = (f(t, y + s).y - f(t, y - s).y) / (2 * s);
    double g = area_density(m, t, y);
    CHECK(g == doctest::Approx(a11 * a22 - a12 * a21).epsilon(1e-8));
    CHECK(std::abs(g - 1) > 1e-6);
    CHECK_THROWS_AS(area_density(m, 0.3, 1.2), RangeError);
}

TEST_CASE("trigonometric series") {
    std::vector<double> v(64);
    for (int i = 0; i < 64; ++i) {
        double t = i / 64.0;
        v[i] = 0.25 + std::cos(2 * kPi * t) + 0.5 * std::sin(4 * kPi * t);
    }
    TrigSeries f = TrigSeries::interpolate(v);
    double t = 0.3137;
    CHECK(f.value(t) == doctest::Approx(0.25 + std::cos(2 * kPi * t) + 0.5 * std::sin(4 * kPi * t)).epsilon(1e-13));
    CHECK(f.mean() == doctest::Approx(0.25));
    CHECK(f.derivative(t) ==
          doctest::Approx(-2 * kPi * std::sin(2 * kPi * t) + 2 * kPi * std::cos(4 * kPi * t)).epsilon(1e-12));
    CHECK(f.primitive().value(t) ==
          doctest::Approx(std::sin(2 * kPi * t) / (2 * kPi) - 0.5 * std::cos(4 * kPi * t) / (4 * kPi)).epsilon(1e-12));
}

TEST_CASE("volume correction with unit density is the identity") {
    VolumeCorrection c([](double, double) { return 1.0; }, kBeta);
    CHECK(c.trivial());
    CHECK(c.tau() == 0.0);
    CHECK(c.gamma_plus(0.3) == 1.0);
    CHECK(c.gamma_minus(0.3) == -1.0);
    CylinderPoint p(0.37, -0.42);
    CylinderPoint a = c.apply(p), b = c.inverse(p);
    CHECK(a.theta == p.theta);
    CHECK(a.y == p.y);
    CHECK(b.theta == p.theta);
    CHECK(b.y == p.y);
}

TEST_CASE("volume correction against a closed form") {
    // g = 1 + 0.1 cos(2 pi theta) y: A = -0.05 cos, B = 0.05 cos, G = y + 0.05 cos(2 pi theta) y^2,
    // gamma_+- = +-1 + 0.05 cos(2 pi theta), tau = 0, mass 2.
    VolumeCorrection c([](double t, double y) { return 1 + 0.1 * std::cos(2 * kPi * t) * y; }, kBeta);
    for (double t : {0.0, 0.21, 0.7})
        for (double y : {-0.9, -0.3, 0.0, 0.5, 1.0}) {
            CHECK(c.G(t, y) == doctest::Approx(y + 0.05 * std::cos(2 * kPi * t) * y * y).epsilon(1e-12));
            CylinderPoint p(t, y);
            CylinderPoint back = c.phi1_inverse(c.phi1(p));
            CHECK(cyl_distance(back, p) <= 1e-14);
        }
    CHECK(c.gamma_plus(0.21) == doctest::Approx(1 + 0.05 * std::cos(2 * kPi * 0.21)).epsilon(1e-12));
    CHECK(c.gamma_minus(0.21) == doctest::Approx(-1 + 0.05 * std::cos(2 * kPi * 0.21)).epsilon(1e-12));
    CHECK(std::abs(c.tau()) <= 1e-14);
    CHECK(c.mass() == doctest::Approx(2.0).epsilon(1e-13));
    // The correction returns the boundary circles to y = +-1.
    for (double t : {0.1, 0.6}) {
        CHECK(c.apply(CylinderPoint(t, 1.0)).y == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(c.apply(CylinderPoint(t, -1.0)).y == doctest::Approx(-1.0).epsilon(1e-12));
        CylinderPoint p(t, 0.3);
        CHECK(cyl_distance(c.inverse(c.apply(p)), p) <= 1e-12);
    }
}

TEST_CASE("glue report for the identity is trivial") {
    GlueReport r = glue_and_report(EntireMapSpec::shear_twist(0, 0, 1), kBeta, 2.0, 16);
    CHECK(r.det_residual <= 1e-10);  // finite-difference determinant
    CHECK(r.membership_excess == 0.0);
    CHECK(r.support_moved == 0);
    CHECK(r.structure_distance <= 1e-12);
    CHECK(r.form_distance <= 1e-12);
    CHECK(r.sigma_residual == 0.0);
    CHECK(r.mass_residual <= 1e-12);
}

TEST_CASE("glue report for a small shear-twist pair") {
    GlueReport r = glue_and_report(EntireMapSpec::shear_twist(0.05, 0.03, 1), kBeta, 2.0, 32);
    CHECK(r.det_residual <= 1e-6);
    CHECK(r.membership_excess == 0.0);
    CHECK(r.support_moved == 0);
    CHECK(r.sigma_residual <= 1e-10);
    CHECK(r.mass_residual <= 1e-8);
}

TEST_CASE("structural residuals shrink linearly with the coefficients") {
    GlueOptions opt;
    opt.complex_grid_n = 4;
    std::vector<double> t{0.4, 0.2, 0.1}, d;
    for (double s : t)
        d.push_back(glue_and_report(EntireMapSpec::shear_twist(0.05 * s, 0.03 * s, 1), kBeta, 2.0, 16, opt)
                        .structure_distance);
    double slope = std::log(d[0] / d[2]) / std::log(t[0] / t[2]);
    CHECK(slope >= 1.0 - 1e-3);
}

TEST_CASE("blended map is injective on a complexified grid") {
    CHECK(blend_collisions(EntireMapSpec::shear_twist(0.05, 0.03, 1), kBeta, 2.0, 24, 1e-6) == 0);
}

TEST_CASE("rotation symmetry of the glued map") {
    GlueReport r = glue_and_report(EntireMapSpec::shear_twist(0.05, 0.03, 3, 3), kBeta, 2.0, 18);
    CHECK(r.rotation_residual >= 0);
    CHECK(r.rotation_residual <= 1e-12);
}

TEST_CASE("entire map specification") {
    CHECK_THROWS_AS(EntireMapSpec::shear_twist(0.1, 0.1, 2, 3), PreconditionError);
    EntireMapSpec h = EntireMapSpec::shear_twist(0.1, 0.2, 1);
    CHECK(h.scaled(0).is_identity());
    CylinderPoint p(0.3, 0.4);
    CylinderPoint a = h(p), b = h.expr()(p);
    CHECK(cyl_distance(a, b) <= 1e-15);
}

TEST_CASE("deformation builder halves the amplitude on breach") {
    auto pts = random_domain_points(2.0, 20, 20240601);
    DeformationBuilder b(EntireMapSpec::shear_twist(0.5, 0.2, 1), kBeta, pts);
    LadderStage s = b.add(0.25);
    CHECK(s.halvings >= 1);
    CHECK(s.dJ < 0.5);
    CHECK(s.dOmega < 0.5);
    CHECK(s.amplitude == std::ldexp(0.25, -s.halvings));
    CHECK_THROWS_AS(b.map(2), MissingStage);
}
