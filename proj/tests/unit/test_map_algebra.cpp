#include "abc/errors.hpp"
#include "abc/map_algebra.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace abc;

TEST_CASE("leaf evaluation") {
    CylinderPoint r = MapExpr::rotation(RationalAngle::parse("1/2"))(CylinderPoint(0.25, 0.3));
    CHECK(r.theta == 0.75);
    CHECK(r.y == 0.3);
    CylinderPoint s = MapExpr::shear({0, 0, 1})(CylinderPoint(0.1, 0.5));
    CHECK(s.theta == doctest::Approx(0.35).epsilon(1e-15));
    CHECK(s.y == 0.5);
    CylinderPoint t = MapExpr::twist({{1, 0, 0.2}})(CylinderPoint(0.25, 0.1));
    CHECK(t.y == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("inverse of a closed-form composite") {
    MapExpr m = MapExpr::compose({MapExpr::shear({0.1, 0, 0.3}), MapExpr::twist({{2, 0.1, -0.05}}),
                                  MapExpr::rotation(RationalAngle::parse("2/7"))});
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> T(0, 1), Y(-1, 1);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        CylinderPoint p(T(rng), Y(rng));
        worst = std::max(worst, cyl_distance(m.inverse()(m(p)), p));
    }
    CHECK(worst <= 1e-14);
}

TEST_CASE("Hamiltonian time-one map matches an independent midpoint integration") {
    // mpmath implicit midpoint, 256 steps (tests/oracles/compute_oracles.py).
    CylinderPoint p = ham_time_one(0.05, 2, CylinderPoint(0.2, 0.1));
    CHECK(p.theta == doctest::Approx(0.2653391284186048967).epsilon(1e-12));
    CHECK(p.y == doctest::Approx(0.42890559453581449734).epsilon(1e-12));
    // The exact flow differs by the integrator's second-order error only.
    CHECK(std::abs(p.theta - 0.26533934548973245588) < 1e-5);
}

TEST_CASE("Hamiltonian flow is area preserving") {
    MapExpr f = MapExpr::ham_flow(0.05, 2, 256);
    CylinderPoint p(0.2, 0.1);
    Mat2 J = jacobian_richardson(f, p, 1e-4);
    CHECK(std::abs(det2(J) - 1) <= 1e-8);
    CHECK(std::abs(analytic_det(f, XPoint(p)) - 1) <= 1e-12);
    Mat2 A = analytic_jacobian(f, p);
    for (int i = 0; i < 4; ++i) CHECK(A[i] == doctest::Approx(J[i]).epsilon(1e-6));
}

TEST_CASE("Jacobians of leaves") {
    Mat2 r = jacobian(MapExpr::rotation(0.3), CylinderPoint(0.1, 0.2), 1e-5);
    CHECK(r[0] == doctest::Approx(1.0));
    CHECK(std::abs(r[1]) < 1e-9);
    CHECK(std::abs(r[2]) < 1e-9);
    CHECK(r[3] == doctest::Approx(1.0));
    Mat2 s = jacobian(MapExpr::shear({0, 0, 1}), CylinderPoint(0.4, 0.5), 1e-5);
    CHECK(s[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(s[0] == doctest::Approx(1.0));
}

TEST_CASE("commutation with rotations") {
    CHECK(commutation_residual(MapExpr::shear({0.2, 0.1, 0.3}), RationalAngle::parse("3/11"), 32) <= 1e-14);
    CHECK(commutation_residual(MapExpr::ham_flow(0.05, 3 * 2, 64), RationalAngle::parse("1/3"), 32) <= 1e-9);
    // Twist by cos(2 pi theta) against a half turn moves y by 2|cos|: residual reaches 1.
    CHECK(commutation_residual(MapExpr::twist({{1, 1, 0}}), RationalAngle::parse("1/2"), 32) >= 0.1);
}

TEST_CASE("serialization round trip is exact") {
    MapExpr m = MapExpr::compose({MapExpr::ham_flow(0.1 / 3, 12, 256).inverse(),
                                  MapExpr::rotation(RationalAngle::parse("5/12")), MapExpr::shear({0.1, 1.0 / 3})});
    MapExpr back = MapExpr::parse(m.serialize());
    CHECK(back.serialize() == m.serialize());
    CylinderPoint p(0.3, 0.2);
    CylinderPoint a = m(p), b = back(p);
    CHECK(a.theta == b.theta);
    CHECK(a.y == b.y);
    CHECK_THROWS_AS(MapExpr::parse("bogus 1\n"), ParseError);
}

TEST_CASE("complexified evaluation agrees on real points") {
    MapExpr m = MapExpr::compose(MapExpr::shear({0, 0.2}), MapExpr::twist({{1, 0.1, 0.05}}));
    ComplexCylinderPoint z = m(ComplexCylinderPoint(CylinderPoint(0.3, 0.4)));
    CylinderPoint r = m(CylinderPoint(0.3, 0.4));
    CHECK(std::abs(z.theta.real() - r.theta) < 1e-15);
    CHECK(z.theta.imag() == 0.0);
    CHECK(std::abs(z.y - cplx(r.y, 0)) < 1e-15);
}

TEST_CASE("metric norm and grid") {
    CHECK(metric_norm(Mat2{1, 0, 0, 1}) == doctest::Approx(1.0));
    CylinderPoint g = grid_point(0, 63, 64);
    CHECK(g.y == 1.0);
    CHECK(grid_point(0, 0, 64).y == -1.0);
}

TEST_CASE("flow configuration validation") {
    FlowConfig c;
    c.steps = 0;
    CHECK_THROWS_AS(c.validate(), PreconditionError);
}
