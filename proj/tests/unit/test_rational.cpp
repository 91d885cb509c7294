#include "abc/errors.hpp"
#include "abc/rational.hpp"

#include "doctest.h"

using namespace abc;

TEST_CASE("rational angles reduce modulo one and round-trip through text") {
    RationalAngle a = RationalAngle::parse("5/4");
    CHECK(a.str() == "1/4");
    CHECK(RationalAngle::parse("-1/4").str() == "3/4");
    CHECK((a + RationalAngle::parse("3/4")).str() == "0/1");
    CHECK(a.times(BigInt(6)).str() == "1/2");
    CHECK_THROWS_AS(RationalAngle::parse("1/0"), ParseError);
    CHECK_THROWS_AS(RationalAngle::parse("x"), ParseError);
}

TEST_CASE("circle distance is exact and at most one half") {
    CHECK(circle_distance(RationalAngle::parse("1/10"), RationalAngle::parse("9/10")) == Rational(1, 5));
    CHECK(circle_distance(RationalAngle::parse("0/1"), RationalAngle::parse("1/2")) == Rational(1, 2));
}

TEST_CASE("Farey separation and Liouville bound") {
    // Oracle: enumeration of l/k with k <= 2 (tests/oracles/compute_oracles.py).
    CHECK(farey_separation(RationalAngle::parse("1/2")) == Rational(1, 2));
    CHECK(liouville_bound(BigInt(2)) == Rational(1, 16));
    CHECK(liouville_bound(BigInt(4)) == Rational(1, 4096));
}

TEST_CASE("iterate for offset solves k p = m mod q") {
    CHECK(iterate_for_offset(RationalAngle::parse("3/7"), BigInt(2)) == 3);
    CHECK(iterate_for_offset(RationalAngle::parse("1/4"), BigInt(3)) == 3);
}

TEST_CASE("last convergent matches a continued-fraction oracle") {
    // 355/113 reduces to 16/113 on the circle.
    CHECK(last_convergent(RationalAngle::parse("355/113"), BigInt(100)).str() == "1/7");
    CHECK(last_convergent(RationalAngle::parse("1076509/4306020"), BigInt(1000)).str() == "1/4");
}

TEST_CASE("log2 of a large rational") {
    Rational r(BigInt(1), BigInt(1));
    BigInt n, d;
    mpz_ui_pow_ui(n.get_mpz_t(), 3, 100);
    mpz_ui_pow_ui(d.get_mpz_t(), 7, 50);
    r = Rational(n, d);
    r.canonicalize();
    CHECK(log2_abs(r) == doctest::Approx(18.128503969235412773).epsilon(1e-14));
    BigInt huge;
    mpz_ui_pow_ui(huge.get_mpz_t(), 2, 5000);
    CHECK(log2_abs(Rational(BigInt(1), huge)) == -5000.0);
}

TEST_CASE("unit fraction below") {
    CHECK(unit_fraction_below(0.3) == Rational(1, 4));
    CHECK(unit_fraction_below(0.25) == Rational(1, 4));
    CHECK(unit_fraction_below(2.0) == Rational(1, 1));
}
