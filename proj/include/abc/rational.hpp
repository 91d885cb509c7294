#pragma once

#include <gmpxx.h>

#include <string>

namespace abc {

using quad = __float128;
using Rational = mpq_class;
using BigInt = mpz_class;

// Reduced angle p/q in Q/Z with 0 <= p < q.
class RationalAngle {
public:
    RationalAngle() : p_(0), q_(1) {}
    RationalAngle(const BigInt& p, const BigInt& q);
    explicit RationalAngle(const Rational& r);

    const BigInt& p() const { return p_; }
    const BigInt& q() const { return q_; }
    Rational value() const { return Rational(p_, q_); }

    RationalAngle operator+(const RationalAngle& o) const;
    RationalAngle operator-(const RationalAngle& o) const;
    RationalAngle operator-() const;
    // k * alpha mod 1, exact.
    RationalAngle times(const BigInt& k) const;

    bool operator==(const RationalAngle& o) const { return p_ == o.p_ && q_ == o.q_; }
    bool operator!=(const RationalAngle& o) const { return !(*this == o); }

    double to_double() const;
    quad to_quad() const;
    std::string str() const;
    static RationalAngle parse(const std::string& s);

private:
    BigInt p_, q_;
};

// Distance in Q/Z between two angles, as an exact rational in [0, 1/2].
Rational circle_distance(const RationalAngle& a, const RationalAngle& b);

// min |p/q - l/k| over k <= q, l in Z, excluding zero.
Rational farey_separation(const RationalAngle& a);

// 2^-q * q^-q.
Rational liouville_bound(const BigInt& q);

// Smallest k in [1, q) with k*p = m (mod q); requires gcd(p, q) = 1.
BigInt iterate_for_offset(const RationalAngle& a, const BigInt& m);

// Last continued-fraction convergent of a with denominator <= bound.
RationalAngle last_convergent(const RationalAngle& a, const BigInt& bound);

// log2 |r| for r != 0, accurate to double precision for any size of r.
double log2_abs(const Rational& r);

// Largest rational of the form 1/m that does not exceed x (x > 0).
Rational unit_fraction_below(double x);

std::string rational_str(const Rational& r);
Rational parse_rational(const std::string& s);
double to_double(const Rational& r);
quad to_quad(const Rational& r);

}  // namespace abc
