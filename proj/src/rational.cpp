#include "abc/rational.hpp"

#include "abc/errors.hpp"

#include <cmath>

namespace abc {

namespace {

BigInt mod_floor(const BigInt& a, const BigInt& m) {
    BigInt r;
    mpz_fdiv_r(r.get_mpz_t(), a.get_mpz_t(), m.get_mpz_t());
    return r;
}

// Fractional part of r as a quad, correct to ~2^-118.
quad frac_quad(const BigInt& p, const BigInt& q) {
    BigInt num = mod_floor(p, q);
    BigInt scaled = (num << 120) / q;
    BigInt hi = scaled >> 60;
    BigInt lo = scaled - (hi << 60);
    quad out = (quad)mpz_get_ui(hi.get_mpz_t()) * (quad)1152921504606846976.0;  // 2^60
    out += (quad)mpz_get_ui(lo.get_mpz_t());
    for (int i = 0; i < 2; ++i) out /= (quad)1152921504606846976.0;
    return out;
}

}  // namespace

RationalAngle::RationalAngle(const BigInt& p, const BigInt& q) {
    if (q <= 0) throw PreconditionError("angle denominator must be positive");
    BigInt g;
    mpz_gcd(g.get_mpz_t(), p.get_mpz_t(), q.get_mpz_t());
    q_ = q / g;
    p_ = mod_floor(p / g, q_);
}

RationalAngle::RationalAngle(const Rational& r) : RationalAngle(r.get_num(), r.get_den()) {}

RationalAngle RationalAngle::operator+(const RationalAngle& o) const {
    return RationalAngle(Rational(value() + o.value()));
}

RationalAngle RationalAngle::operator-(const RationalAngle& o) const {
    return RationalAngle(Rational(value() - o.value()));
}

RationalAngle RationalAngle::operator-() const { return RationalAngle(-p_, q_); }

RationalAngle RationalAngle::times(const BigInt& k) const { return RationalAngle(p_ * k, q_); }

double RationalAngle::to_double() const { return (double)to_quad(); }

quad RationalAngle::to_quad() const { return frac_quad(p_, q_); }

std::string RationalAngle::str() const { return p_.get_str() + "/" + q_.get_str(); }

RationalAngle RationalAngle::parse(const std::string& s) { return RationalAngle(parse_rational(s)); }

Rational circle_distance(const RationalAngle& a, const RationalAngle& b) {
    Rational d = (a - b).value();
    Rational other = 1 - d;
    return d < other ? d : other;
}

Rational farey_separation(const RationalAngle& a) {
    if (a.q() == 1) return Rational(1);
    // Farey neighbours of p/q sit at 1/(q k) with p k = +-1 (mod q); the larger k wins.
    BigInt inv;
    mpz_invert(inv.get_mpz_t(), a.p().get_mpz_t(), a.q().get_mpz_t());
    BigInt other = a.q() - inv;
    BigInt k = inv > other ? inv : other;
    return Rational(BigInt(1), a.q() * k);
}

Rational liouville_bound(const BigInt& q) {
    if (q <= 0) throw PreconditionError("liouville bound needs q >= 1");
    if (!q.fits_ulong_p()) throw PreconditionError("liouville bound exponent too large");
    unsigned long e = q.get_ui();
    BigInt qq;
    mpz_pow_ui(qq.get_mpz_t(), q.get_mpz_t(), e);
    BigInt den = qq << e;
    return Rational(BigInt(1), den);
}

BigInt iterate_for_offset(const RationalAngle& a, const BigInt& m) {
    if (a.q() == 1) return BigInt(0);
    BigInt inv;
    mpz_invert(inv.get_mpz_t(), a.p().get_mpz_t(), a.q().get_mpz_t());
    return mod_floor(inv * m, a.q());
}

RationalAngle last_convergent(const RationalAngle& a, const BigInt& bound) {
    if (bound < 1) throw PreconditionError("convergent bound must be positive");
    // h/k recurrences on the expansion of p/q, stopping before k exceeds the bound.
    BigInt x = a.p(), y = a.q();
    BigInt h2 = 0, h1 = 1, k2 = 1, k1 = 0;
    BigInt best_h = 0, best_k = 1;
    while (y != 0) {
        BigInt t, r;
        mpz_fdiv_qr(t.get_mpz_t(), r.get_mpz_t(), x.get_mpz_t(), y.get_mpz_t());
        BigInt h = t * h1 + h2, k = t * k1 + k2;
        if (k > bound) break;
        best_h = h;
        best_k = k;
        h2 = h1; h1 = h; k2 = k1; k1 = k;
        x = y;
        y = r;
    }
    return RationalAngle(best_h, best_k);
}

double log2_abs(const Rational& r) {
    if (r == 0) throw PreconditionError("log2 of zero");
    long en = 0, ed = 0;
    double mn = mpz_get_d_2exp(&en, r.get_num().get_mpz_t());
    double md = mpz_get_d_2exp(&ed, r.get_den().get_mpz_t());
    return std::log2(std::fabs(mn)) - std::log2(md) + (double)(en - ed);
}

Rational unit_fraction_below(double x) {
    if (!(x > 0)) throw PreconditionError("unit fraction of a non-positive bound");
    if (x >= 1) return Rational(1);
    double m = std::ceil(1.0 / x);
    BigInt den;
    mpz_set_d(den.get_mpz_t(), m);
    while (Rational(BigInt(1), den) > Rational(x)) den += 1;
    return Rational(BigInt(1), den);
}

std::string rational_str(const Rational& r) {
    return r.get_num().get_str() + "/" + r.get_den().get_str();
}

Rational parse_rational(const std::string& s) {
    auto slash = s.find('/');
    try {
        if (slash == std::string::npos) return Rational(BigInt(s));
        BigInt p(s.substr(0, slash)), q(s.substr(slash + 1));
        if (q == 0) throw ParseError("zero denominator: " + s);
        Rational r(p, q);
        r.canonicalize();
        return r;
    } catch (const std::invalid_argument&) {
        throw ParseError("not a rational: " + s);
    }
}

double to_double(const Rational& r) { return (double)to_quad(r); }

quad to_quad(const Rational& r) {
    BigInt whole;
    mpz_fdiv_q(whole.get_mpz_t(), r.get_num().get_mpz_t(), r.get_den().get_mpz_t());
    quad w = (quad)whole.get_d();
    return w + frac_quad(r.get_num(), r.get_den());
}

}  // namespace abc
