#include "abc/complex_diagnostics.hpp"

#include "abc/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace abc {

namespace {

using E4 = Eigen::Matrix4d;
using CM4 = Eigen::Matrix4cd;

E4 to_eigen(const Mat4& a) {
    E4 m;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m(r, c) = a[r * 4 + c];
    return m;
}

Mat4 from_eigen(const E4& m) {
    Mat4 a{};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) a[r * 4 + c] = m(r, c);
    return a;
}

CM4 to_eigen(const CMat4& a) {
    CM4 m;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m(r, c) = a[r * 4 + c];
    return m;
}

CMat4 from_eigen(const CM4& m) {
    CMat4 a{};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) a[r * 4 + c] = m(r, c);
    return a;
}

Vec4 shifted(const Vec4& v, int c, double d) {
    Vec4 w = v;
    w[c] += d;
    return w;
}

Frame4Point at(const Vec4& v) { return Frame4Point(v); }

double max_abs(const CM4& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

Frame4Point::Frame4Point(const Vec4& c) : v(c) { v[0] = wrap01(v[0]); }

Frame4Point::Frame4Point(const ComplexCylinderPoint& p)
    : v{wrap01(p.theta.real()), p.theta.imag(), p.y.real(), p.y.imag()} {}

ComplexCylinderPoint Frame4Point::point() const { return ComplexCylinderPoint({v[0], v[1]}, {v[2], v[3]}); }

Map4 as_map4(const MapExpr& m, const FlowConfig& cfg) {
    return [m, cfg](const Vec4& v) {
        ComplexCylinderPoint q = m(Frame4Point(v).point(), cfg);
        return Vec4{q.theta.real(), q.theta.imag(), q.y.real(), q.y.imag()};
    };
}

Map4 as_map4(std::function<ComplexCylinderPoint(const ComplexCylinderPoint&)> f) {
    return [f = std::move(f)](const Vec4& v) {
        ComplexCylinderPoint q = f(Frame4Point(v).point());
        return Vec4{q.theta.real(), q.theta.imag(), q.y.real(), q.y.imag()};
    };
}

Mat4 jacobian4(const Map4& h, const Frame4Point& p, double step) {
    Mat4 out{};
    for (int c = 0; c < 4; ++c) {
        Vec4 xp = shifted(p.v, c, step), xm = shifted(p.v, c, -step);
        Vec4 a = h(xp), b = h(xm);
        const double width = xp[c] - xm[c];  // representable step, so the identity differentiates exactly
        double d0 = a[0] - b[0];
        d0 -= std::round(d0);
        out[0 * 4 + c] = d0 / width;
        for (int r = 1; r < 4; ++r) out[r * 4 + c] = (a[r] - b[r]) / width;
    }
    return out;
}

// Two-step Richardson removes the O(step^2) term of central differences.
static E4 richardson_jacobian(const Map4& h, const Frame4Point& p, double step) {
    return (4 * to_eigen(jacobian4(h, p, step / 2)) - to_eigen(jacobian4(h, p, step))) / 3;
}

Mat4 standard_J() {
    Mat4 j{};
    j[0 * 4 + 1] = -1;
    j[1 * 4 + 0] = 1;
    j[2 * 4 + 3] = -1;
    j[3 * 4 + 2] = 1;
    return j;
}

CMat4 standard_form() {
    const cplx I(0, 1);
    Eigen::Vector4cd a(1, I, 0, 0), b(0, 0, 1, I);
    CM4 w = 0.5 * (a * b.transpose() - b * a.transpose());
    return from_eigen(w);
}

Mat4 sigma_differential() {
    Mat4 d{};
    d[0] = 1;
    d[5] = -1;
    d[10] = 1;
    d[15] = -1;
    return d;
}

double op_norm(const Mat4& a) {
    Eigen::JacobiSVD<E4> svd(to_eigen(a));
    return svd.singularValues()(0);
}

double form_norm(const CMat4& w) {
    double m = 0;
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b) m = std::max(m, std::abs(w[a * 4 + b]));
    return m;
}

StructureSample pullback_structure(const Map4& h, const Frame4Point& p, double step) {
    E4 dh = richardson_jacobian(h, p, step);
    Eigen::JacobiSVD<E4> svd(dh);
    const auto& s = svd.singularValues();
    if (!(s(3) > 0) || s(0) / s(3) > 1e6) throw SingularJacobian("pullback: Jacobian condition number above 1e6");
    E4 j = dh.inverse() * to_eigen(standard_J()) * dh;
    StructureSample out;
    out.at = p;
    out.J = from_eigen(j);
    out.square_residual = op_norm(from_eigen(E4(j * j + E4::Identity())));
    return out;
}

FormSample pullback_form(const Map4& h, const Frame4Point& p, double step) {
    CM4 dh = to_eigen(jacobian4(h, p, step)).cast<cplx>();
    FormSample out;
    out.at = p;
    out.W = from_eigen(CM4(dh.transpose() * to_eigen(standard_form()) * dh));
    return out;
}

JField pullback_structure_field(const Map4& h, double step) {
    return [h, step](const Frame4Point& p) { return pullback_structure(h, p, step).J; };
}

FormField pullback_form_field(const Map4& h, double step) {
    return [h, step](const Frame4Point& p) { return pullback_form(h, p, step).W; };
}

JField constant_field(const Mat4& J) {
    return [J](const Frame4Point&) { return J; };
}

double nijenhuis_residual(const JField& J, const Frame4Point& p, double step) {
    // dJ[c] = d/dx_c of the matrix field at p
    std::array<E4, 4> dJ;
    for (int c = 0; c < 4; ++c)
        dJ[c] = (to_eigen(J(at(shifted(p.v, c, step)))) - to_eigen(J(at(shifted(p.v, c, -step))))) / (2 * step);
    E4 j = to_eigen(J(p));
    double worst = 0;
    for (int a = 0; a < 4; ++a) {
        for (int b = a + 1; b < 4; ++b) {
            // coordinate fields commute; [J e_a, e_b] = -d_b(J e_a), [e_a, J e_b] = d_a(J e_b)
            Eigen::Vector4d mixed = -dJ[b].col(a) + dJ[a].col(b);
            Eigen::Vector4d both = Eigen::Vector4d::Zero();
            for (int c = 0; c < 4; ++c) both += j(c, a) * dJ[c].col(b) - j(c, b) * dJ[c].col(a);
            Eigen::Vector4d n = j * mixed - both;
            worst = std::max(worst, n.norm());
        }
    }
    return worst;
}

HoloFormResidual holomorphic_form_residual(const FormField& W, const JField& J, const Frame4Point& p, double step) {
    const cplx I(0, 1);
    HoloFormResidual out;
    CM4 w = to_eigen(W(p));
    CM4 jt = to_eigen(J(p)).transpose().cast<cplx>();
    out.type = max_abs(CM4(jt * w - I * w));

    std::array<CM4, 4> dW;
    for (int c = 0; c < 4; ++c)
        dW[c] = (to_eigen(W(at(shifted(p.v, c, step)))) - to_eigen(W(at(shifted(p.v, c, -step))))) / (2 * step);
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b)
            for (int c = b + 1; c < 4; ++c) {
                cplx d = dW[a](b, c) - dW[b](a, c) + dW[c](a, b);
                out.closed = std::max(out.closed, std::abs(d));
            }
    return out;
}

double sigma_map_residual(const Map4& h, const Frame4Point& p) {
    Vec4 s{p.v[0], -p.v[1], p.v[2], -p.v[3]};
    Vec4 a = h(p.v), b = h(s);
    double d0 = a[0] - b[0];
    d0 -= std::round(d0);
    return std::max({std::fabs(d0), std::fabs(-a[1] - b[1]), std::fabs(a[2] - b[2]), std::fabs(-a[3] - b[3])});
}

double sigma_structure_residual(const JField& J, const Frame4Point& p) {
    Frame4Point s(Vec4{p.v[0], -p.v[1], p.v[2], -p.v[3]});
    E4 ds = to_eigen(sigma_differential());
    E4 r = ds * to_eigen(J(s)) * ds + to_eigen(J(p));  // D sigma is its own inverse
    return op_norm(from_eigen(r));
}

double cauchy_riemann_residual(const Map4& h, const Frame4Point& p, double step) {
    E4 dh = richardson_jacobian(h, p, step);
    E4 jo = to_eigen(standard_J());
    return op_norm(from_eigen(E4(dh * jo - jo * dh)));
}

double richardson_slope(const std::vector<double>& steps, const std::vector<double>& residuals) {
    if (steps.size() != residuals.size() || steps.size() < 2)
        throw PreconditionError("richardson_slope: need at least two matching samples");
    const double tiny = 1e-300;
    double n = static_cast<double>(steps.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        double x = std::log(steps[i]), y = std::log(std::max(residuals[i], tiny));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double nested_roundoff_floor(double step) {
    return 16 * std::numeric_limits<double>::epsilon() / (step * step);
}

DecaySlope decay_slope(const std::vector<double>& steps, const std::vector<double>& residuals) {
    if (steps.size() != residuals.size()) throw PreconditionError("decay_slope: size mismatch");
    std::vector<double> s, r;
    for (std::size_t i = 0; i < steps.size(); ++i)
        if (residuals[i] > nested_roundoff_floor(steps[i])) {
            s.push_back(steps[i]);
            r.push_back(residuals[i]);
        }
    DecaySlope d;
    d.resolved = s.size();
    if (!d.below_roundoff()) d.slope = richardson_slope(s, r);
    return d;
}

double structure_distance(const JField& a, const JField& b, const std::vector<Frame4Point>& points) {
    double d = 0;
    for (const auto& p : points) {
        Mat4 x = a(p), y = b(p);
        for (int i = 0; i < 16; ++i) x[i] -= y[i];
        d = std::max(d, op_norm(x));
    }
    return d;
}

double form_distance(const FormField& a, const FormField& b, const std::vector<Frame4Point>& points) {
    double d = 0;
    for (const auto& p : points) {
        CMat4 x = a(p), y = b(p);
        for (int i = 0; i < 16; ++i) x[i] -= y[i];
        d = std::max(d, form_norm(x));
    }
    return d;
}

ConvergenceReport convergence_tracker(const std::vector<JField>& J, const std::vector<FormField>& Omega,
                                      const std::vector<Frame4Point>& points) {
    if (J.size() < 2 || J.size() != Omega.size())
        throw PreconditionError("convergence_tracker: need at least two stages of matching fields");
    ConvergenceReport rep;
    for (std::size_t n = 1; n < J.size(); ++n) {
        double dj = structure_distance(J[n], J[n - 1], points);
        double dw = form_distance(Omega[n], Omega[n - 1], points);
        double budget = std::ldexp(1.0, -static_cast<int>(n));
        bool ok = dj < budget && dw < budget;
        rep.dJ.push_back(dj);
        rep.dOmega.push_back(dw);
        rep.within_budget.push_back(ok);
        if (!ok && rep.first_breach < 0) rep.first_breach = static_cast<long>(n);
    }
    return rep;
}

JField twisted_structure(double strength) {
    return [strength](const Frame4Point& p) {
        // conjugate J_o by a rotation of the (Im theta, Re y) plane whose angle varies with Re y
        double a = strength * p.v[2], c = std::cos(a), s = std::sin(a);
        E4 r = E4::Identity();
        r(1, 1) = c;
        r(1, 2) = -s;
        r(2, 1) = s;
        r(2, 2) = c;
        return from_eigen(E4(r * to_eigen(standard_J()) * r.transpose()));
    };
}

std::vector<Frame4Point> random_domain_points(double rho, int count, std::uint64_t seed, double margin) {
    double cap = 3.0 * rho - margin;
    if (!(cap > 2.0) || count < 0) throw PreconditionError("random_domain_points: empty domain");
    double smax = std::acosh(cap / 2.0) / (4 * std::numbers::pi);
    double ymax = std::sqrt(cap - 2.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0), us(-smax, smax), uy(-ymax, ymax);
    std::vector<Frame4Point> out;
    out.reserve(count);
    while (static_cast<int>(out.size()) < count) {
        Vec4 v{u01(rng), us(rng), uy(rng), uy(rng)};
        double s = 2 * std::cosh(4 * std::numbers::pi * v[1]);
        if (s + v[2] * v[2] + v[3] * v[3] <= cap) out.emplace_back(v);
    }
    return out;
}

}  // namespace abc
