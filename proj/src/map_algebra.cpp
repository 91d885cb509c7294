#include "abc/map_algebra.hpp"

#include "abc/errors.hpp"

#include <quadmath.h>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace abc {

namespace {

constexpr long double kPiL = 3.141592653589793238462643383279502884L;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void FlowConfig::validate() const {
    if (steps < 16) throw PreconditionError("integrator needs at least 16 steps per unit time");
    if (!(tol > 0 && tol <= 1e-12)) throw PreconditionError("Newton tolerance must lie in (0, 1e-12]");
}

quad wrap01q(quad t) {
    quad r = t - floorq(t);
    return r >= 1 ? (quad)0 : r;
}

quad signed_gap(quad a, quad b) {
    quad d = wrap01q(a - b);
    return d > (quad)0.5 ? d - 1 : d;
}

XPoint::XPoint(quad t, long double y) : theta(wrap01q(t)), y(y) {}

XPoint::XPoint(const CylinderPoint& p) : theta(wrap01q((quad)p.theta)), y(p.y) {}

CylinderPoint XPoint::to_cylinder() const { return {(double)theta, (double)y}; }

double xdistance(const XPoint& a, const XPoint& b) {
    double dt = (double)fabsq(signed_gap(a.theta, b.theta));
    return std::max(dt, (double)(0.5L * fabsl(a.y - b.y)));
}

struct MapExpr::Node {
    Kind kind = Kind::Compose;
    bool exact = false;
    RationalAngle alpha;
    double real_alpha = 0;
    quad alpha_q = 0;
    std::vector<double> coeffs;
    std::vector<TrigTerm> terms;
    double K = 0;
    std::uint64_t freq = 1;
    int steps = 256;
    std::vector<MapExpr> parts;
    bool flow_inside = false;
};

MapExpr MapExpr::identity() { return compose(std::vector<MapExpr>{}); }

MapExpr MapExpr::rotation(const RationalAngle& a) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Rotation;
    n->exact = true;
    n->alpha = a;
    n->alpha_q = a.to_quad();
    n->real_alpha = (double)n->alpha_q;
    return MapExpr(n);
}

MapExpr MapExpr::rotation(double a) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Rotation;
    n->real_alpha = a;
    n->alpha_q = a;
    return MapExpr(n);
}

MapExpr MapExpr::shear(std::vector<double> coeffs) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Shear;
    n->coeffs = std::move(coeffs);
    return MapExpr(n);
}

MapExpr MapExpr::twist(std::vector<TrigTerm> terms) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Twist;
    n->terms = std::move(terms);
    return MapExpr(n);
}

MapExpr MapExpr::ham_flow(double K, std::uint64_t freq, int steps) {
    if (freq == 0) throw PreconditionError("flow frequency must be positive");
    if (steps < 1) throw PreconditionError("flow needs a positive step count");
    auto n = std::make_shared<Node>();
    n->kind = Kind::HamFlow;
    n->K = K;
    n->freq = freq;
    n->steps = steps;
    n->flow_inside = true;
    return MapExpr(n);
}

MapExpr MapExpr::compose(std::vector<MapExpr> parts) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Compose;
    for (const auto& p : parts) n->flow_inside = n->flow_inside || p.has_flow();
    n->parts = std::move(parts);
    return MapExpr(n);
}

MapExpr MapExpr::compose(const MapExpr& outer, const MapExpr& inner) { return compose({outer, inner}); }

MapExpr MapExpr::inverse() const {
    if (node_->kind == Kind::Inverse) return node_->parts.front();
    auto n = std::make_shared<Node>();
    n->kind = Kind::Inverse;
    n->parts = {*this};
    n->flow_inside = node_->flow_inside;
    return MapExpr(n);
}

MapExpr::Kind MapExpr::kind() const { return node_->kind; }
bool MapExpr::has_flow() const { return node_->flow_inside; }
bool MapExpr::exact_angle() const { return node_->exact; }
const RationalAngle& MapExpr::angle() const { return node_->alpha; }
double MapExpr::real_angle() const { return node_->real_alpha; }
const std::vector<double>& MapExpr::shear_coeffs() const { return node_->coeffs; }
const std::vector<TrigTerm>& MapExpr::twist_terms() const { return node_->terms; }
double MapExpr::flow_K() const { return node_->K; }
std::uint64_t MapExpr::flow_freq() const { return node_->freq; }
int MapExpr::flow_steps() const { return node_->steps; }
const std::vector<MapExpr>& MapExpr::parts() const { return node_->parts; }

// ---------------------------------------------------------------------------
// Evaluation

namespace {

template <class T>
T poly(const std::vector<double>& c, T y) {
    T acc = 0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * y + (T)*it;
    return acc;
}

template <class T>
T dpoly(const std::vector<double>& c, T y) {
    T acc = 0;
    for (std::size_t i = c.size(); i-- > 1;) acc = acc * y + (T)(c[i] * (double)i);
    return acc;
}

long double trig_sum(const std::vector<TrigTerm>& terms, quad theta) {
    long double s = 0;
    for (const auto& t : terms) {
        long double ph = (long double)wrap01q((quad)t.k * theta);
        s += t.a * cosl(2 * kPiL * ph) + t.b * sinl(2 * kPiL * ph);
    }
    return s;
}

long double dtrig_sum(const std::vector<TrigTerm>& terms, quad theta) {
    long double s = 0;
    for (const auto& t : terms) {
        long double ph = (long double)wrap01q((quad)t.k * theta);
        s += 2 * kPiL * t.k * (-t.a * sinl(2 * kPiL * ph) + t.b * cosl(2 * kPiL * ph));
    }
    return s;
}

cplx trig_sum(const std::vector<TrigTerm>& terms, cplx theta) {
    cplx s = 0;
    for (const auto& t : terms) {
        cplx ph = (double)t.k * theta;
        ph -= std::floor(ph.real());
        s += t.a * std::cos(kTwoPi * ph) + t.b * std::sin(kTwoPi * ph);
    }
    return s;
}

// Vector field of A (1 - y^2) cos(2 pi phi) in phase coordinates, with the
// factor 2 coming from the form (1/2) dtheta ^ dy.
template <class T>
struct PhaseField {
    T A;
    void eval(T phi, T y, T& fphi, T& fy, T* d) const {
        const T pi = T(kPiL), one = T(1);
        T c = std::cos(T(2) * pi * phi), s = std::sin(T(2) * pi * phi);
        T w = one - y * y;
        fphi = T(-4) * A * y * c;
        fy = T(4) * pi * A * w * s;
        if (d) {
            d[0] = T(8) * pi * A * y * s;
            d[1] = T(-4) * A * c;
            d[2] = T(8) * pi * pi * A * w * c;
            d[3] = T(-8) * pi * A * y * s;
        }
    }
};

template <class T>
bool finite_val(const T& v) {
    if constexpr (std::is_same_v<T, cplx>) return std::isfinite(v.real()) && std::isfinite(v.imag());
    else return std::isfinite((double)v);
}

template <class T>
double mag(const T& v) {
    if constexpr (std::is_same_v<T, cplx>) return std::abs(v);
    else return (double)fabsl((long double)v);
}

// Implicit midpoint in phase coordinates. When jac is non-null it receives the
// derivative of the discrete map (product of Cayley factors).
template <class T>
void midpoint_flow(T A, T& phi, T& y, int steps, bool backward, const FlowConfig& cfg, T* jac) {
    PhaseField<T> F{A};
    const T one = T(1), half = T(0.5);
    T h = T(backward ? -1.0 : 1.0) / T(steps);
    T dphi_prev = T(0), dy_prev = T(0), dphi_pp = T(0), dy_pp = T(0);
    if (jac) {
        jac[0] = one; jac[1] = T(0); jac[2] = T(0); jac[3] = one;
    }
    for (int s = 0; s < steps; ++s) {
        T f0, f1;
        if (s == 0) {
            F.eval(phi, y, f0, f1, nullptr);
            dphi_prev = h * f0;
            dy_prev = h * f1;
            dphi_pp = dphi_prev;
            dy_pp = dy_prev;
        }
        // linear extrapolation of the increment
        T p1 = phi + T(2) * dphi_prev - dphi_pp, y1 = y + T(2) * dy_prev - dy_pp;
        T d[4];
        bool ok = false;
        for (int it = 0; it < cfg.max_newton; ++it) {
            T mp = (phi + p1) * half, my = (y + y1) * half;
            F.eval(mp, my, f0, f1, d);
            T g0 = p1 - phi - h * f0, g1 = y1 - y - h * f1;
            T hh = h * half;
            T a = one - hh * d[0], b = -hh * d[1], c = -hh * d[2], e = one - hh * d[3];
            T det = a * e - b * c;
            T s0 = (e * g0 - b * g1) / det, s1 = (a * g1 - c * g0) / det;
            p1 -= s0;
            y1 -= s1;
            if (!finite_val(p1) || !finite_val(y1)) break;
            if (std::max(mag(s0), mag(s1)) <= cfg.tol) {
                ok = true;
                break;
            }
        }
        if (!ok) throw IntegratorError("implicit midpoint solve did not converge");
        if (jac) {
            T mp = (phi + p1) * half, my = (y + y1) * half;
            F.eval(mp, my, f0, f1, d);
            // (I - h/2 DF)^-1 (I + h/2 DF)
            T hh = h * half;
            T a = one - hh * d[0], b = -hh * d[1], c = -hh * d[2], e = one - hh * d[3];
            T det = a * e - b * c;
            T pa = one + hh * d[0], pb = hh * d[1], pc = hh * d[2], pe = one + hh * d[3];
            T m0 = (e * pa - b * pc) / det, m1 = (e * pb - b * pe) / det;
            T m2 = (a * pc - c * pa) / det, m3 = (a * pe - c * pb) / det;
            T j0 = m0 * jac[0] + m1 * jac[2], j1 = m0 * jac[1] + m1 * jac[3];
            T j2 = m2 * jac[0] + m3 * jac[2], j3 = m2 * jac[1] + m3 * jac[3];
            jac[0] = j0; jac[1] = j1; jac[2] = j2; jac[3] = j3;
        }
        dphi_pp = dphi_prev;
        dy_pp = dy_prev;
        dphi_prev = p1 - phi;
        dy_prev = y1 - y;
        phi = p1;
        y = y1;
    }
}

}  // namespace

struct Eval {
    static XPoint real(const MapExpr::Node& n, XPoint p, bool inv, const FlowConfig& cfg) {
        using K = MapExpr::Kind;
        switch (n.kind) {
            case K::Rotation:
                return XPoint(p.theta + (inv ? -n.alpha_q : n.alpha_q), p.y);
            case K::Shear: {
                long double g = poly<long double>(n.coeffs, p.y);
                return XPoint(p.theta + (inv ? -(quad)g : (quad)g), p.y);
            }
            case K::Twist: {
                long double t = trig_sum(n.terms, p.theta);
                return XPoint(p.theta, inv ? p.y - t : p.y + t);
            }
            case K::HamFlow: {
                quad f = (quad)n.freq;
                quad ft = f * p.theta;
                quad ph_q = ft - floorq(ft);
                double phi0 = (double)ph_q, phi = phi0, y = (double)p.y;
                midpoint_flow<double>(n.K * (double)n.freq, phi, y, n.steps, inv, cfg, nullptr);
                return XPoint(p.theta + (quad)(phi - phi0) / f, y);
            }
            case K::Compose: {
                if (!inv)
                    for (auto it = n.parts.rbegin(); it != n.parts.rend(); ++it) p = real(*it->node_, p, false, cfg);
                else
                    for (const auto& part : n.parts) p = real(*part.node_, p, true, cfg);
                return p;
            }
            case K::Inverse:
                return real(*n.parts.front().node_, p, !inv, cfg);
        }
        return p;
    }

    static ComplexCylinderPoint cx(const MapExpr::Node& n, ComplexCylinderPoint p, bool inv, const FlowConfig& cfg) {
        using K = MapExpr::Kind;
        double sg = inv ? -1.0 : 1.0;
        switch (n.kind) {
            case K::Rotation:
                return {p.theta + sg * n.real_alpha, p.y};
            case K::Shear:
                return {p.theta + sg * poly<cplx>(n.coeffs, p.y), p.y};
            case K::Twist:
                return {p.theta, p.y + sg * trig_sum(n.terms, p.theta)};
            case K::HamFlow: {
                double f = (double)n.freq;
                cplx phi0 = f * p.theta;
                phi0 -= std::floor(phi0.real());
                cplx phi = phi0, y = p.y;
                midpoint_flow<cplx>(cplx(n.K * f), phi, y, n.steps, inv, cfg, nullptr);
                return {p.theta + (phi - phi0) / f, y};
            }
            case K::Compose: {
                if (!inv)
                    for (auto it = n.parts.rbegin(); it != n.parts.rend(); ++it) p = cx(*it->node_, p, false, cfg);
                else
                    for (const auto& part : n.parts) p = cx(*part.node_, p, true, cfg);
                return p;
            }
            case K::Inverse:
                return cx(*n.parts.front().node_, p, !inv, cfg);
        }
        return p;
    }

    // Exact derivative along the evaluation; p is advanced to the image.
    static Mat2 jac(const MapExpr::Node& n, XPoint& p, bool inv, const FlowConfig& cfg, double& det) {
        using K = MapExpr::Kind;
        switch (n.kind) {
            case K::Rotation:
                p = real(n, p, inv, cfg);
                return {1, 0, 0, 1};
            case K::Shear: {
                double g1 = (double)dpoly<long double>(n.coeffs, p.y);
                p = real(n, p, inv, cfg);
                return {1, inv ? -g1 : g1, 0, 1};
            }
            case K::Twist: {
                if (!inv) {
                    double t1 = (double)dtrig_sum(n.terms, p.theta);
                    p = real(n, p, inv, cfg);
                    return {1, 0, t1, 1};
                }
                p = real(n, p, inv, cfg);
                double t1 = (double)dtrig_sum(n.terms, p.theta);
                return {1, 0, -t1, 1};
            }
            case K::HamFlow: {
                quad f = (quad)n.freq;
                quad ft = f * p.theta;
                double phi0 = (double)(ft - floorq(ft)), phi = phi0, y = (double)p.y;
                double jl[4];
                midpoint_flow<double>(n.K * (double)n.freq, phi, y, n.steps, inv, cfg, jl);
                det *= jl[0] * jl[3] - jl[1] * jl[2];
                p = XPoint(p.theta + (quad)(phi - phi0) / f, y);
                double fd = (double)n.freq;
                return {jl[0], jl[1] / fd, jl[2] * fd, jl[3]};
            }
            case K::Compose: {
                Mat2 acc{1, 0, 0, 1};
                auto step = [&](const MapExpr& part, bool pinv) {
                    Mat2 m = jac(*part.node_, p, pinv, cfg, det);
                    acc = {m[0] * acc[0] + m[1] * acc[2], m[0] * acc[1] + m[1] * acc[3],
                           m[2] * acc[0] + m[3] * acc[2], m[2] * acc[1] + m[3] * acc[3]};
                };
                if (!inv)
                    for (auto it = n.parts.rbegin(); it != n.parts.rend(); ++it) step(*it, false);
                else
                    for (const auto& part : n.parts) step(part, true);
                return acc;
            }
            case K::Inverse:
                return jac(*n.parts.front().node_, p, !inv, cfg, det);
        }
        return {1, 0, 0, 1};
    }
};

XPoint MapExpr::apply(const XPoint& p, const FlowConfig& cfg) const { return Eval::real(*node_, p, false, cfg); }

Mat2 analytic_jacobian(const MapExpr& m, const XPoint& p, const FlowConfig& cfg) {
    XPoint x = p;
    double det = 1;
    return Eval::jac(*m.node_, x, false, cfg, det);
}

double analytic_det(const MapExpr& m, const XPoint& p, const FlowConfig& cfg) {
    XPoint x = p;
    double det = 1;
    Eval::jac(*m.node_, x, false, cfg, det);
    return det;
}

CylinderPoint MapExpr::operator()(const CylinderPoint& p, const FlowConfig& cfg) const {
    return apply(XPoint(p), cfg).to_cylinder();
}

ComplexCylinderPoint MapExpr::operator()(const ComplexCylinderPoint& p, const FlowConfig& cfg) const {
    return Eval::cx(*node_, p, false, cfg);
}

double ham_energy(double K, std::uint64_t freq, double theta, double y) {
    quad ph = wrap01q((quad)freq * (quad)theta);
    return K * (1 - y * y) * std::cos(kTwoPi * (double)ph);
}

CylinderPoint ham_time_one(double K, std::uint64_t freq, const CylinderPoint& p, const FlowConfig& cfg) {
    cfg.validate();
    return MapExpr::ham_flow(K, freq, cfg.steps)(p, cfg);
}

ComplexCylinderPoint ham_time_one(double K, std::uint64_t freq, const ComplexCylinderPoint& p,
                                  const FlowConfig& cfg) {
    cfg.validate();
    return MapExpr::ham_flow(K, freq, cfg.steps)(p, cfg);
}

// ---------------------------------------------------------------------------
// Jacobians

Mat2 jacobian(const MapExpr& m, const CylinderPoint& p, double step, const FlowConfig& cfg) {
    if (!(step > 0)) throw PreconditionError("finite-difference step must be positive");
    if (std::fabs(p.y) > 1.0 - step && std::fabs(p.y) <= 1.0) throw RangeError("point within one step of the boundary");
    Mat2 out{};
    for (int c = 0; c < 2; ++c) {
        XPoint a(p), b(p);
        if (c == 0) {
            a.theta = wrap01q(a.theta + (quad)step);
            b.theta = wrap01q(b.theta - (quad)step);
        } else {
            a.y += step;
            b.y -= step;
        }
        XPoint fa = m.apply(a, cfg), fb = m.apply(b, cfg);
        out[0 + c] = (double)(signed_gap(fa.theta, fb.theta) / (quad)(2 * step));
        out[2 + c] = (double)((fa.y - fb.y) / (2.0L * step));
    }
    return out;
}

Mat2 jacobian_richardson(const MapExpr& m, const CylinderPoint& p, double step, const FlowConfig& cfg) {
    Mat2 a = jacobian(m, p, step, cfg), b = jacobian(m, p, step / 2, cfg);
    Mat2 out;
    for (int i = 0; i < 4; ++i) out[i] = (4 * b[i] - a[i]) / 3;
    return out;
}

Mat2 analytic_jacobian(const MapExpr& m, const CylinderPoint& p, const FlowConfig& cfg) {
    return analytic_jacobian(m, XPoint(p), cfg);
}

Mat4 jacobian4(const MapExpr& m, const ComplexCylinderPoint& p, double step, const FlowConfig& cfg) {
    Mat4 out{};
    for (int c = 0; c < 4; ++c) {
        ComplexCylinderPoint a = p, b = p;
        cplx dir = (c % 2 == 0) ? cplx(step, 0) : cplx(0, step);
        if (c < 2) {
            a.theta += dir;
            b.theta -= dir;
        } else {
            a.y += dir;
            b.y -= dir;
        }
        ComplexCylinderPoint fa = m(a, cfg), fb = m(b, cfg);
        cplx dth = fa.theta - fb.theta;
        dth -= std::round(dth.real());
        cplx dy = fa.y - fb.y;
        out[0 * 4 + c] = dth.real() / (2 * step);
        out[1 * 4 + c] = dth.imag() / (2 * step);
        out[2 * 4 + c] = dy.real() / (2 * step);
        out[3 * 4 + c] = dy.imag() / (2 * step);
    }
    return out;
}

double det2(const Mat2& a) { return a[0] * a[3] - a[1] * a[2]; }

double metric_norm(const Mat2& a) {
    // Rescale y by 1/2 so the metric becomes the max norm, then take the induced inf-norm.
    double r0 = std::fabs(a[0]) + 2 * std::fabs(a[1]);
    double r1 = 0.5 * std::fabs(a[2]) + std::fabs(a[3]);
    return std::max(r0, r1);
}

CylinderPoint grid_point(int i, int j, int n) {
    return {(double)i / n, -1.0 + 2.0 * j / (n - 1)};
}

double commutation_residual(const MapExpr& m, const RationalAngle& alpha, int grid_n, const FlowConfig& cfg) {
    if (grid_n < 8) throw PreconditionError("grid_n must be at least 8");
    MapExpr rot = MapExpr::rotation(alpha);
    double worst = 0;
    for (int i = 0; i < grid_n; ++i)
        for (int j = 0; j < grid_n; ++j) {
            XPoint x(grid_point(i, j, grid_n));
            XPoint a = m.apply(rot.apply(x, cfg), cfg);
            XPoint b = rot.apply(m.apply(x, cfg), cfg);
            worst = std::max(worst, xdistance(a, b));
        }
    return worst;
}

// ---------------------------------------------------------------------------
// Serialisation: one node per line, prefix order.

namespace {

void write_node(const MapExpr& m, std::ostringstream& os) {
    using K = MapExpr::Kind;
    switch (m.kind()) {
        case K::Rotation:
            if (m.exact_angle()) os << "rotation exact " << m.angle().str() << "\n";
            else os << "rotation real " << fmt17(m.real_angle()) << "\n";
            break;
        case K::Shear:
            os << "shear " << m.shear_coeffs().size();
            for (double c : m.shear_coeffs()) os << " " << fmt17(c);
            os << "\n";
            break;
        case K::Twist:
            os << "twist " << m.twist_terms().size();
            for (const auto& t : m.twist_terms()) os << " " << t.k << " " << fmt17(t.a) << " " << fmt17(t.b);
            os << "\n";
            break;
        case K::HamFlow:
            os << "hamflow " << fmt17(m.flow_K()) << " " << m.flow_freq() << " " << m.flow_steps() << "\n";
            break;
        case K::Compose:
            os << "compose " << m.parts().size() << "\n";
            for (const auto& p : m.parts()) write_node(p, os);
            break;
        case K::Inverse:
            os << "inverse\n";
            write_node(m.parts().front(), os);
            break;
    }
}

MapExpr read_node(std::istringstream& in) {
    std::string line;
    while (std::getline(in, line) && line.find_first_not_of(" \t\r") == std::string::npos) {
    }
    if (line.empty()) throw ParseError("map expression ended early");
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    auto need = [&](bool ok) {
        if (!ok) throw ParseError("malformed map line: " + line);
    };
    if (tag == "rotation") {
        std::string mode, val;
        ls >> mode >> val;
        need(!ls.fail());
        if (mode == "exact") return MapExpr::rotation(RationalAngle::parse(val));
        need(mode == "real");
        return MapExpr::rotation(std::stod(val));
    }
    if (tag == "shear") {
        std::size_t n = 0;
        ls >> n;
        std::vector<double> c(n);
        for (auto& v : c) ls >> v;
        need(!ls.fail());
        return MapExpr::shear(c);
    }
    if (tag == "twist") {
        std::size_t n = 0;
        ls >> n;
        std::vector<TrigTerm> t(n);
        for (auto& v : t) ls >> v.k >> v.a >> v.b;
        need(!ls.fail());
        return MapExpr::twist(t);
    }
    if (tag == "hamflow") {
        double K;
        std::uint64_t f;
        int s;
        ls >> K >> f >> s;
        need(!ls.fail());
        return MapExpr::ham_flow(K, f, s);
    }
    if (tag == "compose") {
        std::size_t n = 0;
        ls >> n;
        need(!ls.fail());
        std::vector<MapExpr> parts;
        for (std::size_t i = 0; i < n; ++i) parts.push_back(read_node(in));
        return MapExpr::compose(parts);
    }
    if (tag == "inverse") return read_node(in).inverse();
    throw ParseError("unknown map node '" + tag + "'");
}

}  // namespace

std::string MapExpr::serialize() const {
    std::ostringstream os;
    write_node(*this, os);
    return os.str();
}

MapExpr MapExpr::parse(const std::string& text) {
    std::istringstream in(text);
    return read_node(in);
}

}  // namespace abc
