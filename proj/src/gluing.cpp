#include "abc/gluing.hpp"

#include "abc/errors.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace abc {

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

// Representative of d mod 1 in (-1/2, 1/2]; a tie lands on +1/2.
double short_rep(double d) { return d - std::ceil(d - 0.5); }

double bump_e(double t) { return t > 0 ? std::exp(-1.0 / t) : 0.0; }

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

bool same_bits(const ComplexCylinderPoint& a, const ComplexCylinderPoint& b) {
    return same_bits(a.theta.real(), b.theta.real()) && same_bits(a.theta.imag(), b.theta.imag()) &&
           same_bits(a.y.real(), b.y.real()) && same_bits(a.y.imag(), b.y.imag());
}

// Richardson-combined central-difference Jacobian of a real cylinder map.
template <class F>
Mat2 real_jacobian(const F& f, double theta, double y, double step) {
    auto central = [&](double h) {
        CylinderPoint tp = f(CylinderPoint(theta + h, y)), tm = f(CylinderPoint(theta - h, y));
        CylinderPoint yp = f(CylinderPoint(theta, y + h)), ym = f(CylinderPoint(theta, y - h));
        Mat2 j{};
        j[0] = short_rep(tp.theta - tm.theta) / (2 * h);
        j[2] = (tp.y - tm.y) / (2 * h);
        j[1] = short_rep(yp.theta - ym.theta) / (2 * h);
        j[3] = (yp.y - ym.y) / (2 * h);
        return j;
    };
    Mat2 a = central(step), b = central(step / 2), out{};
    for (int i = 0; i < 4; ++i) out[i] = (4 * b[i] - a[i]) / 3;
    return out;
}

}  // namespace

double smooth_step(double t) {
    if (t <= 0) return 0;
    if (t >= 1) return 1;
    double a = bump_e(t), b = bump_e(1 - t);
    return a / (a + b);
}

double smooth_step_derivative(double t) {
    if (t <= 0 || t >= 1) return 0;
    double a = bump_e(t), b = bump_e(1 - t);
    double da = a / (t * t), db = b / ((1 - t) * (1 - t));
    return (da * b + a * db) / ((a + b) * (a + b));
}

BumpProfile::BumpProfile(double eta, double eps) : eta_(eta), eps_(eps) {
    if (!(eta > 0 && eta < eps && eps < 1)) throw ConfigError("bump: need 0 < eta < eps < 1");
    if (!(3 * eta < 1)) throw ConfigError("bump: need 3 eta < 1 for the correction plateau");
}

double BumpProfile::operator()(double y) const { return smooth_step((1 - eta_ - std::fabs(y)) / (eps_ - eta_)); }

double BumpProfile::derivative(double y) const {
    double s = smooth_step_derivative((1 - eta_ - std::fabs(y)) / (eps_ - eta_)) / (eps_ - eta_);
    return y >= 0 ? -s : s;
}

// ---------------------------------------------------------------- entire maps

EntireMapSpec::EntireMapSpec(std::vector<Leaf> leaves, std::uint64_t q) : leaves_(std::move(leaves)), q_(q) {
    for (std::size_t i = 0; i < leaves_.size(); ++i) {
        if (i > 0 && leaves_[i].twist == leaves_[i - 1].twist)
            throw PreconditionError("entire map: shears and twists must alternate");
        for (const auto& t : leaves_[i].terms) {
            if (t.k < 1) throw PreconditionError("entire map: twist frequencies must be positive");
            if (q_ > 0 && static_cast<std::uint64_t>(t.k) % q_ != 0)
                throw PreconditionError("entire map: twist frequency not a multiple of q");
        }
    }
}

EntireMapSpec EntireMapSpec::shear_twist(double s, double a, std::uint64_t k, std::uint64_t q) {
    Leaf sh, tw;
    sh.shear = {0.0, 0.0, s};
    tw.twist = true;
    tw.terms = {TrigTerm{static_cast<int>(k), 0.0, a}};
    return EntireMapSpec({sh, tw}, q);
}

bool EntireMapSpec::is_identity() const {
    for (const auto& l : leaves_) {
        for (double c : l.shear)
            if (c != 0) return false;
        for (const auto& t : l.terms)
            if (t.a != 0 || t.b != 0) return false;
    }
    return true;
}

EntireMapSpec EntireMapSpec::scaled(double t) const {
    EntireMapSpec out = *this;
    for (auto& l : out.leaves_) {
        for (double& c : l.shear) c *= t;
        for (auto& term : l.terms) {
            term.a *= t;
            term.b *= t;
        }
    }
    return out;
}

MapExpr EntireMapSpec::expr() const {
    std::vector<MapExpr> parts;
    for (const auto& l : leaves_) parts.push_back(l.twist ? MapExpr::twist(l.terms) : MapExpr::shear(l.shear));
    if (parts.empty()) return MapExpr::identity();
    return parts.size() == 1 ? parts.front() : MapExpr::compose(parts);
}

std::string EntireMapSpec::serialize() const {
    std::ostringstream os;
    os << expr().serialize();
    if (q_ > 0) os << " q=" << q_;
    return os.str();
}

namespace {

template <class T>
T poly(const std::vector<double>& c, T y) {
    T s = 0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) s = s * y + *it;
    return s;
}

double dpoly(const std::vector<double>& c, double y) {
    double s = 0;
    for (std::size_t i = c.size(); i-- > 1;) s = s * y + static_cast<double>(i) * c[i];
    return s;
}

template <class T>
T trig(const std::vector<TrigTerm>& terms, T theta) {
    T s = 0;
    for (const auto& t : terms) {
        T x = kTwoPi * static_cast<double>(t.k) * theta;
        s += t.a * std::cos(x) + t.b * std::sin(x);
    }
    return s;
}

double dtrig(const std::vector<TrigTerm>& terms, double theta) {
    double s = 0;
    for (const auto& t : terms) {
        double w = kTwoPi * t.k, x = w * theta;
        s += w * (-t.a * std::sin(x) + t.b * std::cos(x));
    }
    return s;
}

}  // namespace

CylinderPoint EntireMapSpec::operator()(const CylinderPoint& p) const {
    double th = p.theta, y = p.y;
    for (auto it = leaves_.rbegin(); it != leaves_.rend(); ++it) {
        if (it->twist)
            y += trig(it->terms, th);
        else
            th += poly(it->shear, y);
    }
    return CylinderPoint(th, y);
}

ComplexCylinderPoint EntireMapSpec::operator()(const ComplexCylinderPoint& p) const {
    cplx th = p.theta, y = p.y;
    for (auto it = leaves_.rbegin(); it != leaves_.rend(); ++it) {
        if (it->twist)
            y += trig(it->terms, th);
        else
            th += poly(it->shear, y);
    }
    return ComplexCylinderPoint(th, y);
}

Mat2 EntireMapSpec::jacobian(double theta, double y, double* dtheta, double* y_out) const {
    double th = theta;
    Mat2 j{1, 0, 0, 1};
    for (auto it = leaves_.rbegin(); it != leaves_.rend(); ++it) {
        Mat2 f{1, 0, 0, 1};
        if (it->twist) {
            f[2] = dtrig(it->terms, th);
            y += trig(it->terms, th);
        } else {
            f[1] = dpoly(it->shear, y);
            th += poly(it->shear, y);
        }
        j = Mat2{f[0] * j[0] + f[1] * j[2], f[0] * j[1] + f[1] * j[3], f[2] * j[0] + f[3] * j[2],
                 f[2] * j[1] + f[3] * j[3]};
    }
    if (dtheta) *dtheta = th - theta;
    if (y_out) *y_out = y;
    return j;
}

// ---------------------------------------------------------------- blend

ComplexCylinderPoint blend(const EntireMapSpec& h, const BumpProfile& beta, const ComplexCylinderPoint& p) {
    double b = beta(p.y.real());
    if (b == 0) return p;
    ComplexCylinderPoint q = h(p);
    if (b == 1) return q;
    cplx dth = q.theta - p.theta;
    dth = cplx(short_rep(dth.real()), dth.imag());
    return ComplexCylinderPoint(p.theta + b * dth, p.y + b * (q.y - p.y));
}

CylinderPoint blend(const EntireMapSpec& h, const BumpProfile& beta, const CylinderPoint& p) {
    double b = beta(p.y);
    if (b == 0) return p;
    CylinderPoint q = h(p);
    if (b == 1) return q;
    return CylinderPoint(p.theta + b * short_rep(q.theta - p.theta), p.y + b * (q.y - p.y));
}

double BlendedMap::area_density(double theta, double y) const {
    if (!(std::fabs(y) <= 1.0)) throw RangeError("area_density: point off the real cylinder");
    double b = beta_(y), db = beta_.derivative(y);
    if (b == 0 && db == 0) return 1.0;
    double dth = 0, yo = 0;
    Mat2 j = h_.jacobian(theta, y, &dth, &yo);
    double d = short_rep(dth);
    double a00 = 1 + b * (j[0] - 1), a01 = b * j[1] + db * d;
    double a10 = b * j[2], a11 = 1 + b * (j[3] - 1) + db * (yo - y);
    return a00 * a11 - a01 * a10;
}

double area_density(const BlendedMap& m, double theta, double y) { return m.area_density(theta, y); }

// ---------------------------------------------------------------- trig series

TrigSeries TrigSeries::interpolate(const std::vector<double>& samples, double cutoff) {
    const std::size_t n = samples.size();
    if (n < 4) throw PreconditionError("trig series: need at least 4 samples");
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, samples);
    TrigSeries s;
    s.c0_ = spec[0].real() / static_cast<double>(n);
    std::size_t top = (n - 1) / 2;  // the Nyquist mode is dropped
    double peak = 0;
    for (std::size_t k = 1; k <= top; ++k) peak = std::max(peak, std::abs(spec[k]) / static_cast<double>(n));
    std::size_t keep = 0;
    for (std::size_t k = 1; k <= top; ++k)
        if (std::abs(spec[k]) / static_cast<double>(n) > cutoff * peak && peak > 0) keep = k;
    for (std::size_t k = 1; k <= keep; ++k) {
        s.re_.push_back(spec[k].real() / static_cast<double>(n));
        s.im_.push_back(spec[k].imag() / static_cast<double>(n));
    }
    return s;
}

double TrigSeries::value(double theta) const {
    double sum = 0;
    cplx z = std::polar(1.0, kTwoPi * theta), w = z;
    for (std::size_t k = 0; k < re_.size(); ++k) {
        sum += re_[k] * w.real() - im_[k] * w.imag();
        w *= z;
    }
    return c0_ + 2 * sum;
}

double TrigSeries::derivative(double theta) const {
    double sum = 0;
    cplx z = std::polar(1.0, kTwoPi * theta), w = z;
    for (std::size_t k = 0; k < re_.size(); ++k) {
        // Re(2 pi i (k+1) c w)
        double f = kTwoPi * static_cast<double>(k + 1);
        sum += -f * (re_[k] * w.imag() + im_[k] * w.real());
        w *= z;
    }
    return 2 * sum;
}

TrigSeries TrigSeries::primitive() const {
    TrigSeries s;
    for (std::size_t k = 0; k < re_.size(); ++k) {
        // c / (2 pi i k) = -i c / (2 pi k)
        double f = kTwoPi * static_cast<double>(k + 1);
        s.re_.push_back(im_[k] / f);
        s.im_.push_back(-re_[k] / f);
    }
    return s;
}

TrigSeries TrigSeries::operator*(double a) const {
    TrigSeries s = *this;
    s.c0_ *= a;
    for (auto& v : s.re_) v *= a;
    for (auto& v : s.im_) v *= a;
    return s;
}

TrigSeries TrigSeries::shifted(double c) const {
    TrigSeries s = *this;
    s.c0_ += c;
    return s;
}

// ---------------------------------------------------------------- volume correction

void CorrectionConfig::validate() const {
    if (quad_n < 64) throw PreconditionError("volume correction: quad_n must be at least 64");
    if (!(quad_tol > 0)) throw ConfigError("volume correction: quad_tol must be positive");
    if (max_panels < 16) throw ConfigError("volume correction: max_panels too small");
    flow.validate();
}

double VolumeCorrection::excess(double theta, double a, double b, int panels) const {
    if (a == b) return 0;
    double h = (b - a) / panels;
    double s = (g_(theta, a) - 1) + (g_(theta, b) - 1);
    for (int i = 1; i < panels; ++i) s += (i % 2 ? 4 : 2) * (g_(theta, a + i * h) - 1);
    return s * h / 3;
}

VolumeCorrection::VolumeCorrection(GSampler g, const BumpProfile& beta, const CorrectionConfig& cfg)
    : g_(std::move(g)), beta_(beta), cfg_(cfg) {
    cfg_.validate();
    const int n = cfg_.quad_n;

    // Panel count: double until both half-integrals settle on a spread of theta values.
    int m = 16;
    for (;;) {
        if (2 * m > cfg_.max_panels) throw QuadratureError("volume correction: quadrature did not converge");
        double change = 0;
        for (int i = 0; i < 32; ++i) {
            double th = (i + 0.5) / 32;
            change = std::max(change, std::fabs(excess(th, -1, 0, m) - excess(th, -1, 0, 2 * m)));
            change = std::max(change, std::fabs(excess(th, 0, 1, m) - excess(th, 0, 1, 2 * m)));
        }
        if (change <= cfg_.quad_tol) break;
        m *= 2;
    }
    panels_ = 2 * m;

    std::vector<double> a(n), b(n), gp(n), gm(n);
    trivial_ = true;
    for (int i = 0; i < n; ++i) {
        double th = static_cast<double>(i) / n;
        a[i] = excess(th, -1, 0, panels_);
        b[i] = excess(th, 0, 1, panels_);
        if (a[i] != 0 || b[i] != 0) trivial_ = false;
    }
    A_ = TrigSeries::interpolate(a, 1e-15);
    B_ = TrigSeries::interpolate(b, 1e-15);

    double sp = 0, sm = 0;
    for (int i = 0; i < n; ++i) {
        gp[i] = 1 + (b[i] - a[i]) / 2;
        gm[i] = -1 - (3 * a[i] + b[i]) / 2;
        sp += gp[i];
        sm += gm[i];
    }
    tau_ = sp / n - 1;
    mass_ = (sp - sm) / n;

    // Gamma_+-' = -(1/2)(gamma_+- -+ 1 - tau); the mean is dropped so Gamma_+- are periodic.
    for (int i = 0; i < n; ++i) {
        gp[i] = -0.5 * (gp[i] - 1 - tau_);
        gm[i] = -0.5 * (gm[i] + 1 - tau_);
    }
    dGp_ = TrigSeries::interpolate(gp, 1e-15);
    dGm_ = TrigSeries::interpolate(gm, 1e-15);
    dGp_ = dGp_.shifted(-dGp_.mean());
    dGm_ = dGm_.shifted(-dGm_.mean());
    Gp_ = dGp_.primitive();
    Gm_ = dGm_.primitive();
}

double VolumeCorrection::G(double theta, double y) const {
    double shift = -0.5 * (A_.value(theta) + B_.value(theta));
    if (y > 1) return 1 + excess(theta, 0, 1, panels_) + shift + (y - 1);
    if (y < -1) return -1 + excess(theta, 0, -1, panels_) + shift + (y + 1);
    return y + excess(theta, 0, y, panels_) + shift;
}

double VolumeCorrection::gamma_plus(double theta) const { return 1 + (B_.value(theta) - A_.value(theta)) / 2; }

double VolumeCorrection::gamma_minus(double theta) const {
    return -1 - (3 * A_.value(theta) + B_.value(theta)) / 2;
}

CylinderPoint VolumeCorrection::phi1(const CylinderPoint& p) const { return CylinderPoint(p.theta, G(p.theta, p.y)); }

CylinderPoint VolumeCorrection::phi1_inverse(const CylinderPoint& p) const {
    double y = p.y;
    for (int it = 0; it < 60; ++it) {
        double r = G(p.theta, y) - p.y;
        if (r == 0) return CylinderPoint(p.theta, y);
        double d = g_(p.theta, std::clamp(y, -1.0, 1.0));
        double next = y - r / d;
        if (std::fabs(next - y) <= 1e-15 * (1 + std::fabs(y))) return CylinderPoint(p.theta, next);
        y = next;
    }
    throw IntegratorError("volume correction: phi1 inverse did not converge");
}

// Field (2 dH/dy, -2 dH/dtheta) of H = Gamma_+(theta) S(y) + Gamma_-(theta) S(-y).
double VolumeCorrection::hamiltonian_field(double theta, double y, double& dtheta) const {
    const double eta = beta_.eta();
    auto S = [&](double t) { return smooth_step((t - (1 - 3 * eta)) / eta); };
    auto dS = [&](double t) { return smooth_step_derivative((t - (1 - 3 * eta)) / eta) / eta; };
    double sp = S(y), sm = S(-y), dsp = dS(y), dsm = dS(-y);
    double hy = 0, ht = 0;
    if (sp != 0 || dsp != 0) {
        hy += Gp_.value(theta) * dsp;
        ht += dGp_.value(theta) * sp;
    }
    if (sm != 0 || dsm != 0) {
        hy -= Gm_.value(theta) * dsm;
        ht += dGm_.value(theta) * sm;
    }
    dtheta = 2 * hy;
    return -2 * ht;
}

CylinderPoint VolumeCorrection::flow(const CylinderPoint& p, bool backward) const {
    const int steps = cfg_.flow.steps;
    const double dt = (backward ? -1.0 : 1.0) / steps;
    double th = p.theta, y = p.y;
    for (int s = 0; s < steps; ++s) {
        double th1 = th, y1 = y, change = 0;
        int it = 0;
        for (; it < cfg_.flow.max_newton; ++it) {
            double ft = 0, fy = hamiltonian_field(0.5 * (th + th1), 0.5 * (y + y1), ft);
            double nt = th + dt * ft, ny = y + dt * fy;
            change = std::max(std::fabs(nt - th1), std::fabs(ny - y1));
            th1 = nt;
            y1 = ny;
            if (change <= cfg_.flow.tol) break;
        }
        if (change > 1e3 * cfg_.flow.tol) throw IntegratorError("volume correction: midpoint iteration failed");
        th = th1;
        y = y1;
    }
    return CylinderPoint(th, y);
}

CylinderPoint VolumeCorrection::phi2(const CylinderPoint& p) const {
    return flow(CylinderPoint(p.theta, p.y - tau_), true);
}

CylinderPoint VolumeCorrection::phi2_inverse(const CylinderPoint& p) const {
    CylinderPoint q = flow(p, false);
    return CylinderPoint(q.theta, q.y + tau_);
}

CylinderPoint VolumeCorrection::apply(const CylinderPoint& p) const { return phi2(phi1(p)); }

CylinderPoint VolumeCorrection::inverse_unrestricted(const CylinderPoint& p) const {
    return phi1_inverse(phi2_inverse(p));
}

CylinderPoint VolumeCorrection::inverse(const CylinderPoint& p) const {
    if (std::fabs(p.y) >= 1 - beta_.eta()) return p;
    return inverse_unrestricted(p);
}

// ---------------------------------------------------------------- glued map

GluedMap::GluedMap(EntireMapSpec h, const BumpProfile& beta, const CorrectionConfig& cfg)
    : hat_(std::move(h), beta) {
    phi_ = std::make_shared<VolumeCorrection>(
        [hat = hat_](double t, double y) { return hat.area_density(t, y); }, beta, cfg);
}

CylinderPoint GluedMap::operator()(const CylinderPoint& p) const { return hat_(phi_->inverse(p)); }

ComplexCylinderPoint GluedMap::operator()(const ComplexCylinderPoint& p) const {
    if (std::fabs(p.y.real()) >= 1 - phi_->bump().eta()) return hat_(p);
    CylinderPoint r = phi_->inverse(CylinderPoint(p.theta.real(), p.y.real()));
    return hat_(ComplexCylinderPoint(cplx(r.theta, p.theta.imag()), cplx(r.y, p.y.imag())));
}

Map4 GluedMap::map4() const {
    GluedMap self = *this;
    return as_map4([self](const ComplexCylinderPoint& p) { return self(p); });
}

// ---------------------------------------------------------------- report

std::vector<Frame4Point> complex_grid(double rho, int n) {
    if (n < 2) throw PreconditionError("complex grid: need at least 2 points per axis");
    double cap = 3 * rho;
    if (!(cap > 2)) throw PreconditionError("complex grid: empty domain");
    double smax = std::acosh(cap / 2) / (4 * std::numbers::pi), ymax = std::sqrt(cap - 2);
    DomainSpec dom(Surface::Cylinder, rho);
    std::vector<Frame4Point> out;
    auto lin = [n](double lo, double hi, int i) { return lo + (hi - lo) * i / (n - 1); };
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c)
                for (int d = 0; d < n; ++d) {
                    Frame4Point p(Vec4{static_cast<double>(a) / n, lin(-smax, smax, b), lin(-ymax, ymax, c),
                                       lin(-ymax, ymax, d)});
                    if (domain_contains(dom, p.point())) out.push_back(p);
                }
    return out;
}

GlueReport glue_and_report(const EntireMapSpec& h, const BumpProfile& beta, double R, int grid_n,
                           const GlueOptions& opt) {
    if (!(R > 1)) throw PreconditionError("glue_and_report: R must exceed 1");
    if (grid_n < 2) throw PreconditionError("glue_and_report: grid too small");
    GluedMap glued(h, beta, opt.correction);
    const VolumeCorrection& phi = glued.correction();

    GlueReport rep;
    rep.eta = beta.eta();
    rep.eps = beta.eps();
    rep.R = R;
    rep.grid_n = grid_n;
    rep.complex_grid_n = opt.complex_grid_n;
    rep.panels = phi.panels();
    rep.entire = h.serialize();
    rep.tau = phi.tau();
    rep.mass_residual = std::fabs(phi.mass() - 2);

    auto real_h = [&glued](const CylinderPoint& p) { return glued(p); };
    for (int i = 0; i < grid_n; ++i)
        for (int j = 0; j < grid_n; ++j) {
            CylinderPoint p = grid_point(i, j, grid_n);
            rep.det_residual = std::max(rep.det_residual, std::fabs(det2(real_jacobian(real_h, p.theta, p.y, opt.step)) - 1));
            CylinderPoint q = glued(p);
            rep.membership_excess = std::max(rep.membership_excess, std::max(std::fabs(q.y) - 1, 0.0));
            if (std::fabs(p.y) >= 1 - beta.eta()) {
                ++rep.support_samples;
                ComplexCylinderPoint c(p);
                if (!same_bits(glued(c), c)) ++rep.support_moved;
            }
            if (h.q() > 0) {
                CylinderPoint a = glued(CylinderPoint(p.theta + 1.0 / h.q(), p.y));
                double d = std::max(std::fabs(short_rep(a.theta - q.theta - 1.0 / h.q())), std::fabs(a.y - q.y));
                rep.rotation_residual = std::max(rep.rotation_residual, d);
            }
        }

    // Dedicated samples of the band |Re y| >= 1 - eta, including imaginary offsets.
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j <= 16; ++j)
            for (int s = -1; s <= 1; s += 2)
                for (double im : {0.0, 0.05, -0.3}) {
                    double y = s * (1 - beta.eta() + beta.eta() * j / 16);
                    ComplexCylinderPoint c(cplx(i / 32.0, im), cplx(y, -im));
                    ++rep.support_samples;
                    if (!same_bits(glued(c), c)) ++rep.support_moved;
                    if (im == 0) {
                        CylinderPoint r = phi.inverse_unrestricted(CylinderPoint(i / 32.0, y));
                        double d = std::max(std::fabs(short_rep(r.theta - i / 32.0)), std::fabs(r.y - y));
                        rep.support_formula_residual = std::max(rep.support_formula_residual, d);
                    }
                }

    Map4 m = glued.map4();
    JField jo = constant_field(standard_J());
    CMat4 wo = standard_form();
    for (const auto& p : complex_grid(R, opt.complex_grid_n)) {
        ++rep.complex_points;
        if (std::fabs(p.v[2]) >= 1 - beta.eta()) {
            ++rep.support_samples;
            if (!same_bits(glued(p.point()), p.point())) ++rep.support_moved;
        }
        StructureSample js = pullback_structure(m, p, opt.step);
        Mat4 dj = js.J, jref = standard_J();
        for (int k = 0; k < 16; ++k) dj[k] -= jref[k];
        rep.structure_distance = std::max(rep.structure_distance, op_norm(dj));
        FormSample fs = pullback_form(m, p, opt.step);
        for (int k = 0; k < 16; ++k) fs.W[k] -= wo[k];
        rep.form_distance = std::max(rep.form_distance, form_norm(fs.W));
        rep.sigma_residual = std::max(rep.sigma_residual, sigma_map_residual(m, p));
    }
    return rep;
}

std::string GlueReport::to_text() const {
    std::ostringstream os;
    os << std::setprecision(17);
    std::string flat = entire;
    std::replace(flat.begin(), flat.end(), '\n', ';');
    os << "entire " << flat << "\n";
    os << "eta " << eta << "\neps " << eps << "\nR " << R << "\n";
    os << "grid_n " << grid_n << "\ncomplex_grid_n " << complex_grid_n << "\ncomplex_points " << complex_points
       << "\n";
    os << "panels " << panels << "\ntau " << tau << "\n";
    os << "det_residual " << det_residual << "\nmembership_excess " << membership_excess << "\n";
    os << "support_samples " << support_samples << "\nsupport_moved " << support_moved << "\n";
    os << "support_formula_residual " << support_formula_residual << "\n";
    os << "structure_distance " << structure_distance << "\nform_distance " << form_distance << "\n";
    os << "sigma_residual " << sigma_residual << "\n";
    os << "mass_residual " << mass_residual << "\n";
    os << "rotation_residual " << rotation_residual << "\n";
    return os.str();
}

// ---------------------------------------------------------------- collisions

long blend_collisions(const EntireMapSpec& h, const BumpProfile& beta, double rho, int n, double resolution) {
    std::vector<Frame4Point> pts = complex_grid(rho, n);
    std::vector<Vec4> img(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        ComplexCylinderPoint q = blend(h, beta, pts[i].point());
        img[i] = Vec4{wrap01(q.theta.real()), q.theta.imag(), q.y.real(), q.y.imag()};
    }
    // Two points within resolution (max norm) share a cell of side >= 2 * resolution for at least
    // one of the 16 half-cell offsets. The circle gets a whole number of cells.
    const auto ring = static_cast<std::int64_t>(std::floor(1 / (2 * resolution)));
    const double cell = 2 * resolution, tcell = 1.0 / static_cast<double>(ring);
    auto index = [&](const Vec4& v, int shift, int c) {
        double off = (shift >> c & 1) ? 0.5 : 0.0;
        if (c == 0) return static_cast<std::int64_t>(std::floor(v[0] / tcell + off)) % ring;
        return static_cast<std::int64_t>(std::floor(v[c] / cell + off));
    };
    std::vector<std::pair<std::uint32_t, std::uint32_t>> close;
    std::vector<std::pair<std::uint64_t, std::uint32_t>> keys(img.size());
    for (int shift = 0; shift < 16; ++shift) {
        for (std::size_t i = 0; i < img.size(); ++i) {
            std::uint64_t key = 1469598103934665603ull;  // FNV-1a over the cell indices
            for (int c = 0; c < 4; ++c) key = (key ^ static_cast<std::uint64_t>(index(img[i], shift, c))) * 1099511628211ull;
            keys[i] = {key, static_cast<std::uint32_t>(i)};
        }
        std::sort(keys.begin(), keys.end());
        for (std::size_t i = 0; i + 1 < keys.size(); ++i)
            for (std::size_t j = i + 1; j < keys.size() && keys[j].first == keys[i].first; ++j) {
                const Vec4 &a = img[keys[i].second], &b = img[keys[j].second];
                double d = std::fabs(short_rep(a[0] - b[0]));
                for (int c = 1; c < 4; ++c) d = std::max(d, std::fabs(a[c] - b[c]));
                if (d <= resolution)
                    close.emplace_back(std::min(keys[i].second, keys[j].second), std::max(keys[i].second, keys[j].second));
            }
    }
    std::sort(close.begin(), close.end());
    return static_cast<long>(std::unique(close.begin(), close.end()) - close.begin());
}

// ---------------------------------------------------------------- deformation ladder

std::vector<double> default_amplitude_schedule(int stages) {
    std::vector<double> t;
    for (int n = 1; n <= stages; ++n) t.push_back(std::ldexp(0.5, -n));
    return t;
}

DeformationBuilder::DeformationBuilder(EntireMapSpec base, const BumpProfile& beta, std::vector<Frame4Point> points,
                                       const GlueOptions& opt)
    : base_(std::move(base)), beta_(beta), points_(std::move(points)), opt_(opt) {}

Map4 DeformationBuilder::map(std::size_t n) const {
    if (n > deform_.size()) throw MissingStage("deformation ladder: no stage " + std::to_string(n));
    std::vector<Map4> ds(deform_.begin(), deform_.begin() + static_cast<long>(n));
    return [ds = std::move(ds)](const Vec4& v) {
        Vec4 x = v;
        for (const auto& d : ds) x = d(Frame4Point(x).v);
        return x;
    };
}

JField DeformationBuilder::structure(std::size_t n) const {
    if (n == 0) return constant_field(standard_J());
    return pullback_structure_field(map(n), opt_.step);
}

FormField DeformationBuilder::form(std::size_t n) const {
    if (n == 0) return [](const Frame4Point&) { return standard_form(); };
    return pullback_form_field(map(n), opt_.step);
}

LadderStage DeformationBuilder::measure(const Map4& d, double t, int halvings) const {
    const std::size_t n = deform_.size() + 1;
    Map4 prev = map(n - 1);
    Map4 next = [prev, d](const Vec4& v) { return d(Frame4Point(prev(v)).v); };
    LadderStage st;
    st.amplitude = t;
    st.halvings = halvings;
    st.dJ = structure_distance(pullback_structure_field(next, opt_.step), structure(n - 1), points_);
    FormField wn = pullback_form_field(next, opt_.step);
    st.dOmega = form_distance(wn, form(n - 1), points_);
    return st;
}

LadderStage DeformationBuilder::add(double t, int max_halvings) {
    const std::size_t n = deform_.size() + 1;
    const double budget = std::ldexp(1.0, -static_cast<int>(n));
    for (int h = 0;; ++h) {
        Map4 d = GluedMap(base_.scaled(t), beta_, opt_.correction).map4();
        LadderStage st = measure(d, t, h);
        if ((st.dJ < budget && st.dOmega < budget) || h >= max_halvings) {
            deform_.push_back(d);
            return st;
        }
        t *= 0.5;
    }
}

LadderStage DeformationBuilder::add_fixed(double t) {
    Map4 d = GluedMap(base_.scaled(t), beta_, opt_.correction).map4();
    LadderStage st = measure(d, t, 0);
    deform_.push_back(d);
    return st;
}

DeformationLadder deformation_ladder(const EntireMapSpec& base, const BumpProfile& beta,
                                     const std::vector<double>& schedule, const std::vector<Frame4Point>& points,
                                     int max_halvings, const GlueOptions& opt) {
    if (schedule.empty()) throw PreconditionError("deformation ladder: empty schedule");
    DeformationBuilder b(base, beta, points, opt);
    DeformationLadder out;
    std::vector<JField> J{b.structure(0)};
    std::vector<FormField> W{b.form(0)};
    for (double t : schedule) {
        out.stages.push_back(b.add(t, max_halvings));
        J.push_back(b.structure(b.size()));
        W.push_back(b.form(b.size()));
    }
    out.report = convergence_tracker(J, W, points);
    return out;
}

}  // namespace abc
