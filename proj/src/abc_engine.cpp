#include "abc/abc_engine.hpp"

#include "abc/errors.hpp"

#include <quadmath.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace abc {

namespace {

constexpr quad kGolden = 0.6180339887498948482045868343656381Q;

// Kronecker sequence in [0, 1).
quad kron(std::uint64_t i) {
    quad t = (quad)i * kGolden;
    return t - floorq(t);
}

double pow3(int e) { return std::pow(3.0, -e); }

double phase_gap(double a, double b) {
    double d = std::fabs(a - b);
    return std::min(d, 1.0 - d);
}

std::uint64_t to_u64(const BigInt& v, const char* what) {
    if (v < 0 || !v.fits_ulong_p()) throw PreconditionError(std::string(what) + " does not fit 64 bits");
    return v.get_ui();
}

Rational rational_of(double v) { return Rational(v); }

Rational rmin(const Rational& a, const Rational& b) { return a < b ? a : b; }

// floor(u * q) for u in [0, 1) given as a quad.
BigInt scale_floor(quad u, const BigInt& q) {
    // u = U / 2^112 with U an integer below 2^112.
    quad s = ldexpq(u, 56);
    quad hi = floorq(s);
    quad lo = floorq(ldexpq(s - hi, 56));
    BigInt U = (BigInt((unsigned long)hi) << 56) + BigInt((unsigned long)lo);
    return (U * q) >> 112;
}

std::vector<XPoint> grid_points(int n) {
    std::vector<XPoint> g;
    g.reserve((std::size_t)n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) g.emplace_back(grid_point(i, j, n));
    return g;
}

// k * alpha mod 1 for machine-size k, rounded once to quad. alpha is split as a
// convergent pc/qc below 2^62 plus delta; k * delta is added exactly when it is
// above quad resolution and is otherwise below a recorded log2 bound.
class Offsets {
public:
    explicit Offsets(const RationalAngle& alpha) : alpha_(alpha) {
        RationalAngle r = last_convergent(alpha, BigInt(1) << 62);
        pc_ = r.p().get_ui();
        qc_ = r.q().get_ui();
        delta_ = alpha.value() - r.value();
        delta_log2_ = delta_ == 0 ? -1e300 : log2_abs(delta_);
    }
    quad operator()(std::uint64_t k) const {
        std::uint64_t m = (std::uint64_t)((unsigned __int128)k * pc_ % qc_);
        quad base = (quad)m / (quad)qc_;
        if (delta_ == 0 || delta_log2_ + std::log2((double)std::max<std::uint64_t>(k, 1)) < -130) return base;
        quad t = base + to_quad(Rational(BigInt((unsigned long)k)) * delta_);
        return t - floorq(t);
    }

private:
    RationalAngle alpha_;
    std::uint64_t pc_ = 0, qc_ = 1;
    Rational delta_;
    double delta_log2_ = 0;
};

}  // namespace

void EngineConfig::validate() const {
    flow.validate();
    if (grid_n < 8) throw PreconditionError("grid_n must be at least 8");
    if (curve_samples < 16) throw PreconditionError("curve_samples must be at least 16");
    if (!(amp_start > 0 && amp_cap > amp_start)) throw PreconditionError("amplitude search range is empty");
    if (image_samples < 64) throw PreconditionError("image_samples must be at least 64");
    if (base_candidates < 1) throw PreconditionError("base_candidates must be positive");
    if (sep_grid < 2) throw PreconditionError("sep_grid must be at least 2");
    if (density_probe_cap < 2) throw PreconditionError("density_probe_cap must be at least 2");
    if (!(conj_tol > 0)) throw PreconditionError("conj_tol must be positive");
}

// ---------------------------------------------------------------------------
// Covering radius

CoverIndex::CoverIndex(std::vector<XPoint> pts, std::uint64_t cells) : pts_(std::move(pts)), cells_(cells) {
    if (pts_.empty()) throw PreconditionError("covering radius of an empty point set");
    if (cells_ == 0) throw PreconditionError("cell count must be positive");
    std::size_t nb = std::clamp<std::size_t>(pts_.size() / 4, 16, 4096);
    bins_.assign(nb, {});
    phase_.resize(pts_.size());
    quad c = (quad)cells_;
    for (std::size_t i = 0; i < pts_.size(); ++i) {
        quad t = c * pts_[i].theta;
        double ph = (double)(t - floorq(t));
        if (ph >= 1.0) ph = 0.0;
        phase_[i] = ph;
        bins_[std::min(nb - 1, (std::size_t)(ph * nb))].push_back((std::uint32_t)i);
    }
}

double CoverIndex::distance(const XPoint& x) const {
    quad t = (quad)cells_ * x.theta;
    double ph = (double)(t - floorq(t));
    if (ph >= 1.0) ph = 0.0;
    const std::size_t nb = bins_.size();
    const double scale = 1.0 / (double)cells_;
    long b = std::min<long>((long)nb - 1, (long)(ph * nb));
    double best = std::numeric_limits<double>::infinity();
    for (long r = 0; r <= (long)nb / 2; ++r) {
        double lb = r == 0 ? 0.0 : (double)(r - 1) / nb * scale;
        if (lb >= best) break;
        long cand[2] = {((b + r) % (long)nb + (long)nb) % (long)nb, ((b - r) % (long)nb + (long)nb) % (long)nb};
        int nc = (r == 0 || cand[0] == cand[1]) ? 1 : 2;
        for (int c = 0; c < nc; ++c)
            for (std::uint32_t i : bins_[cand[c]]) {
                double d = std::max(phase_gap(ph, phase_[i]) * scale, (double)(0.5L * fabsl(x.y - pts_[i].y)));
                best = std::min(best, d);
            }
    }
    return best;
}

double covering_radius(const CoverIndex& index, int grid_n) {
    if (grid_n < 8) throw PreconditionError("grid_n must be at least 8");
    double worst = 0;
    for (const auto& g : grid_points(grid_n)) worst = std::max(worst, index.distance(g));
    return worst;
}

double covering_radius(const std::vector<CylinderPoint>& points, int grid_n) {
    std::vector<XPoint> xs;
    xs.reserve(points.size());
    for (const auto& p : points) xs.emplace_back(p);
    return covering_radius(CoverIndex(std::move(xs)), grid_n);
}

// ---------------------------------------------------------------------------
// Conjugators

Conjugator make_conjugator(std::uint64_t q, double eps, const EngineConfig& cfg) {
    if (!(eps > 0 && eps < 1)) throw PreconditionError("make_conjugator needs 0 < eps < 1");
    if (q < 1) throw PreconditionError("make_conjugator needs q >= 1");
    Conjugator c;
    c.q = q;
    c.eps = eps;
    c.M = (std::uint64_t)std::ceil(1.0 / eps);
    if (c.M > std::numeric_limits<std::uint64_t>::max() / q) throw PreconditionError("frequency q*M overflows");
    const std::uint64_t f = q * c.M;
    const quad fq = (quad)f;
    const int S = cfg.curve_samples;
    const int steps = cfg.flow.steps;

    auto image = [&](double A, quad theta) { return MapExpr::ham_flow(A / (double)f, f, steps).apply(XPoint(theta, 0), cfg.flow); };
    auto reach = [&](double A) {
        MapExpr g = MapExpr::ham_flow(A / (double)f, f, steps);
        double r = 0;
        for (int i = 0; i < S; ++i) {
            XPoint p = g.apply(XPoint((quad)i / ((quad)S * fq), 0), cfg.flow);
            r = std::max(r, (double)fabsl(p.y));
        }
        return r;
    };
    (void)image;

    const double target = 1.0 - eps;
    double A = cfg.amp_start;
    while (reach(A) < target) {
        A *= 2;
        ++c.doublings;
        if (A > cfg.amp_cap) throw SearchExhausted("conjugator amplitude exceeded the configured cap");
    }
    double lo = c.doublings ? A / 2 : 0.0, hi = A;
    for (int i = 0; i < cfg.refine_steps; ++i) {
        double mid = 0.5 * (lo + hi);
        if (reach(mid) >= target) hi = mid;
        else lo = mid;
    }
    c.K = hi / (double)f;
    c.map = MapExpr::ham_flow(c.K, f, steps);

    // One period of the equator image, refined where consecutive samples jump in y.
    std::vector<std::pair<quad, XPoint>> curve;
    curve.reserve(S);
    for (int i = 0; i < S; ++i) {
        quad t = (quad)i / ((quad)S * fq);
        curve.emplace_back(t, c.map.apply(XPoint(t, 0), cfg.flow));
    }
    for (int round = 0; round < 16; ++round) {
        std::vector<std::pair<quad, XPoint>> next;
        next.reserve(curve.size() * 2);
        bool grew = false;
        for (std::size_t i = 0; i < curve.size(); ++i) {
            next.push_back(curve[i]);
            quad t1 = i + 1 < curve.size() ? curve[i + 1].first : curve[0].first + 1 / fq;
            long double y1 = i + 1 < curve.size() ? curve[i + 1].second.y : curve[0].second.y;
            if (fabsl(y1 - curve[i].second.y) > 0.25L * eps) {
                quad tm = 0.5Q * (curve[i].first + t1);
                next.emplace_back(tm, c.map.apply(XPoint(tm, 0), cfg.flow));
                grew = true;
            }
        }
        curve.swap(next);
        if (!grew) break;
    }
    std::vector<XPoint> pts;
    pts.reserve(curve.size());
    for (auto& [t, p] : curve) {
        c.reach = std::max(c.reach, (double)fabsl(p.y));
        pts.push_back(p);
    }
    c.covering = covering_radius(CoverIndex(std::move(pts), f), cfg.grid_n);
    c.commutation = commutation_residual(c.map, RationalAngle(1, q), cfg.grid_n, cfg.flow);
    if (c.covering > eps) throw CertificateFailure("conjugator image of the equator is not eps-dense", 0, c.covering);
    if (c.commutation > cfg.conj_tol)
        throw CertificateFailure("conjugator does not commute with Rot_{1/q}", 0, c.commutation);
    return c;
}

// ---------------------------------------------------------------------------
// Stage helpers

SchemeStage initial_stage(const EngineConfig& cfg) {
    SchemeStage s;
    s.n = 0;
    s.alpha = RationalAngle(0, 1);
    s.j = 0;
    s.N = 0;
    s.base_theta = 0;
    s.base = CylinderPoint(0, 0);
    s.cert.orbit_covering = covering_radius(std::vector<CylinderPoint>{s.base}, cfg.grid_n);
    s.cert.curve_covering = covering_radius(CoverIndex({XPoint(0, 0), XPoint(0.5Q, 0)}, 1 << 20), cfg.grid_n);
    s.cert.lipschitz = 1;
    s.cert.symplectic = 0;
    return s;
}

MapExpr stage_map(const SchemeStage& s) {
    return MapExpr::compose({s.conjugator.inverse(), MapExpr::rotation(s.alpha), s.conjugator});
}

XPoint stage_iterate(const SchemeStage& s, const XPoint& x, const BigInt& k, const FlowConfig& cfg) {
    XPoint z = s.conjugator.apply(x, cfg);
    z.theta = wrap01q(z.theta + s.alpha.times(k).to_quad());
    return s.conjugator.inverse().apply(z, cfg);
}

double grid_lipschitz(const MapExpr& m, int grid_n, const FlowConfig& cfg) {
    double worst = 0;
    for (const auto& g : grid_points(grid_n)) worst = std::max(worst, metric_norm(analytic_jacobian(m, g, cfg)));
    return worst;
}

double symplectic_residual(const MapExpr& m, int grid_n, const FlowConfig& cfg) {
    double worst = 0;
    for (const auto& g : grid_points(grid_n)) worst = std::max(worst, std::fabs(analytic_det(m, g, cfg) - 1.0));
    return worst;
}

double map_distance(const MapExpr& a, const MapExpr& b, int grid_n, const FlowConfig& cfg) {
    double worst = 0;
    for (const auto& g : grid_points(grid_n)) worst = std::max(worst, xdistance(a.apply(g, cfg), b.apply(g, cfg)));
    return worst;
}

// ---------------------------------------------------------------------------
// Periodic separation

double periodic_separation(const std::function<XPoint(const XPoint&, std::uint64_t)>& fk, std::uint64_t q,
                           int grid_n) {
    if (q < 2) throw PreconditionError("periodic separation needs q >= 2");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& x : grid_points(grid_n))
        for (std::uint64_t k = 1; k < q; ++k) best = std::min(best, xdistance(x, fk(x, k)));
    return best;
}

double periodic_separation(const SchemeStage& s, int grid_n, const FlowConfig& cfg) {
    const std::uint64_t q = to_u64(s.alpha.q(), "denominator");
    const std::uint64_t p = to_u64(s.alpha.p(), "numerator");
    MapExpr hinv = s.conjugator.inverse();
    double best = std::numeric_limits<double>::infinity();
    if (q < 2) throw PreconditionError("periodic separation needs q >= 2");
    for (const auto& x : grid_points(grid_n)) {
        XPoint z = s.conjugator.apply(x, cfg);
        for (std::uint64_t k = 1; k < q; ++k) {
            unsigned __int128 m = (unsigned __int128)k * p % q;
            XPoint w(z.theta + (quad)(std::uint64_t)m / (quad)q, z.y);
            best = std::min(best, xdistance(x, hinv.apply(w, cfg)));
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Orbit density

namespace {

// Covering radius of the first n+1 points, rebuilt from scratch.
// How far h^{-1} moves a point when w shifts by a unit angle, in the cylinder metric.
double theta_sensitivity(const MapExpr& hinv, const XPoint& w, const FlowConfig& cfg) {
    Mat2 J = analytic_jacobian(hinv, w, cfg);
    return std::max(std::fabs(J[0]), 0.5 * std::fabs(J[2]));
}

double prefix_covering(const std::vector<XPoint>& pts, std::size_t n, int grid_n) {
    return covering_radius(CoverIndex(std::vector<XPoint>(pts.begin(), pts.begin() + (long)n + 1)), grid_n);
}

}  // namespace

OrbitDensity orbit_density(const SchemeStage& s, double target, const EngineConfig& cfg) {
    OrbitDensity best;
    best.covering = std::numeric_limits<double>::infinity();
    MapExpr hinv = s.conjugator.inverse();
    const BigInt& q = s.alpha.q();
    const int C = cfg.base_candidates;
    if (q <= cfg.orbit_enum_cap) {
        const std::uint64_t qq = q.get_ui(), p = s.alpha.p().get_ui();
        for (int c = 0; c < C; ++c) {
            quad t = ((quad)c + 0.5Q) / (quad)C;
            std::vector<XPoint> pts;
            pts.reserve(std::min<std::uint64_t>(qq, 1 << 16));
            std::uint64_t found = 0;
            bool ok = false;
            double cov = 1;
            for (std::uint64_t check = 1;; check = std::min(qq - 1, check * 2)) {
                while (pts.size() <= check) {
                    std::uint64_t k = pts.size();
                    unsigned __int128 m = (unsigned __int128)k * p % qq;
                    pts.push_back(hinv.apply(XPoint(t + (quad)(std::uint64_t)m / (quad)qq, 0), cfg.flow));
                }
                cov = prefix_covering(pts, check, cfg.grid_n);
                if (cov <= target) {
                    // minimal prefix length for this base point
                    std::uint64_t lo = check / 2, hi = check;
                    while (hi - lo > 1) {
                        std::uint64_t mid = (lo + hi) / 2;
                        if (prefix_covering(pts, mid, cfg.grid_n) <= target) hi = mid;
                        else lo = mid;
                    }
                    found = hi;
                    cov = prefix_covering(pts, hi, cfg.grid_n);
                    ok = true;
                    break;
                }
                if (check >= qq - 1) break;
            }
            if (ok) {
                best.covering = cov;
                best.N = BigInt((unsigned long)found);
                best.base_theta = (double)t;
                best.enumerated = true;
                return best;
            }
            if (cov < best.covering) {
                best.covering = cov;
                best.N = BigInt((unsigned long)(qq - 1));
                best.base_theta = (double)t;
            }
        }
        return best;
    }
    // Large q: pick iterates by rotation offset. With r = pc/qc the last convergent of
    // alpha below 2^62 and delta = alpha - r, the iterate k = a + qc * c sits at offset
    // a * r + k * delta, so a selects a multiple of 1/qc and c a shift inside the cell.
    const RationalAngle r = last_convergent(s.alpha, BigInt(1) << 62);
    const std::uint64_t qc = r.q().get_ui();
    const Rational delta = s.alpha.value() - r.value();
    const bool exact = delta == 0;
    const bool neg = delta < 0;
    const Rational qd = exact ? Rational(0) : Rational(r.q()) * abs(delta);  // shift per step of c
    std::uint64_t pinv = 0;
    if (qc > 1) {
        BigInt inv;
        mpz_invert(inv.get_mpz_t(), r.p().get_mpz_t(), r.q().get_mpz_t());
        pinv = inv.get_ui();
    }
    const double err_log2 = exact ? -std::numeric_limits<double>::infinity() : log2_abs(qd);
    if (!exact && err_log2 > -40) throw PreconditionError("convergent too coarse for offset sampling");
    struct Pick {
        std::uint64_t a, m;
        quad shift;  // in [0, 1/qc)
    };
    auto pick = [&](quad u) {
        quad scaled = u * (quad)qc;
        std::uint64_t m = (std::uint64_t)floorq(scaled);
        if (m >= qc) m = qc - 1;
        quad shift = (scaled - (quad)m) / (quad)qc;
        if (neg && !exact) {
            // reach the shift from the next multiple going backwards
            m = (m + 1) % qc;
            shift = 1.0Q / (quad)qc - shift;
        }
        std::uint64_t a = qc > 1 ? (std::uint64_t)((unsigned __int128)pinv * m % qc) : 0;
        return Pick{a, m, exact ? 0.0Q : shift};
    };
    auto iterate_of = [&](const Pick& pk) -> BigInt {
        if (exact) return BigInt((unsigned long)pk.a);
        // c = floor(shift / (qc |delta|)), exactly
        BigInt U = scale_floor(pk.shift, BigInt(1) << 112);  // shift * 2^112
        BigInt num = U * qd.get_den(), den = qd.get_num() << 112;
        BigInt c = num / den;
        return BigInt(BigInt((unsigned long)pk.a) + r.q() * c);
    };
    for (int c = 0; c < std::min(C, 4); ++c) {
        quad t = ((quad)c + 0.5Q) / (quad)C;
        std::vector<XPoint> pts;
        std::vector<Pick> picks;
        for (std::uint64_t S = 1 << 12; S <= (std::uint64_t)1 << 17; S *= 2) {
            while (pts.size() < S) {
                quad u = kron(pts.size());
                Pick pk = pick(u);
                picks.push_back(pk);
                // exact offset when delta = 0, else within 2 qc |delta| of the orbit point
                quad off = exact ? (quad)pk.m / (quad)qc : u;
                pts.push_back(hinv.apply(XPoint(t + off, 0), cfg.flow));
            }
            double cov = covering_radius(CoverIndex(pts), cfg.grid_n);
            if (cov < best.covering) {
                // k grows with c first, then with a; c is monotone in the shift
                auto top = std::max_element(picks.begin(), picks.end(), [](const Pick& x, const Pick& y) {
                    return x.shift < y.shift || (x.shift == y.shift && x.a < y.a);
                });
                BigInt N = iterate_of(*top);
                for (const Pick& pk : picks)
                    if (exact || (double)(top->shift - pk.shift) <= std::exp2(std::max(-1000.0, err_log2 + 1)))
                        N = std::max(N, iterate_of(pk));
                best.covering = cov;
                best.N = N;
                best.base_theta = (double)t;
                best.enumerated = false;
                best.offset_error_log2 = exact ? -1e300 : std::log2(std::exp2(std::max(-1000.0, err_log2 + 1)) + 0x1p-110);
            }
            if (cov <= target) return best;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// nu budget and next angle

NuTerms select_nu(const SchemeStage& cur, const SchemeStage& next, const EngineConfig& cfg) {
    NuTerms t;
    const BigInt& q = cur.alpha.q();
    t.farey = farey_separation(cur.alpha);
    t.liouville = liouville_bound(q);
    Rational other = rmin(t.farey, t.liouville);

    MapExpr hinv = next.conjugator.inverse();
    const double L = grid_lipschitz(hinv, cfg.grid_n, cfg.flow);

    // (iii) separation of f = h^{-1} Rot_alpha h for 0 < k < q, scaled by 2^-q and
    // turned into an angle via the Lipschitz constant of h^{-1} and the iterate count.
    if (q >= 2) {
        const std::uint64_t qq = to_u64(q, "denominator");
        const std::uint64_t work = (qq - 1) * (std::uint64_t)cfg.sep_grid * (std::uint64_t)cfg.sep_grid;
        SchemeStage probe = cur;
        probe.conjugator = next.conjugator;
        if (work <= cfg.sep_work_cap) {
            t.separation_value = periodic_separation(probe, cfg.sep_grid, cfg.flow);
            t.separation_exact = true;
        } else {
            double Lh = grid_lipschitz(next.conjugator, cfg.grid_n, cfg.flow);
            t.separation_value = 1.0 / ((double)qq * Lh);
        }
        Rational two_q;
        mpq_set_ui(two_q.get_mpq_t(), 1, 1);
        mpq_div_2exp(two_q.get_mpq_t(), two_q.get_mpq_t(), (unsigned long)qq);
        t.separation = two_q * rational_of(t.separation_value) / (Rational(q) * rational_of(L));
        other = rmin(other, t.separation);
    } else {
        t.separation = Rational(1);
    }

    // (iv) iterates k <= N of the recorded base point stay 3^{-j-1}-close.
    t.closeness = Rational(1);
    if (cur.N > 0) {
        double sens = 0;
        if (cur.N <= cfg.orbit_enum_cap) {
            const std::uint64_t N = cur.N.get_ui(), qq = to_u64(q, "denominator"), p = cur.alpha.p().get_ui();
            XPoint w0 = next.conjugator.apply(
                cur.conjugator.inverse().apply(XPoint((quad)cur.base_theta, 0), cfg.flow), cfg.flow);
            for (std::uint64_t k = 1; k <= N; ++k) {
                std::uint64_t m = (std::uint64_t)((unsigned __int128)k * p % qq);
                XPoint w(w0.theta + (quad)m / (quad)qq, w0.y);
                sens = std::max(sens, (double)k * theta_sensitivity(hinv, w, cfg.flow));
            }
        } else {
            // long segments: N times the grid sup of the same sensitivity
            double g = 0;
            for (const XPoint& w : grid_points(cfg.grid_n)) g = std::max(g, theta_sensitivity(hinv, w, cfg.flow));
            sens = cur.N.get_d() * g;
            t.closeness_bound = true;
        }
        t.closeness = rational_of(pow3(cur.j + 1) / (2.0 * sens));
        t.closeness_active = true;
        other = rmin(other, t.closeness);
    }

    // (v) denominators q' whose orbits are not 3^{-j-1}-dense are kept out of reach.
    t.density = Rational(1);
    {
        SchemeStage probe = next;
        long m = 1;
        const double level = pow3(cur.j + 1) + 2.0 / cfg.grid_n;
        for (long qp = 2; qp <= cfg.density_probe_cap; ++qp) {
            if (Rational(BigInt(1), q * (qp - 1)) < other) break;
            probe.alpha = RationalAngle(1, qp);
            EngineConfig c2 = cfg;
            OrbitDensity od = orbit_density(probe, level, c2);
            if (od.covering <= level) break;
            m = qp;
        }
        if (m >= 2) {
            t.density = Rational(BigInt(1), q * m);
            t.density_active = true;
            other = rmin(other, t.density);
        }
    }
    t.nu = other;
    return t;
}

RationalAngle choose_next_alpha(const RationalAngle& alpha, const Rational& nu, long n) {
    if (!(nu > 0)) throw PreconditionError("nu must be positive");
    BigInt Q;
    mpz_fdiv_q(Q.get_mpz_t(), nu.get_den().get_mpz_t(), nu.get_num().get_mpz_t());
    Q += 1;  // smallest Q with 1/Q < nu
    for (;; ++Q) {
        RationalAngle a = alpha + RationalAngle(BigInt(1), Q);
        if (a.q() >= n + 1) return a;
    }
}

// ---------------------------------------------------------------------------
// One induction step

SchemeStage step(const SchemeStage& cur, const EngineConfig& cfg) {
    cfg.validate();
    const long n1 = cur.n + 1;
    const double curve_level = pow3(cur.j + 2);
    const double slack = 2.0 / cfg.grid_n;
    const std::uint64_t q = to_u64(cur.alpha.q(), "denominator");
    MapExpr cur_inv = cur.conjugator.inverse();

    SchemeStage nx;
    nx.n = n1;
    const double Lcur = cur.cert.lipschitz > 0 ? cur.cert.lipschitz : grid_lipschitz(cur_inv, cfg.grid_n, cfg.flow);
    nx.epsilon_lipschitz = curve_level / (2.0 * Lcur);

    // Certificate-driven modulus: start from the Lipschitz-free value and halve.
    bool accepted = false;
    double last_cov = -1;
    for (int h = 0; h <= cfg.max_eps_halvings && !accepted; ++h) {
        double eps = curve_level / 2.0 / std::ldexp(1.0, h);
        Conjugator g;
        try {
            g = make_conjugator(q, eps, cfg);
        } catch (const CertificateFailure&) {
            continue;
        }
        MapExpr hn = MapExpr::compose(g.map.inverse(), cur.conjugator);
        MapExpr hn_inv = hn.inverse();
        std::vector<XPoint> pts;
        pts.reserve(cfg.image_samples);
        for (int i = 0; i < cfg.image_samples; ++i) pts.push_back(hn_inv.apply(XPoint(kron(i), 0), cfg.flow));
        last_cov = covering_radius(CoverIndex(std::move(pts)), cfg.grid_n);
        if (last_cov <= curve_level + slack) {
            accepted = true;
            nx.epsilon = eps;
            nx.conjugator = hn;
            nx.factors = cur.factors;
            nx.factors.push_back(g);
            nx.cert.curve_covering = last_cov;
            nx.cert.commutation = commutation_residual(g.map, cur.alpha, cfg.grid_n, cfg.flow);
        }
    }
    if (!accepted) throw CertificateFailure("equator image is not 3^{-j-2}-dense", n1, last_cov);

    // Conjugacy identity on the grid.
    MapExpr rot = MapExpr::rotation(cur.alpha);
    MapExpr lhs = MapExpr::compose({nx.conjugator.inverse(), rot, nx.conjugator});
    MapExpr rhs = MapExpr::compose({cur_inv, rot, cur.conjugator});
    nx.cert.conjugacy = map_distance(lhs, rhs, cfg.grid_n, cfg.flow);
    if (nx.cert.conjugacy > cfg.conj_tol) throw CertificateFailure("conjugacy identity broken", n1, nx.cert.conjugacy);

    // Budget, next angle, and the density ladder with nu halving on failure.
    nx.nu_terms = select_nu(cur, nx, cfg);
    Rational nu = nx.nu_terms.nu;
    const double orbit_level = pow3(cur.j + 1) + slack;
    for (int attempt = 0;; ++attempt) {
        nx.alpha = choose_next_alpha(cur.alpha, nu, n1);
        OrbitDensity od = orbit_density(nx, orbit_level, cfg);
        if (od.covering <= orbit_level) {
            nx.nu = nu;
            nx.N = od.N;
            nx.base_theta = od.base_theta;
            nx.cert.orbit_covering = od.covering;
            break;
        }
        if (attempt >= 8) throw CertificateFailure("orbit segment is not 3^{-j-1}-dense", n1, od.covering);
        nu /= 2;
    }
    nx.j = cur.j + 1;
    XPoint base = nx.conjugator.inverse().apply(XPoint((quad)nx.base_theta, 0), cfg.flow);
    nx.base = base.to_cylinder();

    MapExpr f = stage_map(nx);
    nx.cert.symplectic = symplectic_residual(f, cfg.grid_n, cfg.flow);
    nx.cert.lipschitz = grid_lipschitz(nx.conjugator.inverse(), cfg.grid_n, cfg.flow);
    return nx;
}

// ---------------------------------------------------------------------------
// Growth inequality and separation bookkeeping

GrowthReport growth_inequality(const SchemeStage& s, const SchemeStage& nx, int grid_n, const FlowConfig& cfg,
                               std::uint64_t max_work, int sample_k) {
    GrowthReport r;
    const std::uint64_t q = to_u64(s.alpha.q(), "denominator");
    const auto grid = grid_points(grid_n);
    r.range = q > 0 ? q - 1 : 0;
    std::vector<std::uint64_t> ks;
    r.exhaustive = (unsigned __int128)r.range * grid.size() <= max_work;
    if (r.exhaustive) {
        for (std::uint64_t k = 1; k < q; ++k) ks.push_back(k);
    } else {
        // both ends of the range plus evenly spaced interior iterates
        const std::uint64_t e = std::min<std::uint64_t>(r.range, (std::uint64_t)std::max(sample_k, 2) / 4);
        for (std::uint64_t k = 1; k <= e; ++k) ks.push_back(k);
        for (std::uint64_t k = q - e; k < q; ++k) ks.push_back(k);
        const int inner = std::max(sample_k - (int)(2 * e), 0);
        for (int i = 1; i <= inner; ++i) ks.push_back(1 + (std::uint64_t)((long double)i / (inner + 1) * (r.range - 1)));
        std::sort(ks.begin(), ks.end());
        ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    }
    MapExpr a_inv = s.conjugator.inverse(), b_inv = nx.conjugator.inverse();
    std::vector<XPoint> za, zb;
    for (const auto& x : grid) {
        za.push_back(s.conjugator.apply(x, cfg));
        zb.push_back(nx.conjugator.apply(x, cfg));
    }
    const Offsets off_a(s.alpha), off_b(nx.alpha);
    const double factor = 1.0 + std::ldexp(1.0, -(int)std::min<std::uint64_t>(q, 2000));
    r.pass = true;
    for (std::uint64_t k : ks) {
        const quad oa = off_a(k), ob = off_b(k);
        double ma = 0, mb = 0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            ma = std::max(ma, xdistance(grid[i], a_inv.apply(XPoint(za[i].theta + oa, za[i].y), cfg)));
            mb = std::max(mb, xdistance(grid[i], b_inv.apply(XPoint(zb[i].theta + ob, zb[i].y), cfg)));
        }
        double excess = mb - (factor * ma + 1e-6);
        if (r.checked == 0 || excess > r.worst_excess) {
            r.worst_excess = excess;
            r.worst_k = k;
        }
        if (excess > 0) r.pass = false;
        ++r.checked;
    }
    // a sampled range certifies nothing about the unchecked iterates
    if (!r.exhaustive) r.pass = false;
    return r;
}

SeparationReport separation_report(const std::vector<SchemeStage>& stages, std::size_t index, const EngineConfig& cfg) {
    if (index >= stages.size()) throw MissingStage("no stage " + std::to_string(index));
    const SchemeStage& s = stages[index];
    SeparationReport r;
    const BigInt& q = s.alpha.q();
    if (q < 2) {
        r.pass = true;  // no iterate with 0 < k < q
        r.measured = std::numeric_limits<double>::infinity();
        r.scanned = true;
        return r;
    }
    double L = grid_lipschitz(s.conjugator, cfg.grid_n, cfg.flow);
    long exp2 = 0;
    double mant = mpz_get_d_2exp(&exp2, q.get_mpz_t());
    r.lower_bound_log10 = -(std::log10(mant) + exp2 * std::log10(2.0)) - std::log10(L);
    // prod_{m >= index} (1 + 2^{-q_m}) over the recorded stages
    for (std::size_t m = index; m < stages.size(); ++m) {
        const BigInt& qm = stages[m].alpha.q();
        if (qm < 2000) r.product *= 1.0 + std::ldexp(1.0, -(int)qm.get_ui());
    }
    if (q.fits_ulong_p()) {
        std::uint64_t work = (q.get_ui() - 1) * (std::uint64_t)cfg.sep_grid * (std::uint64_t)cfg.sep_grid;
        if (work <= cfg.sep_work_cap) {
            r.measured = periodic_separation(s, cfg.sep_grid, cfg.flow);
            r.scanned = true;
        }
    }
    r.pass = std::isfinite(L) && (!r.scanned || r.measured > 0);
    r.limit_bound_log10 = (r.scanned ? std::log10(r.measured) : r.lower_bound_log10) - std::log10(r.product);
    return r;
}

// ---------------------------------------------------------------------------
// Liouville certificate

LiouvilleReport liouville_certificate(const std::vector<RationalAngle>& angles) {
    LiouvilleReport r;
    for (std::size_t n = 0; n < angles.size(); ++n) {
        if (angles[n].q() < (long)n)
            throw CertificateFailure("denominator q_n below n at index " + std::to_string(n), (long)n,
                                     angles[n].q().get_d());
    }
    for (std::size_t n = 0; n + 1 < angles.size(); ++n) {
        Rational d = circle_distance(angles[n + 1], angles[n]);
        Rational b = liouville_bound(angles[n].q());
        if (!(d > 0 && d < b))
            throw CertificateFailure("|alpha_{n+1} - alpha_n| violates the Liouville budget at index " +
                                         std::to_string(n),
                                     (long)n, to_double(d));
        r.tail_bounds.push_back(2 * b);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Surface lifts

SurfaceLift::SurfaceLift(const SchemeStage& s, Surface surf, const FlowConfig& cfg)
    : stage_(s), surface_(surf), f_(stage_map(s)), cfg_(cfg) {
    if (surf == Surface::Cylinder) throw PreconditionError("lift target must be the sphere or the disk");
}

SpherePoint SurfaceLift::operator()(const SpherePoint& p) const {
    if (surface_ != Surface::Sphere) throw PreconditionError("lift is not a sphere lift");
    if (p.x1 == 0.0 && p.x2 == 0.0) return p;  // poles are fixed by the ambient rotation
    CylinderPoint c = axial_project(p);
    XPoint w = f_.apply(XPoint(c), cfg_);
    double y = std::clamp((double)w.y, -1.0, 1.0);
    double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    double a = 2.0 * std::numbers::pi * (double)w.theta;
    SpherePoint out;
    out.x1 = r * std::cos(a);
    out.x2 = r * std::sin(a);
    out.x3 = y;
    return out;
}

DiskPoint SurfaceLift::operator()(const DiskPoint& p) const {
    if (surface_ != Surface::Disk) throw PreconditionError("lift is not a disk lift");
    if (p.x1 == 0.0 && p.x2 == 0.0) return p;  // centre fixed
    CylinderPoint c = polar_project(p);
    XPoint w = f_.apply(XPoint(c), cfg_);
    double y = std::clamp((double)w.y, -1.0, 1.0);
    double r = std::sqrt(0.5 * (1.0 + y));
    double a = 2.0 * std::numbers::pi * (double)w.theta;
    return {r * std::cos(a), r * std::sin(a)};
}

SurfaceLift lift_to_surface(const SchemeStage& s, Surface surf, const FlowConfig& cfg) {
    return SurfaceLift(s, surf, cfg);
}

double seam_residual(const SurfaceLift& lift, int samples, double collar, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const double a = lift.stage().alpha.to_double() * 2.0 * std::numbers::pi;
    double worst = 0;
    for (int i = 0; i < samples; ++i) {
        double th = U(rng);
        double y = (i % 2 ? -1.0 : 1.0) * (1.0 - collar);
        double ang = 2.0 * std::numbers::pi * th;
        if (lift.surface() == Surface::Sphere) {
            double r = std::sqrt(1.0 - y * y);
            SpherePoint p(r * std::cos(ang), r * std::sin(ang), y);
            SpherePoint l = lift(p);
            double c = std::cos(a), s = std::sin(a);
            double rx = c * p.x1 - s * p.x2, ry = s * p.x1 + c * p.x2;
            worst = std::max(worst, std::hypot(l.x1 - rx, l.x2 - ry, l.x3 - p.x3));
        } else {
            double r = std::sqrt(0.5 * (1.0 + y));
            DiskPoint p{r * std::cos(ang), r * std::sin(ang)};
            DiskPoint l = lift(p);
            double c = std::cos(a), s = std::sin(a);
            worst = std::max(worst, std::hypot(l.x1 - (c * p.x1 - s * p.x2), l.x2 - (s * p.x1 + c * p.x2)));
        }
    }
    return worst;
}

Witness transitivity_witness(const SchemeStage& s, double delta, const EngineConfig& cfg) {
    if (!(delta > 0)) throw PreconditionError("delta must be positive");
    if (delta <= pow3((int)s.n) || s.j < 1)
        throw WitnessNotFound("delta is below the certified density scale of the stage");
    MapExpr hinv = s.conjugator.inverse();
    const Offsets off(s.alpha);
    // |x - north pole|^2 = 2 (1 - x3) on the unit sphere
    const double ymin = 1.0 - 0.5 * delta * delta;
    const BigInt limit = s.N < (BigInt(1) << 62) ? s.N : (BigInt(1) << 62);
    const std::uint64_t N = limit.get_ui();
    std::vector<XPoint> seg;
    for (std::uint64_t k = 0; k <= N; ++k) {
        XPoint p = hinv.apply(XPoint((quad)s.base_theta + off(k), 0), cfg.flow);
        if (seg.empty()) {
            if ((double)p.y >= ymin) seg.push_back(p);
            continue;
        }
        seg.push_back(p);
        if ((double)p.y < 0) {
            Witness w;
            for (const XPoint& o : seg) w.orbit.push_back(axial_unproject(o.to_cylinder()));
            w.start = w.orbit.front();
            w.length = BigInt((unsigned long)(seg.size() - 1));
            w.start_index = BigInt((unsigned long)(k + 1 - seg.size()));
            return w;
        }
    }
    throw WitnessNotFound("no orbit segment from the polar collar reaches the southern hemisphere");
}

}  // namespace abc
