#pragma once

#include "abc/geometry.hpp"
#include "abc/map_algebra.hpp"
#include "abc/rational.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace abc {

struct EngineConfig {
    int grid_n = 64;              // diagnostic grid
    FlowConfig flow;
    int curve_samples = 2048;     // samples of one period of the equator image
    double amp_start = 1.0 / 64;  // first amplitude K * freq tried by the search
    double amp_cap = 16.0;        // SearchExhausted beyond this amplitude
    int refine_steps = 6;         // bisection steps after the doubling bracket
    int max_eps_halvings = 12;
    int image_samples = 1 << 15;  // equator samples for the stage curve certificate
    int base_candidates = 64;     // base points tried for orbit density
    std::uint64_t orbit_enum_cap = 1 << 15;  // enumerate orbits of f_n directly below this q
    long density_probe_cap = 64;  // largest q' probed by the density term
    int sep_grid = 16;            // grid for periodic separation scans
    std::uint64_t sep_work_cap = 1 << 16;  // max (q - 1) * sep_grid^2 evaluations for a full scan
    double conj_tol = 1e-8;
    void validate() const;
};

// Points on a cylinder, optionally invariant under Rot_{1/cells}; distances to the
// set then use the gap modulo 1/cells.
class CoverIndex {
public:
    explicit CoverIndex(std::vector<XPoint> pts, std::uint64_t cells = 1);
    double distance(const XPoint& x) const;
    std::size_t size() const { return pts_.size(); }

private:
    std::vector<XPoint> pts_;
    std::vector<double> phase_;  // cells * theta mod 1
    std::vector<std::vector<std::uint32_t>> bins_;
    std::uint64_t cells_;
};

// Max over the grid of the distance to the point set.
double covering_radius(const std::vector<CylinderPoint>& points, int grid_n);
double covering_radius(const CoverIndex& index, int grid_n);

struct Conjugator {
    MapExpr map = MapExpr::identity();  // HamFlow(K, q * M)
    std::uint64_t q = 1, M = 1;
    double eps = 0;
    double K = 0;
    int doublings = 0;
    double reach = 0;        // max |y| over the sampled image of the equator
    double covering = 0;     // covering radius of the image of the equator
    double commutation = 0;  // residual against Rot_{1/q}
};

Conjugator make_conjugator(std::uint64_t q, double eps, const EngineConfig& cfg = {});

struct NuTerms {
    Rational farey, liouville, separation, closeness, density;
    bool closeness_active = false, density_active = false;
    bool closeness_bound = false;  // N times a grid sup instead of the recorded orbit
    double separation_value = 0;  // periodic separation used by the separation term
    bool separation_exact = false;  // from a full scan, otherwise the lower bound
    Rational nu;
};

struct StageCertificates {
    double curve_covering = -1;    // h_n^{-1}(T x {0}) at level 3^{-j-1}
    double orbit_covering = -1;    // orbit segment of f_n
    double conjugacy = -1;         // identity of step n-1 -> n
    double commutation = -1;       // conjugator against Rot_{alpha_{n-1}}
    double symplectic = -1;        // max |det Df_n - 1|
    double lipschitz = -1;         // grid bound of ||D h_n^{-1}||
};

struct SchemeStage {
    long n = 0;
    RationalAngle alpha;
    MapExpr conjugator = MapExpr::identity();  // h_n
    std::vector<Conjugator> factors;            // h_n = g_{n-1}^{-1} o ... o g_0^{-1}
    int j = 0;
    BigInt N = 0;
    Rational nu = 0;  // nu(h_n, alpha_{n-1}) used to pick alpha_n
    NuTerms nu_terms;
    double epsilon = 0;
    double epsilon_lipschitz = 0;  // the modulus a worst-case Jacobian bound would give
    double base_theta = 0;         // base point x = h_n^{-1}(base_theta, 0)
    CylinderPoint base;
    StageCertificates cert;
};

SchemeStage initial_stage(const EngineConfig& cfg = {});

// f_n = h_n^{-1} o Rot_{alpha_n} o h_n
MapExpr stage_map(const SchemeStage& s);
XPoint stage_iterate(const SchemeStage& s, const XPoint& x, const BigInt& k, const FlowConfig& cfg = {});

double grid_lipschitz(const MapExpr& m, int grid_n, const FlowConfig& cfg = {});
double symplectic_residual(const MapExpr& m, int grid_n, const FlowConfig& cfg = {});
// sup over the grid of d(a(x), b(x))
double map_distance(const MapExpr& a, const MapExpr& b, int grid_n, const FlowConfig& cfg = {});

// min over grid and 0 < k < q of d(x, f^k(x)) for f = h^{-1} Rot_alpha h.
double periodic_separation(const std::function<XPoint(const XPoint&, std::uint64_t)>& fk, std::uint64_t q,
                           int grid_n);
double periodic_separation(const SchemeStage& s, int grid_n, const FlowConfig& cfg = {});

NuTerms select_nu(const SchemeStage& current, const SchemeStage& next, const EngineConfig& cfg = {});
RationalAngle choose_next_alpha(const RationalAngle& alpha, const Rational& nu, long n);

SchemeStage step(const SchemeStage& stage, const EngineConfig& cfg = {});

struct OrbitDensity {
    double covering = 1;
    BigInt N = 0;
    double base_theta = 0;
    bool enumerated = true;  // false when iterates were picked by offset
    double offset_error_log2 = -1e300;  // log2 bound on |evaluated - true| offsets
};
// Density of an orbit segment of f_n from base points h_n^{-1}(t, 0).
OrbitDensity orbit_density(const SchemeStage& s, double target, const EngineConfig& cfg = {});

// Growth inequality data for 0 < k < q_n.
struct GrowthReport {
    std::uint64_t range = 0;    // q_n - 1 iterates required
    std::uint64_t checked = 0;  // iterates evaluated on the grid
    bool exhaustive = false;
    double worst_excess = -1;  // max_k (lhs - rhs)
    std::uint64_t worst_k = 0;
    bool pass = false;  // every k < q_n checked and none exceeded
};
// Exhaustive when (q_n - 1) * grid_n^2 <= max_work; otherwise sample_k iterates from
// both ends and the interior of the range are evaluated and pass stays false.
GrowthReport growth_inequality(const SchemeStage& s, const SchemeStage& next, int grid_n,
                               const FlowConfig& cfg = {}, std::uint64_t max_work = 1ull << 24,
                               int sample_k = 64);

struct SeparationReport {
    double measured = -1;   // full scan minimum, when performed
    double lower_bound_log10 = 0;  // log10 of 1 / (q * Lip(h_n))
    double product = 1;     // prod over recorded stages m >= n of (1 + 2^{-q_m})
    double limit_bound_log10 = 0;  // separation (measured or bound) divided by the product
    bool scanned = false;
    bool pass = false;
};
SeparationReport separation_report(const std::vector<SchemeStage>& stages, std::size_t index,
                                   const EngineConfig& cfg = {});

struct LiouvilleReport {
    bool pass = true;
    long violated = -1;
    std::string reason;
    std::vector<Rational> tail_bounds;  // 2 * 2^{-q_n} q_n^{-q_n}
};
LiouvilleReport liouville_certificate(const std::vector<RationalAngle>& angles);

class SurfaceLift {
public:
    SurfaceLift(const SchemeStage& s, Surface surf, const FlowConfig& cfg = {});
    SpherePoint operator()(const SpherePoint& p) const;
    DiskPoint operator()(const DiskPoint& p) const;
    Surface surface() const { return surface_; }
    const SchemeStage& stage() const { return stage_; }

private:
    SchemeStage stage_;
    Surface surface_;
    MapExpr f_;
    FlowConfig cfg_;
};

SurfaceLift lift_to_surface(const SchemeStage& s, Surface surf, const FlowConfig& cfg = {});
// max |lift(x) - rotation(x)| style seam residual on points with |y| = 1 - collar
double seam_residual(const SurfaceLift& lift, int samples, double collar, std::uint64_t seed);

struct Witness {
    SpherePoint start;
    std::vector<SpherePoint> orbit;
    BigInt length = 0;
    BigInt start_index = 0;  // iterate of the base point where the segment starts
};
Witness transitivity_witness(const SchemeStage& s, double delta, const EngineConfig& cfg = {});

}  // namespace abc
