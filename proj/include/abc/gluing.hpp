#pragma once

#include "abc/complex_diagnostics.hpp"
#include "abc/geometry.hpp"
#include "abc/map_algebra.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace abc {

// Plateau bump in y: 1 on |y| <= 1 - eps, 0 on |y| >= 1 - eta, exp(-1/t) transitions.
class BumpProfile {
public:
    BumpProfile(double eta, double eps);
    double eta() const { return eta_; }
    double eps() const { return eps_; }
    double operator()(double y) const;
    double derivative(double y) const;

private:
    double eta_, eps_;
};

// C-infinity step: 0 for t <= 0, 1 for t >= 1.
double smooth_step(double t);
double smooth_step_derivative(double t);

// Alternating real shears and twists, evaluated holomorphically.
class EntireMapSpec {
public:
    struct Leaf {
        bool twist = false;
        std::vector<double> shear;     // theta += sum c_i y^i
        std::vector<TrigTerm> terms;   // y += sum a cos(2 pi k theta) + b sin(2 pi k theta)
    };

    EntireMapSpec() = default;
    EntireMapSpec(std::vector<Leaf> leaves, std::uint64_t q = 0);
    // shear_twist(s, a, k) = Shear(theta += s y^2) o Twist(y += a sin(2 pi k theta))
    static EntireMapSpec shear_twist(double s, double a, std::uint64_t k = 1, std::uint64_t q = 0);

    const std::vector<Leaf>& leaves() const { return leaves_; }
    std::uint64_t q() const { return q_; }
    bool is_identity() const;
    EntireMapSpec scaled(double t) const;
    MapExpr expr() const;

    CylinderPoint operator()(const CylinderPoint& p) const;
    ComplexCylinderPoint operator()(const ComplexCylinderPoint& p) const;
    // Real Jacobian in (theta, y) at a real point; theta increment returned unreduced.
    Mat2 jacobian(double theta, double y, double* dtheta = nullptr, double* y_out = nullptr) const;

    std::string serialize() const;

private:
    std::vector<Leaf> leaves_;  // applied last to first, like compose
    std::uint64_t q_ = 0;
};

ComplexCylinderPoint blend(const EntireMapSpec& h, const BumpProfile& beta, const ComplexCylinderPoint& p);
CylinderPoint blend(const EntireMapSpec& h, const BumpProfile& beta, const CylinderPoint& p);

class BlendedMap {
public:
    BlendedMap(EntireMapSpec h, BumpProfile beta) : h_(std::move(h)), beta_(beta) {}
    CylinderPoint operator()(const CylinderPoint& p) const { return blend(h_, beta_, p); }
    ComplexCylinderPoint operator()(const ComplexCylinderPoint& p) const { return blend(h_, beta_, p); }
    // det of the real Jacobian; RangeError off the real cylinder
    double area_density(double theta, double y) const;
    const EntireMapSpec& entire() const { return h_; }
    const BumpProfile& bump() const { return beta_; }

private:
    EntireMapSpec h_;
    BumpProfile beta_;
};

double area_density(const BlendedMap& m, double theta, double y);

// Periodic function stored by its Fourier coefficients.
class TrigSeries {
public:
    TrigSeries() = default;
    // From samples f(i / n), i < n; modes below cutoff * max |c| are dropped.
    static TrigSeries interpolate(const std::vector<double>& samples, double cutoff = 1e-17);
    double value(double theta) const;
    double derivative(double theta) const;
    double mean() const { return c0_; }
    // Primitive with zero mean; the constant term of this series is ignored.
    TrigSeries primitive() const;
    TrigSeries operator*(double s) const;
    TrigSeries shifted(double c) const;  // adds a constant
    std::size_t modes() const { return re_.size(); }

private:
    double c0_ = 0;
    std::vector<double> re_, im_;  // f = c0 + 2 sum (re_k cos + (-im_k) sin) written as Re(c_k e^{2 pi i k t})
};

using GSampler = std::function<double(double theta, double y)>;

struct CorrectionConfig {
    int quad_n = 1024;         // theta table for the cumulative integrals
    double quad_tol = 1e-9;    // panel doubling stops below this change
    int max_panels = 1 << 14;  // QuadratureError beyond this
    FlowConfig flow{64, 1e-15, 100};
    void validate() const;
};

// phi_r = phi2 o phi1 with phi1 = (theta, G(theta, y)), dG/dy = g and phi2 a bump-Hamiltonian correction
// returning the image boundary curves to y = +-1.
class VolumeCorrection {
public:
    VolumeCorrection(GSampler g, const BumpProfile& beta, const CorrectionConfig& cfg = {});

    CylinderPoint phi1(const CylinderPoint& p) const;
    CylinderPoint phi1_inverse(const CylinderPoint& p) const;
    CylinderPoint phi2(const CylinderPoint& p) const;
    CylinderPoint phi2_inverse(const CylinderPoint& p) const;
    CylinderPoint apply(const CylinderPoint& p) const;  // phi2 o phi1
    // Identity for |y| >= 1 - eta by construction; elsewhere phi1^{-1} o phi2^{-1}.
    CylinderPoint inverse(const CylinderPoint& p) const;
    // Same composition evaluated everywhere, for checking the structural shortcut.
    CylinderPoint inverse_unrestricted(const CylinderPoint& p) const;

    double G(double theta, double y) const;
    double gamma_plus(double theta) const;
    double gamma_minus(double theta) const;
    double tau() const { return tau_; }
    double mass() const { return mass_; }  // integral over the circle of gamma_plus - gamma_minus
    int panels() const { return panels_; }
    bool trivial() const { return trivial_; }
    const BumpProfile& bump() const { return beta_; }

private:
    double excess(double theta, double a, double b, int panels) const;  // int_a^b (g - 1)
    double hamiltonian_field(double theta, double y, double& dtheta) const;
    CylinderPoint flow(const CylinderPoint& p, bool backward) const;

    GSampler g_;
    BumpProfile beta_;
    CorrectionConfig cfg_;
    int panels_ = 0;
    bool trivial_ = false;  // g == 1 on every sample
    TrigSeries A_, B_;      // int_{-1}^0 (g - 1), int_0^1 (g - 1)
    TrigSeries Gp_, Gm_;    // Gamma_+- derivatives are -(1/2)(gamma_+- -+ 1 - tau)
    TrigSeries dGp_, dGm_;
    double tau_ = 0, mass_ = 2;
};

// h = hat h_r o phi_r^{-1}; complex points use phi_r^{-1} on real parts and keep imaginary parts.
class GluedMap {
public:
    GluedMap(EntireMapSpec h, const BumpProfile& beta, const CorrectionConfig& cfg = {});
    CylinderPoint operator()(const CylinderPoint& p) const;
    ComplexCylinderPoint operator()(const ComplexCylinderPoint& p) const;
    Map4 map4() const;
    const BlendedMap& blended() const { return hat_; }
    const VolumeCorrection& correction() const { return *phi_; }

private:
    BlendedMap hat_;
    std::shared_ptr<VolumeCorrection> phi_;
};

struct GlueReport {
    double eta = 0, eps = 0, R = 0;
    int grid_n = 0, complex_grid_n = 0, complex_points = 0;
    int panels = 0;
    std::string entire;
    double det_residual = 0;           // sup |det Dh - 1| on the real grid
    double membership_excess = 0;      // sup max(|y'| - 1, 0) on the real grid
    long support_samples = 0;          // samples with |Re y| >= 1 - eta
    long support_moved = 0;            // of those, not fixed bitwise
    double support_formula_residual = 0;  // unrestricted phi_r^{-1} against identity there
    double structure_distance = 0;     // sup ||h*J_o - J_o||
    double form_distance = 0;          // sup ||h*Omega_o - Omega_o||
    double sigma_residual = 0;         // sup of the real-structure residual
    double mass_residual = 0;          // |int (gamma_+ - gamma_-) - 2|
    double tau = 0;
    double rotation_residual = -1;     // commutation with Rot_{1/q}, when q is set
    std::string to_text() const;
};

struct GlueOptions {
    int complex_grid_n = 6;  // per-axis resolution of the complexified grid of A_R
    double step = 1e-4;      // differencing step
    CorrectionConfig correction;
};

GlueReport glue_and_report(const EntireMapSpec& h, const BumpProfile& beta, double R, int grid_n,
                           const GlueOptions& opt = {});

// Grid of A_rho: n points per axis on a box containing it, filtered by membership.
std::vector<Frame4Point> complex_grid(double rho, int n);

// Counts pairs of distinct grid points of A_rho whose blended images lie within resolution (max norm).
long blend_collisions(const EntireMapSpec& h, const BumpProfile& beta, double rho, int n, double resolution);

// Stage-by-stage composition H_n = d_n o H_{n-1} of glued deformations d_n of amplitude t_n.
struct LadderStage {
    double amplitude = 0;
    int halvings = 0;
    double dJ = 0, dOmega = 0;  // distances to the previous stage on the tracking points
};

class DeformationBuilder {
public:
    DeformationBuilder(EntireMapSpec base, const BumpProfile& beta, std::vector<Frame4Point> points,
                       const GlueOptions& opt = {});
    // Tries amplitude t, halving until both distances are below 2^{-n} or max_halvings is reached.
    LadderStage add(double t, int max_halvings = 8);
    // Appends a stage with a known amplitude (resume path); no retries.
    LadderStage add_fixed(double t);
    std::size_t size() const { return deform_.size(); }
    Map4 map(std::size_t n) const;  // H_n, with H_0 the identity
    JField structure(std::size_t n) const;
    FormField form(std::size_t n) const;
    const std::vector<Frame4Point>& points() const { return points_; }
    const EntireMapSpec& base() const { return base_; }
    const BumpProfile& bump() const { return beta_; }
    const GlueOptions& options() const { return opt_; }

private:
    LadderStage measure(const Map4& d, double t, int halvings) const;
    EntireMapSpec base_;
    BumpProfile beta_;
    std::vector<Frame4Point> points_;
    GlueOptions opt_;
    std::vector<Map4> deform_;
};

struct DeformationLadder {
    std::vector<LadderStage> stages;  // stages[n - 1] for n = 1..
    ConvergenceReport report;
    bool pass() const { return report.pass(); }
};
// t_n = 2^{-n-1}
std::vector<double> default_amplitude_schedule(int stages);
DeformationLadder deformation_ladder(const EntireMapSpec& base, const BumpProfile& beta,
                                     const std::vector<double>& schedule, const std::vector<Frame4Point>& points,
                                     int max_halvings = 8, const GlueOptions& opt = {});

}  // namespace abc
