#pragma once

#include "abc/geometry.hpp"
#include "abc/map_algebra.hpp"

#include <array>
#include <complex>
#include <functional>
#include <vector>

namespace abc {

using Vec4 = std::array<double, 4>;
using CMat4 = std::array<cplx, 16>;  // row-major

// (Re theta, Im theta, Re y, Im y) with Re theta reduced mod 1.
struct Frame4Point {
    Vec4 v{};
    Frame4Point() = default;
    explicit Frame4Point(const Vec4& c);
    explicit Frame4Point(const ComplexCylinderPoint& p);
    ComplexCylinderPoint point() const;
};

// Smooth self-map of the complexified cylinder in frame coordinates. The first
// output coordinate may be returned unreduced; differences are taken mod 1.
using Map4 = std::function<Vec4(const Vec4&)>;
using JField = std::function<Mat4(const Frame4Point&)>;
using FormField = std::function<CMat4(const Frame4Point&)>;

Map4 as_map4(const MapExpr& m, const FlowConfig& cfg = {});
Map4 as_map4(std::function<ComplexCylinderPoint(const ComplexCylinderPoint&)> f);

// Central-difference 4x4 Jacobian.
Mat4 jacobian4(const Map4& h, const Frame4Point& p, double step);

Mat4 standard_J();       // J_o: multiplication by i in each complex coordinate
CMat4 standard_form();   // Omega_o = (1/2) dtheta ^ dy as a complex antisymmetric matrix
Mat4 sigma_differential();  // D sigma = diag(1, -1, 1, -1)

double op_norm(const Mat4& a);   // operator 2-norm
double form_norm(const CMat4& w);  // max modulus over the 6 coordinate bivectors

struct StructureSample {
    Frame4Point at;
    Mat4 J{};
    double square_residual = 0;  // ||J^2 + I||
};

struct FormSample {
    Frame4Point at;
    CMat4 W{};  // Omega(u, v) = u^T W v
};

// h*J_o = Dh^{-1} J_o Dh. Throws SingularJacobian when cond(Dh) > 1e6.
StructureSample pullback_structure(const Map4& h, const Frame4Point& p, double step);
// h*Omega_o = Dh^T W_o Dh.
FormSample pullback_form(const Map4& h, const Frame4Point& p, double step);

// Fields obtained by sampling the pullbacks with a fixed differencing step.
JField pullback_structure_field(const Map4& h, double step);
FormField pullback_form_field(const Map4& h, double step);
JField constant_field(const Mat4& J);

double nijenhuis_residual(const JField& J, const Frame4Point& p, double step);
// max of ||Omega(Ju, v) - i Omega(u, v)|| over frame pairs and ||d Omega|| over coordinate 3-frames.
struct HoloFormResidual {
    double type = 0;    // (2,0)-type defect
    double closed = 0;  // exterior derivative
    double value() const { return type > closed ? type : closed; }
};
HoloFormResidual holomorphic_form_residual(const FormField& W, const JField& J, const Frame4Point& p, double step);

// ||sigma(h(z)) - h(sigma(z))||
double sigma_map_residual(const Map4& h, const Frame4Point& p);
// ||D sigma^{-1} J(sigma(p)) D sigma + J(p)||
double sigma_structure_residual(const JField& J, const Frame4Point& p);
// ||Dh J_o - J_o Dh|| with a Richardson-combined central-difference Dh
double cauchy_riemann_residual(const Map4& h, const Frame4Point& p, double step);

// Least-squares slope of log(residual) against log(step).
double richardson_slope(const std::vector<double>& steps, const std::vector<double>& residuals);

// Slope fitted only on residuals above the roundoff floor 16 u / h^2 of a nested central
// difference. With fewer than two resolved steps the residual is already at roundoff.
struct DecaySlope {
    double slope = 0;
    std::size_t resolved = 0;
    bool below_roundoff() const { return resolved < 2; }
    bool pass(double min_slope) const { return below_roundoff() || slope >= min_slope; }
};
double nested_roundoff_floor(double step);
DecaySlope decay_slope(const std::vector<double>& steps, const std::vector<double>& residuals);

struct ConvergenceReport {
    std::vector<double> dJ, dOmega;  // entry n - 1 holds d(X_n, X_{n-1}) for n >= 1
    std::vector<bool> within_budget;  // strict: d < 2^{-n}
    long first_breach = -1;
    bool pass() const { return first_breach < 0; }
};
// Stage n fields are J[n], Omega[n]; stage 0 is the reference.
ConvergenceReport convergence_tracker(const std::vector<JField>& J, const std::vector<FormField>& Omega,
                                      const std::vector<Frame4Point>& points);
// Distances at one stage pair; used by the tracker and by amplitude retries.
double structure_distance(const JField& a, const JField& b, const std::vector<Frame4Point>& points);
double form_distance(const FormField& a, const FormField& b, const std::vector<Frame4Point>& points);

// A y-dependent rotation mixing the two complex lines; its Nijenhuis tensor does not vanish.
JField twisted_structure(double strength);

// Uniform random points of the domain A_rho (rejection sampling), from the given seed.
std::vector<Frame4Point> random_domain_points(double rho, int count, std::uint64_t seed, double margin = 0.0);

}  // namespace abc
