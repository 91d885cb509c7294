#pragma once

#include "abc/geometry.hpp"
#include "abc/rational.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace abc {

struct FlowConfig {
    int steps = 256;     // integrator steps per unit time
    double tol = 1e-13;  // Newton stopping tolerance
    int max_newton = 60;
    void validate() const;
};

// Real point carried in extended precision. Angles stay meaningful under
// Hamiltonian flows whose frequency is far beyond 2^53.
struct XPoint {
    quad theta = 0;
    long double y = 0;
    XPoint() = default;
    XPoint(quad t, long double y);
    explicit XPoint(const CylinderPoint& p);
    CylinderPoint to_cylinder() const;
};

quad wrap01q(quad t);
// Signed representative of a - b in (-1/2, 1/2].
quad signed_gap(quad a, quad b);
double xdistance(const XPoint& a, const XPoint& b);

struct TrigTerm {
    int k = 1;
    double a = 0;  // cos coefficient
    double b = 0;  // sin coefficient
};

using Mat2 = std::array<double, 4>;   // row-major
using Mat4 = std::array<double, 16>;  // row-major

class MapExpr {
public:
    enum class Kind { Rotation, Shear, Twist, HamFlow, Compose, Inverse };

    static MapExpr identity();
    static MapExpr rotation(const RationalAngle& alpha);
    static MapExpr rotation(double alpha);
    // (theta, y) -> (theta + sum c_i y^i, y)
    static MapExpr shear(std::vector<double> coeffs);
    // (theta, y) -> (theta, y + sum a cos(2 pi k theta) + b sin(2 pi k theta))
    static MapExpr twist(std::vector<TrigTerm> terms);
    // time-one map of K (1 - y^2) cos(2 pi freq theta)
    static MapExpr ham_flow(double K, std::uint64_t freq, int steps);
    // compose({a, b, c}) = a o b o c
    static MapExpr compose(std::vector<MapExpr> parts);
    static MapExpr compose(const MapExpr& outer, const MapExpr& inner);

    MapExpr inverse() const;

    Kind kind() const;
    bool has_flow() const;
    bool closed_form() const { return !has_flow(); }

    // Leaf accessors (valid for the matching kind).
    bool exact_angle() const;
    const RationalAngle& angle() const;
    double real_angle() const;
    const std::vector<double>& shear_coeffs() const;
    const std::vector<TrigTerm>& twist_terms() const;
    double flow_K() const;
    std::uint64_t flow_freq() const;
    int flow_steps() const;
    const std::vector<MapExpr>& parts() const;

    CylinderPoint operator()(const CylinderPoint& p, const FlowConfig& cfg = {}) const;
    XPoint apply(const XPoint& p, const FlowConfig& cfg = {}) const;
    ComplexCylinderPoint operator()(const ComplexCylinderPoint& p, const FlowConfig& cfg = {}) const;

    std::string serialize() const;
    static MapExpr parse(const std::string& text);

private:
    struct Node;
    explicit MapExpr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const Node> node_;
    friend struct Eval;
    friend Mat2 analytic_jacobian(const MapExpr& m, const XPoint& p, const FlowConfig& cfg);
    friend double analytic_det(const MapExpr& m, const XPoint& p, const FlowConfig& cfg);
};

double ham_energy(double K, std::uint64_t freq, double theta, double y);

CylinderPoint ham_time_one(double K, std::uint64_t freq, const CylinderPoint& p, const FlowConfig& cfg = {});
ComplexCylinderPoint ham_time_one(double K, std::uint64_t freq, const ComplexCylinderPoint& p,
                                  const FlowConfig& cfg = {});

// Central-difference Jacobian in (theta, y).
Mat2 jacobian(const MapExpr& m, const CylinderPoint& p, double step, const FlowConfig& cfg = {});
// Two-step Richardson combination of central differences.
Mat2 jacobian_richardson(const MapExpr& m, const CylinderPoint& p, double step, const FlowConfig& cfg = {});
// Exact derivative of the evaluated map: closed forms for shear/twist/rotation, the
// derivative of the discrete midpoint map for flows.
Mat2 analytic_jacobian(const MapExpr& m, const CylinderPoint& p, const FlowConfig& cfg = {});
Mat2 analytic_jacobian(const MapExpr& m, const XPoint& p, const FlowConfig& cfg);
// Determinant of the same derivative, accumulated as the product of the factor
// determinants so it stays accurate when the matrix entries are large.
double analytic_det(const MapExpr& m, const XPoint& p, const FlowConfig& cfg = {});
// 4x4 real Jacobian in the frame (Re theta, Im theta, Re y, Im y).
Mat4 jacobian4(const MapExpr& m, const ComplexCylinderPoint& p, double step, const FlowConfig& cfg = {});

double det2(const Mat2& a);
// Operator norm for the cylinder metric max(|dtheta|, |dy|/2).
double metric_norm(const Mat2& a);

// Grid point (i, j) of an n x n grid: theta = i/n, y from -1 to 1 inclusive.
CylinderPoint grid_point(int i, int j, int n);

double commutation_residual(const MapExpr& m, const RationalAngle& alpha, int grid_n, const FlowConfig& cfg = {});

}  // namespace abc
