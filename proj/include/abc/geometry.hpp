#pragma once

#include <array>
#include <complex>
#include <string>

namespace abc {

using cplx = std::complex<double>;

double wrap01(double t);
// Distance on R/Z, in [0, 1/2].
double circle_gap(double a, double b);

struct CylinderPoint {
    double theta = 0;
    double y = 0;
    CylinderPoint() = default;
    CylinderPoint(double theta, double y) : theta(wrap01(theta)), y(y) {}
    bool on_surface() const { return y >= -1.0 && y <= 1.0; }
};

struct ComplexCylinderPoint {
    cplx theta;
    cplx y;
    ComplexCylinderPoint() = default;
    ComplexCylinderPoint(cplx theta, cplx y) : theta(wrap01(theta.real()), theta.imag()), y(y) {}
    explicit ComplexCylinderPoint(const CylinderPoint& p) : theta(p.theta, 0.0), y(p.y, 0.0) {}
    bool is_real() const { return theta.imag() == 0.0 && y.imag() == 0.0; }
};

// Unit sphere point; renormalised on construction.
struct SpherePoint {
    double x1 = 1, x2 = 0, x3 = 0;
    SpherePoint() = default;
    SpherePoint(double x1, double x2, double x3);
};

struct ComplexSpherePoint {
    std::array<cplx, 3> z{};
};

struct DiskPoint {
    double x1 = 0, x2 = 0;
    bool on_surface() const { return x1 * x1 + x2 * x2 <= 1.0; }
};

struct ComplexDiskPoint {
    std::array<cplx, 2> z{};
};

enum class Surface { Cylinder, Sphere, Disk };

struct DomainSpec {
    Surface surface = Surface::Cylinder;
    double rho = 2.0;
    DomainSpec(Surface s, double rho);
};

const char* surface_name(Surface s);
Surface parse_surface(const std::string& s);

double cyl_distance(const CylinderPoint& p, const CylinderPoint& q);
// Same metric for complexified points, measured on real parts plus imaginary offsets.
double complex_cyl_distance(const ComplexCylinderPoint& p, const ComplexCylinderPoint& q);

CylinderPoint axial_project(const SpherePoint& s);
ComplexCylinderPoint axial_project(const ComplexSpherePoint& s);
SpherePoint axial_unproject(const CylinderPoint& c);
ComplexSpherePoint axial_unproject(const ComplexCylinderPoint& c);

CylinderPoint polar_project(const DiskPoint& d);
ComplexCylinderPoint polar_project(const ComplexDiskPoint& d);
DiskPoint polar_unproject(const CylinderPoint& c);
ComplexDiskPoint polar_unproject(const ComplexCylinderPoint& c);

DiskPoint disk_involution(const DiskPoint& x);

bool domain_contains(const DomainSpec& spec, const ComplexCylinderPoint& p);
bool domain_contains(const DomainSpec& spec, const ComplexSpherePoint& p);
bool domain_contains(const DomainSpec& spec, const ComplexDiskPoint& p);
bool domain_contains(const DomainSpec& spec, const CylinderPoint& p);

// Strips where the projections are defined.
bool in_cylinder_strip(const ComplexCylinderPoint& p);  // |Re y| < 1
bool in_sphere_strip(const ComplexSpherePoint& p);      // |Re z3| < 1
bool in_disk_strip(const ComplexDiskPoint& p);          // 0 < Re(z1^2 + z2^2) < 1

}  // namespace abc
