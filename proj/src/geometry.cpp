#include "abc/geometry.hpp"

#include "abc/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace abc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
const cplx kI(0.0, 1.0);

// theta = log((z1 + i z2) / sqrt(z1^2 + z2^2)) / (2 pi i), principal branches.
cplx angle_of(cplx z1, cplx z2) {
    cplx s = std::sqrt(z1 * z1 + z2 * z2);
    return std::log((z1 + kI * z2) / s) / (kTwoPi * kI);
}

}  // namespace

double wrap01(double t) {
    double r = t - std::floor(t);
    return r >= 1.0 ? 0.0 : r;
}

double circle_gap(double a, double b) {
    double d = std::fabs(wrap01(a) - wrap01(b));
    return std::min(d, 1.0 - d);
}

SpherePoint::SpherePoint(double a, double b, double c) {
    double n = std::sqrt(a * a + b * b + c * c);
    if (n == 0.0) throw RangeError("sphere point at the origin");
    x1 = a / n;
    x2 = b / n;
    x3 = c / n;
}

DomainSpec::DomainSpec(Surface s, double r) : surface(s), rho(r) {
    if (!(r > 1.0)) throw PreconditionError("complexified domain needs rho > 1");
}

const char* surface_name(Surface s) {
    switch (s) {
        case Surface::Cylinder: return "cylinder";
        case Surface::Sphere: return "sphere";
        case Surface::Disk: return "disk";
    }
    return "?";
}

Surface parse_surface(const std::string& s) {
    if (s == "cylinder") return Surface::Cylinder;
    if (s == "sphere") return Surface::Sphere;
    if (s == "disk") return Surface::Disk;
    throw ConfigError("unknown surface '" + s + "'");
}

double cyl_distance(const CylinderPoint& p, const CylinderPoint& q) {
    return std::max(circle_gap(p.theta, q.theta), 0.5 * std::fabs(p.y - q.y));
}

double complex_cyl_distance(const ComplexCylinderPoint& p, const ComplexCylinderPoint& q) {
    double d = circle_gap(p.theta.real(), q.theta.real());
    d = std::max(d, std::fabs(p.theta.imag() - q.theta.imag()));
    return std::max(d, 0.5 * std::abs(p.y - q.y));
}

CylinderPoint axial_project(const SpherePoint& s) {
    if (s.x1 == 0.0 && s.x2 == 0.0) throw PoleError("axial projection at a pole");
    return {std::atan2(s.x2, s.x1) / kTwoPi, s.x3};
}

ComplexCylinderPoint axial_project(const ComplexSpherePoint& s) {
    if (std::fabs(s.z[2].real()) >= 1.0) throw PoleError("axial projection needs |Re z3| < 1");
    return {angle_of(s.z[0], s.z[1]), s.z[2]};
}

SpherePoint axial_unproject(const CylinderPoint& c) {
    if (!(std::fabs(c.y) < 1.0)) throw RangeError("axial inverse needs |y| < 1");
    double r = std::sqrt(1.0 - c.y * c.y);
    SpherePoint s;
    s.x1 = r * std::cos(kTwoPi * c.theta);
    s.x2 = r * std::sin(kTwoPi * c.theta);
    s.x3 = c.y;
    return s;
}

ComplexSpherePoint axial_unproject(const ComplexCylinderPoint& c) {
    if (!(std::fabs(c.y.real()) < 1.0)) throw RangeError("axial inverse needs |Re y| < 1");
    cplx r = std::sqrt(1.0 - c.y * c.y);
    ComplexSpherePoint s;
    s.z = {r * std::cos(kTwoPi * c.theta), r * std::sin(kTwoPi * c.theta), c.y};
    return s;
}

CylinderPoint polar_project(const DiskPoint& d) {
    double r2 = d.x1 * d.x1 + d.x2 * d.x2;
    if (r2 == 0.0) throw OriginError("polar coordinates at the centre");
    return {std::atan2(d.x2, d.x1) / kTwoPi, 2.0 * r2 - 1.0};
}

ComplexCylinderPoint polar_project(const ComplexDiskPoint& d) {
    cplx r2 = d.z[0] * d.z[0] + d.z[1] * d.z[1];
    if (!(r2.real() > 0.0)) throw OriginError("polar coordinates need Re(z1^2 + z2^2) > 0");
    return {angle_of(d.z[0], d.z[1]), 2.0 * r2 - 1.0};
}

DiskPoint polar_unproject(const CylinderPoint& c) {
    if (!(c.y > -1.0)) throw OriginError("polar inverse at y = -1 is the centre");
    double r = std::sqrt(0.5 * (1.0 + c.y));
    return {r * std::cos(kTwoPi * c.theta), r * std::sin(kTwoPi * c.theta)};
}

ComplexDiskPoint polar_unproject(const ComplexCylinderPoint& c) {
    if (!(c.y.real() > -1.0)) throw OriginError("polar inverse needs Re y > -1");
    cplx r = std::sqrt(0.5 * (1.0 + c.y));
    ComplexDiskPoint d;
    d.z = {r * std::cos(kTwoPi * c.theta), r * std::sin(kTwoPi * c.theta)};
    return d;
}

DiskPoint disk_involution(const DiskPoint& x) {
    double r2 = x.x1 * x.x1 + x.x2 * x.x2;
    if (!(r2 > 0.0 && r2 < 2.0)) throw RangeError("involution defined on 0 < |x|^2 < 2");
    double s = std::sqrt(2.0 - r2) / std::sqrt(r2);
    return {s * x.x1, s * x.x2};
}

bool domain_contains(const DomainSpec& spec, const ComplexCylinderPoint& p) {
    if (spec.surface != Surface::Cylinder) return false;
    // |exp(2 pi i theta)|^2 = exp(-4 pi Im theta)
    double a = std::exp(-2.0 * kTwoPi * p.theta.imag());
    double b = std::exp(2.0 * kTwoPi * p.theta.imag());
    return a + b + std::norm(p.y) <= 3.0 * spec.rho;
}

bool domain_contains(const DomainSpec& spec, const CylinderPoint& p) {
    return domain_contains(spec, ComplexCylinderPoint(p));
}

bool domain_contains(const DomainSpec& spec, const ComplexSpherePoint& p) {
    if (spec.surface != Surface::Sphere) return false;
    return std::norm(p.z[0]) + std::norm(p.z[1]) + std::norm(p.z[2]) <= spec.rho;
}

bool domain_contains(const DomainSpec& spec, const ComplexDiskPoint& p) {
    if (spec.surface != Surface::Disk) return false;
    return std::norm(p.z[0]) + std::norm(p.z[1]) <= spec.rho;
}

bool in_cylinder_strip(const ComplexCylinderPoint& p) { return std::fabs(p.y.real()) < 1.0; }

bool in_sphere_strip(const ComplexSpherePoint& p) { return std::fabs(p.z[2].real()) < 1.0; }

bool in_disk_strip(const ComplexDiskPoint& p) {
    double r = (p.z[0] * p.z[0] + p.z[1] * p.z[1]).real();
    return r > 0.0 && r < 1.0;
}

}  // namespace abc
