#include "abc/cli_persistence.hpp"
#include "abc/errors.hpp"

#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace abc;

namespace {

py::int_ to_py(const BigInt& z) {
    return py::reinterpret_steal<py::int_>(PyLong_FromString(z.get_str().c_str(), nullptr, 10));
}

py::dict cert_dict(const StageCertificates& c) {
    py::dict d;
    d["curve_covering"] = c.curve_covering;
    d["orbit_covering"] = c.orbit_covering;
    d["conjugacy"] = c.conjugacy;
    d["commutation"] = c.commutation;
    d["symplectic"] = c.symplectic;
    d["lipschitz"] = c.lipschitz;
    return d;
}

py::dict glue_dict(const GlueReport& g) {
    py::dict d;
    d["panels"] = g.panels;
    d["det_residual"] = g.det_residual;
    d["membership_excess"] = g.membership_excess;
    d["support_samples"] = g.support_samples;
    d["support_moved"] = g.support_moved;
    d["support_formula_residual"] = g.support_formula_residual;
    d["structure_distance"] = g.structure_distance;
    d["form_distance"] = g.form_distance;
    d["sigma_residual"] = g.sigma_residual;
    d["mass_residual"] = g.mass_residual;
    d["tau"] = g.tau;
    d["rotation_residual"] = g.rotation_residual;
    return d;
}

ExperimentConfig config_from(const py::dict& d) {
    ExperimentConfig c;
    for (auto [k, v] : d) c.set(py::str(k), py::str(v));
    c.validate();
    return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.attr("__version__") = kToolVersion;

    auto base = py::register_exception<Error>(m, "AbcError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<CertificateFailure>(m, "CertificateFailure", base.ptr());
    py::register_exception<UnknownCheck>(m, "UnknownCheck", base.ptr());
    py::register_exception<MissingStage>(m, "MissingStage", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<PoleError>(m, "PoleError", base.ptr());
    py::register_exception<RangeError>(m, "RangeError", base.ptr());

    // geometry
    m.def("axial_project", [](double x1, double x2, double x3) {
        CylinderPoint c = axial_project(SpherePoint(x1, x2, x3));
        return py::make_tuple(c.theta, c.y);
    });
    m.def("axial_unproject", [](double theta, double y) {
        SpherePoint s = axial_unproject(CylinderPoint(theta, y));
        return py::make_tuple(s.x1, s.x2, s.x3);
    });
    m.def("polar_project", [](double x1, double x2) {
        CylinderPoint c = polar_project(DiskPoint{x1, x2});
        return py::make_tuple(c.theta, c.y);
    });
    m.def("polar_unproject", [](double theta, double y) {
        DiskPoint d = polar_unproject(CylinderPoint(theta, y));
        return py::make_tuple(d.x1, d.x2);
    });
    m.def("disk_involution", [](double x1, double x2) {
        DiskPoint d = disk_involution(DiskPoint{x1, x2});
        return py::make_tuple(d.x1, d.x2);
    });
    m.def("cyl_distance", [](double t1, double y1, double t2, double y2) {
        return cyl_distance(CylinderPoint(t1, y1), CylinderPoint(t2, y2));
    });

    // engine
    py::class_<SchemeStage>(m, "Stage")
        .def_property_readonly("n", [](const SchemeStage& s) { return s.n; })
        .def_property_readonly("alpha", [](const SchemeStage& s) { return s.alpha.str(); })
        .def_property_readonly("q", [](const SchemeStage& s) { return to_py(s.alpha.q()); })
        .def_property_readonly("j", [](const SchemeStage& s) { return s.j; })
        .def_property_readonly("N", [](const SchemeStage& s) { return to_py(s.N); })
        .def_property_readonly("epsilon", [](const SchemeStage& s) { return s.epsilon; })
        .def_property_readonly("certificates", [](const SchemeStage& s) { return cert_dict(s.cert); })
        .def("iterate",
             [](const SchemeStage& s, double theta, double y, long k) {
                 CylinderPoint c = stage_iterate(s, XPoint(CylinderPoint(theta, y)), BigInt(k)).to_cylinder();
                 return py::make_tuple(c.theta, c.y);
             })
        .def("symplectic_residual",
             [](const SchemeStage& s, int grid_n) { return symplectic_residual(stage_map(s), grid_n); },
             py::arg("grid_n") = 64);
    m.def(
        "initial_stage", [](int grid_n) {
            EngineConfig c;
            c.grid_n = grid_n;
            return initial_stage(c);
        },
        py::arg("grid_n") = 64);
    m.def(
        "step", [](const SchemeStage& s, int grid_n) {
            EngineConfig c;
            c.grid_n = grid_n;
            py::gil_scoped_release release;
            return step(s, c);
        },
        py::arg("stage"), py::arg("grid_n") = 64);
    m.def("liouville_certificate", [](const std::vector<std::string>& angles) -> py::tuple {
        std::vector<RationalAngle> a;
        for (const auto& s : angles) a.push_back(RationalAngle::parse(s));
        try {
            LiouvilleReport r = liouville_certificate(a);
            return py::make_tuple(r.pass, r.violated, r.reason);
        } catch (const CertificateFailure& e) {
            return py::make_tuple(false, e.index, std::string(e.what()));
        }
    });

    // complex diagnostics
    m.def(
        "twisted_nijenhuis",
        [](double strength, std::array<double, 4> p, double step) {
            return nijenhuis_residual(twisted_structure(strength), Frame4Point(p), step);
        },
        py::arg("strength"), py::arg("point"), py::arg("step") = 1e-4);
    m.def("random_domain_points", [](double rho, int count, std::uint64_t seed) {
        std::vector<std::array<double, 4>> out;
        for (const auto& p : random_domain_points(rho, count, seed)) out.push_back(p.v);
        return out;
    });

    // gluing
    m.def(
        "glue_report",
        [](double shear, double twist, std::uint64_t freq, double eta, double eps, double R, int grid) {
            py::gil_scoped_release release;
            GlueReport g = glue_and_report(EntireMapSpec::shear_twist(shear, twist, freq), BumpProfile(eta, eps), R,
                                           grid);
            py::gil_scoped_acquire acquire;
            return glue_dict(g);
        },
        py::arg("shear") = 0.05, py::arg("twist") = 0.03, py::arg("freq") = 1, py::arg("eta") = 0.05,
        py::arg("eps") = 0.2, py::arg("R") = 2.0, py::arg("grid") = 64);

    // runs
    m.def("config_keys", &ExperimentConfig::keys);
    m.def("config_canonical", [](const py::dict& d) { return config_from(d).canonical(); });
    m.def("config_hash", [](const py::dict& d) { return config_from(d).hash(); });
    m.def(
        "run",
        [](const py::dict& d, bool resume) {
            ExperimentConfig c = config_from(d);
            RunManifest r;
            {
                py::gil_scoped_release release;
                r = run(c, resume);
            }
            py::dict out;
            out["config_hash"] = r.config_hash;
            out["tool_version"] = r.tool_version;
            out["status"] = r.status;
            out["stage_files"] = r.stage_files;
            return out;
        },
        py::arg("config"), py::arg("resume") = false);
    m.def("load_stages", [](const std::filesystem::path& dir) { return RunDirectory(dir).stages(); });
    m.def("diagnose", [](const std::filesystem::path& dir, const std::string& check, long stage) {
        DiagnosticReport r = diagnose(RunDirectory(dir), check, stage);
        return py::make_tuple(r.pass, r.text);
    });
    m.def(
        "export_orbit",
        [](const std::filesystem::path& dir, long stage, double theta, double y, long length,
           const std::filesystem::path& out) {
            export_orbit(RunDirectory(dir), stage, OrbitExportOptions{theta, y, length}, out);
        },
        py::arg("run_dir"), py::arg("stage"), py::arg("theta") = 0.0, py::arg("y") = 0.0, py::arg("length") = 1,
        py::arg("out"));
}
