// Command-line front end: run, diagnose, export-orbit, glue-report, liouville.
// Exit status: 0 pass, 1 certificate or tolerance breach, 2 usage or input error.

#include "abc/cli_persistence.hpp"
#include "abc/errors.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <map>
#include <optional>

namespace {

using namespace abc;

int cmd_run(const std::string& config_file, const std::map<std::string, std::string>& overrides, bool resume) {
    ExperimentConfig cfg = config_file.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_file);
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    RunManifest m = run(cfg, resume);
    RunDirectory dir(cfg.output_dir);
    for (std::size_t n = 0; n < dir.stage_count(); ++n) {
        StageRecord r = dir.stage(n);
        const auto& c = r.stage.cert;
        std::cout << "stage " << n << " alpha_bits " << mpz_sizeinbase(r.stage.alpha.q().get_mpz_t(), 2)
                  << " j " << r.stage.j << " orbit_covering " << fmt17(c.orbit_covering) << " conjugacy "
                  << fmt17(c.conjugacy) << " symplectic " << fmt17(c.symplectic) << " amplitude "
                  << fmt17(r.ladder.amplitude) << "\n";
    }
    std::cout << "status " << m.status << "\nconfig_hash " << m.config_hash << "\n";
    return m.status == "complete" ? 0 : 1;
}

int cmd_diagnose(const std::string& dir, const std::vector<std::string>& checks, const std::optional<long>& stage) {
    RunDirectory run(dir);
    std::vector<std::string> names = checks.empty() ? diagnostic_names() : checks;
    bool all = true;
    for (const auto& check : names) {
        std::vector<long> stages;
        if (stage) {
            stages.push_back(*stage);
        } else {
            long first = (check == "conjugacy" || check == "glue") ? 1 : 0;
            for (long n = first; n < static_cast<long>(run.stage_count()); ++n) stages.push_back(n);
        }
        for (long n : stages) {
            DiagnosticReport r = diagnose(run, check, n);
            std::cout << r.text << "\n";
            all = all && r.pass;
        }
    }
    return all ? 0 : 1;
}

int cmd_glue(double shear, double twist, int freq, std::uint64_t q, double eta, double eps, double R, int grid,
             double tol_det, double tol_mass) {
    if (freq < 1) throw ConfigError("freq must be positive");
    EntireMapSpec h = EntireMapSpec::shear_twist(shear, twist, static_cast<std::uint64_t>(freq), q);
    GlueReport g = glue_and_report(h, BumpProfile(eta, eps), R, grid);
    std::cout << g.to_text();
    bool pass = g.det_residual <= tol_det && g.support_moved == 0 && g.membership_excess <= 1e-12 &&
                g.mass_residual <= tol_mass;
    std::cout << "pass " << (pass ? 1 : 0) << "\n";
    return pass ? 0 : 1;
}

int cmd_liouville(const std::vector<std::string>& angles, const std::string& dir) {
    std::vector<RationalAngle> a;
    if (!dir.empty()) {
        RunDirectory run(dir);
        for (const auto& s : run.stages()) a.push_back(s.alpha);
    }
    for (const auto& s : angles) a.push_back(RationalAngle::parse(s));
    if (a.empty()) throw ConfigError("liouville: no angles given");
    try {
        LiouvilleReport r = liouville_certificate(a);
        std::cout << "pass " << (r.pass ? 1 : 0) << "\n";
        if (!r.pass) std::cout << "violated " << r.violated << "\nreason " << r.reason << "\n";
        return r.pass ? 0 : 1;
    } catch (const CertificateFailure& e) {
        std::cout << "pass 0\nviolated " << e.index << "\nreason " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Approximation-by-conjugation experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(abc::kToolVersion));

    auto* run = app.add_subcommand("run", "run or resume the staged construction");
    std::string config_file;
    bool resume = false;
    std::map<std::string, std::string> overrides;
    std::map<std::string, std::string> flag_values;
    run->add_option("-c,--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);
    run->add_flag("--resume", resume, "continue from the last persisted stage");
    for (const auto& key : abc::ExperimentConfig::keys())
        run->add_option("--" + key, flag_values[key], "override " + key);

    auto* diag = app.add_subcommand("diagnose", "run checks on a persisted run");
    std::string diag_dir;
    std::vector<std::string> checks;
    std::optional<long> diag_stage;
    diag->add_option("run_dir", diag_dir, "run directory")->required();
    diag->add_option("--check", checks, "check name (repeatable); all when omitted");
    diag->add_option("--stage", diag_stage, "stage index; all stages when omitted");

    auto* exp = app.add_subcommand("export-orbit", "write an orbit segment of f_n");
    std::string exp_dir, exp_out;
    long exp_stage = 0;
    abc::OrbitExportOptions eo;
    exp->add_option("run_dir", exp_dir, "run directory")->required();
    exp->add_option("--stage", exp_stage, "stage index")->required();
    exp->add_option("--theta", eo.theta, "start theta");
    exp->add_option("--y", eo.y, "start y");
    exp->add_option("--length", eo.length, "number of iterates")->check(CLI::PositiveNumber);
    exp->add_option("-o,--out", exp_out, "output file")->required();

    auto* glue = app.add_subcommand("glue-report", "glue an entire shear-twist map and report its residuals");
    double shear = 0.05, twist = 0.03, eta = 0.05, eps = 0.2, R = 2.0, tol_det = 1e-6, tol_mass = 1e-8;
    int freq = 1, grid = 64;
    std::uint64_t q = 0;
    glue->add_option("--shear", shear);
    glue->add_option("--twist", twist);
    glue->add_option("--freq", freq);
    glue->add_option("--q", q, "rotation symmetry order to check (0 for none)");
    glue->add_option("--eta", eta);
    glue->add_option("--eps", eps);
    glue->add_option("--R", R, "complex domain parameter");
    glue->add_option("--grid", grid);
    glue->add_option("--tol-det", tol_det);
    glue->add_option("--tol-mass", tol_mass);

    auto* liou = app.add_subcommand("liouville", "check the Liouville budget of a rational sequence");
    std::vector<std::string> angles;
    std::string liou_dir;
    liou->add_option("angles", angles, "p/q values");
    liou->add_option("--run", liou_dir, "take the angles from a run directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*run) {
            for (const auto& [k, v] : flag_values)
                if (run->count("--" + k)) overrides[k] = v;
            return cmd_run(config_file, overrides, resume);
        }
        if (*diag) return cmd_diagnose(diag_dir, checks, diag_stage);
        if (*exp) {
            abc::RunDirectory d(exp_dir);
            abc::export_orbit(d, exp_stage, eo, exp_out);
            return 0;
        }
        if (*glue) return cmd_glue(shear, twist, freq, q, eta, eps, R, grid, tol_det, tol_mass);
        if (*liou) return cmd_liouville(angles, liou_dir);
    } catch (const abc::CertificateFailure& e) {
        std::cerr << "certificate failure at " << e.index << ": " << e.what() << " (residual " << e.residual
                  << ")\n";
        return 1;
    } catch (const abc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
