#pragma once

#include "abc/abc_engine.hpp"
#include "abc/gluing.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace abc {

inline constexpr const char* kToolVersion = "0.2.0";

// Flat key=value experiment configuration. Keys and defaults are listed by
// ExperimentConfig::keys(); unknown or duplicate keys are rejected.
struct ExperimentConfig {
    Surface surface = Surface::Cylinder;
    int stages = 3;
    int grid_n = 64;
    FlowConfig flow;
    double eta = 0.05, eps = 0.2;        // bump profile
    double glue_shear = 0.5;             // base entire map: shear coefficient of y^2
    double glue_twist = 0.2;             // base entire map: twist amplitude
    int glue_freq = 1;                   // base entire map: twist frequency
    std::vector<double> amplitudes;      // deformation schedule; empty means the default
    std::uint64_t seed = 20240601;       // tracking points and sampled diagnostics
    int tracking_points = 20;
    double tracking_rho = 2.0;           // tracking points drawn from A_rho
    double tol_conjugacy = 1e-8;
    double tol_symplectic = 1e-6;
    double tol_growth = 1e-6;
    double tol_seam = 1e-6;
    double tol_det = 1e-6;
    double tol_sigma_map = 1e-10;
    double tol_sigma_structure = 1e-6;
    double tol_mass = 1e-8;
    double tol_holoform = 1e-5;
    double tol_nijenhuis_slope = 1.5;
    std::string output_dir = "run";

    static const std::vector<std::string>& keys();
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    void validate() const;

    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig load(const std::filesystem::path& file);
    // Sorted key=value lines.
    std::string canonical() const;
    // SHA-256 of the canonical text without output_dir and stages, so a run can be extended.
    std::string hash() const;

    EngineConfig engine() const;
    BumpProfile bump() const;
    EntireMapSpec base_map() const;
    std::vector<double> schedule() const;
    std::vector<Frame4Point> tracking() const;
};

struct StageRecord {
    SchemeStage stage;
    LadderStage ladder;  // deformation step d_n (unused for n = 0)
};

struct RunManifest {
    std::string config_hash;
    std::string tool_version = kToolVersion;
    std::uint64_t seed = 0;
    std::vector<std::string> stage_files;  // stage_<n>.json for n >= 1, relative to the run directory
    std::vector<std::string> stage_sha256;
    std::string status = "partial";  // partial | complete | failed
    long failed_stage = -1;
    double failed_residual = 0;
    std::string failure;

    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
};

std::string sha256_hex(const std::string& data);
std::string fmt17(double x);

std::string stage_to_json(const StageRecord& r);
StageRecord stage_from_json(const std::string& text, const FlowConfig& flow = {});

// Executes (or resumes) a run in cfg.output_dir, persisting each stage before the next.
// Throws CertificateFailure after recording it in the manifest.
RunManifest run(const ExperimentConfig& cfg, bool resume = false);

class RunDirectory {
public:
    explicit RunDirectory(std::filesystem::path dir);
    const ExperimentConfig& config() const { return cfg_; }
    const RunManifest& manifest() const { return manifest_; }
    // Stages 0..stage_count() - 1; stage 0 is rebuilt from the configuration.
    std::size_t stage_count() const { return manifest_.stage_files.size() + 1; }
    StageRecord stage(std::size_t n) const;  // MissingStage when absent
    std::vector<SchemeStage> stages() const;
    // Deformation builder replayed through stage n.
    DeformationBuilder ladder(std::size_t n) const;
    const std::filesystem::path& path() const { return dir_; }

private:
    std::filesystem::path dir_;
    ExperimentConfig cfg_;
    RunManifest manifest_;
};

struct DiagnosticReport {
    std::string check;
    long stage = 0;
    bool pass = false;
    std::string text;  // key value lines
    std::filesystem::path file;
};

const std::vector<std::string>& diagnostic_names();
// Runs the named check and writes diag_<check>_<stage>.txt into the run directory.
DiagnosticReport diagnose(const RunDirectory& run, const std::string& check, long stage);

struct OrbitExportOptions {
    double theta = 0, y = 0;
    long length = 1;
};
// One record per iterate: index theta y [surface coordinates], '#' header lines.
void export_orbit(const RunDirectory& run, long stage, const OrbitExportOptions& opt, const std::filesystem::path& out);

}  // namespace abc
