#include "abc/cli_persistence.hpp"

#include "abc/errors.hpp"

#include "json.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace abc {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256: digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw MissingStage("cannot read " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Writes through a temporary so a killed run never leaves a torn file.
void write_file(const fs::path& p, const std::string& text) {
    fs::path tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + tmp.string());
        out << text;
        if (!out) throw ConfigError("write failed for " + tmp.string());
    }
    fs::rename(tmp, p);
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    double x = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
    return x;
}

long parse_long(const std::string& key, const std::string& v) {
    long x = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
    return x;
}

int parse_int(const std::string& key, const std::string& v) {
    long x = parse_long(key, v);
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
        throw ConfigError("config: " + key + " out of range");
    return static_cast<int>(x);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t x = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError("config: " + key + " expects an unsigned integer, got '" + v + "'");
    return x;
}

struct Field {
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define ABC_DOUBLE(name)                                                                                   \
    {#name, {[](ExperimentConfig& c, const std::string& v) { c.name = parse_double(#name, v); },          \
             [](const ExperimentConfig& c) { return fmt17(c.name); }}}
#define ABC_INT(name)                                                                                      \
    {#name, {[](ExperimentConfig& c, const std::string& v) { c.name = parse_int(#name, v); },             \
             [](const ExperimentConfig& c) { return std::to_string(c.name); }}}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> f = {
        {"surface", {[](ExperimentConfig& c, const std::string& v) {
                         try {
                             c.surface = parse_surface(v);
                         } catch (const Error& e) {
                             throw ConfigError(std::string("config: ") + e.what());
                         }
                     },
                     [](const ExperimentConfig& c) { return std::string(surface_name(c.surface)); }}},
        ABC_INT(stages),
        ABC_INT(grid_n),
        {"flow_steps", {[](ExperimentConfig& c, const std::string& v) { c.flow.steps = parse_int("flow_steps", v); },
                        [](const ExperimentConfig& c) { return std::to_string(c.flow.steps); }}},
        {"flow_tol", {[](ExperimentConfig& c, const std::string& v) { c.flow.tol = parse_double("flow_tol", v); },
                      [](const ExperimentConfig& c) { return fmt17(c.flow.tol); }}},
        {"flow_max_newton",
         {[](ExperimentConfig& c, const std::string& v) { c.flow.max_newton = parse_int("flow_max_newton", v); },
          [](const ExperimentConfig& c) { return std::to_string(c.flow.max_newton); }}},
        ABC_DOUBLE(eta),
        ABC_DOUBLE(eps),
        ABC_DOUBLE(glue_shear),
        ABC_DOUBLE(glue_twist),
        ABC_INT(glue_freq),
        {"amplitudes", {[](ExperimentConfig& c, const std::string& v) {
                            c.amplitudes.clear();
                            std::stringstream ss(v);
                            std::string item;
                            while (std::getline(ss, item, ','))
                                if (!trim(item).empty()) c.amplitudes.push_back(parse_double("amplitudes", trim(item)));
                        },
                        [](const ExperimentConfig& c) {
                            std::string s;
                            for (std::size_t i = 0; i < c.amplitudes.size(); ++i)
                                s += (i ? "," : "") + fmt17(c.amplitudes[i]);
                            return s;
                        }}},
        {"seed", {[](ExperimentConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
                  [](const ExperimentConfig& c) { return std::to_string(c.seed); }}},
        ABC_INT(tracking_points),
        ABC_DOUBLE(tracking_rho),
        ABC_DOUBLE(tol_conjugacy),
        ABC_DOUBLE(tol_symplectic),
        ABC_DOUBLE(tol_growth),
        ABC_DOUBLE(tol_seam),
        ABC_DOUBLE(tol_det),
        ABC_DOUBLE(tol_sigma_map),
        ABC_DOUBLE(tol_sigma_structure),
        ABC_DOUBLE(tol_mass),
        ABC_DOUBLE(tol_holoform),
        ABC_DOUBLE(tol_nijenhuis_slope),
        {"output_dir", {[](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
                        [](const ExperimentConfig& c) { return c.output_dir; }}},
    };
    return f;
}

#undef ABC_DOUBLE
#undef ABC_INT

}  // namespace

const std::vector<std::string>& ExperimentConfig::keys() {
    static const std::vector<std::string> k = [] {
        std::vector<std::string> v;
        for (const auto& [name, f] : fields()) v.push_back(name);
        return v;
    }();
    return k;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second.set(*this, trim(value));
}

std::string ExperimentConfig::get(const std::string& key) const {
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("config: unknown key '" + key + "'");
    return it->second.get(*this);
}

void ExperimentConfig::validate() const {
    if (stages < 1) throw ConfigError("config: stages must be at least 1");
    if (grid_n < 16) throw ConfigError("config: grid_n must be at least 16");
    try {
        flow.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    (void)bump();
    if (glue_freq < 1) throw ConfigError("config: glue_freq must be positive");
    if (tracking_points < 1) throw ConfigError("config: tracking_points must be positive");
    if (!(tracking_rho > 1)) throw ConfigError("config: tracking_rho must exceed 1");
    for (double t : {tol_conjugacy, tol_symplectic, tol_growth, tol_seam, tol_det, tol_sigma_map,
                     tol_sigma_structure, tol_mass, tol_holoform, tol_nijenhuis_slope})
        if (!(t > 0)) throw ConfigError("config: tolerances must be positive");
    if (!amplitudes.empty()) {
        if (static_cast<int>(amplitudes.size()) < stages)
            throw ConfigError("config: amplitudes must list one value per stage");
        for (double a : amplitudes)
            if (!(a > 0)) throw ConfigError("config: amplitudes must be positive");
    }
    if (output_dir.empty()) throw ConfigError("config: output_dir must be set");
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string line;
    std::map<std::string, int> seen;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (seen[key]++) throw ConfigError("config: duplicate key '" + key + "'");
        c.set(key, line.substr(eq + 1));
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("config: cannot read " + file.string());
    std::ostringstream os;
    os << in.rdbuf();
    return parse(os.str());
}

std::string ExperimentConfig::canonical() const {
    std::string out;
    for (const auto& k : keys()) out += k + "=" + get(k) + "\n";
    return out;
}

std::string ExperimentConfig::hash() const {
    std::string out;
    for (const auto& k : keys())
        if (k != "output_dir" && k != "stages") out += k + "=" + get(k) + "\n";
    return sha256_hex(out);
}

EngineConfig ExperimentConfig::engine() const {
    EngineConfig e;
    e.grid_n = grid_n;
    e.flow = flow;
    e.conj_tol = tol_conjugacy;
    return e;
}

BumpProfile ExperimentConfig::bump() const { return BumpProfile(eta, eps); }

EntireMapSpec ExperimentConfig::base_map() const {
    return EntireMapSpec::shear_twist(glue_shear, glue_twist, static_cast<std::uint64_t>(glue_freq));
}

std::vector<double> ExperimentConfig::schedule() const {
    return amplitudes.empty() ? default_amplitude_schedule(stages) : amplitudes;
}

std::vector<Frame4Point> ExperimentConfig::tracking() const {
    return random_domain_points(tracking_rho, tracking_points, seed);
}

// ---------------------------------------------------------------- records

namespace {

json log2_or_null(const Rational& r) { return r == 0 ? json(nullptr) : json(log2_abs(r)); }

// Exact term text; the term that attains nu is stored by reference to keep records small.
std::string term_str(const Rational& r, const Rational& nu) { return r == nu ? "nu" : rational_str(r); }

Rational term_from(const json& t, const char* key, const Rational& nu) {
    std::string v = t.at(key).get<std::string>();
    return v == "nu" ? nu : parse_rational(v);
}

}  // namespace

std::string stage_to_json(const StageRecord& r) {
    const SchemeStage& s = r.stage;
    json j;
    j["n"] = s.n;
    j["alpha"] = s.alpha.str();
    j["j"] = s.j;
    j["N"] = s.N.get_str();
    j["nu"] = rational_str(s.nu);
    j["epsilon"] = s.epsilon;
    j["epsilon_lipschitz"] = s.epsilon_lipschitz;
    j["base_theta"] = s.base_theta;
    j["base"] = {s.base.theta, s.base.y};
    j["conjugator"] = s.conjugator.serialize();
    j["factors"] = json::array();
    for (const auto& f : s.factors)
        j["factors"].push_back({{"q", f.q}, {"M", f.M}, {"eps", f.eps}, {"K", f.K}, {"doublings", f.doublings},
                                {"reach", f.reach}, {"covering", f.covering}, {"commutation", f.commutation},
                                {"map", f.map.serialize()}});
    const NuTerms& t = s.nu_terms;
    j["nu_terms"] = {{"farey_log2", log2_or_null(t.farey)},
                     {"liouville_log2", log2_or_null(t.liouville)},
                     {"separation_log2", log2_or_null(t.separation)},
                     {"closeness_log2", log2_or_null(t.closeness)},
                     {"density_log2", log2_or_null(t.density)},
                     {"nu_log2", log2_or_null(t.nu)},
                     {"farey", term_str(t.farey, s.nu)},
                     {"liouville", term_str(t.liouville, s.nu)},
                     {"separation", term_str(t.separation, s.nu)},
                     {"closeness", term_str(t.closeness, s.nu)},
                     {"density", term_str(t.density, s.nu)},
                     {"closeness_active", t.closeness_active},
                     {"density_active", t.density_active},
                     {"closeness_bound", t.closeness_bound},
                     {"separation_value", t.separation_value},
                     {"separation_exact", t.separation_exact}};
    const StageCertificates& c = s.cert;
    j["cert"] = {{"curve_covering", c.curve_covering}, {"orbit_covering", c.orbit_covering},
                 {"conjugacy", c.conjugacy},           {"commutation", c.commutation},
                 {"symplectic", c.symplectic},         {"lipschitz", c.lipschitz}};
    j["ladder"] = {{"amplitude", r.ladder.amplitude},
                   {"halvings", r.ladder.halvings},
                   {"dJ", r.ladder.dJ},
                   {"dOmega", r.ladder.dOmega}};
    return j.dump(1) + "\n";
}

StageRecord stage_from_json(const std::string& text, const FlowConfig& flow) {
    (void)flow;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("stage record: ") + e.what());
    }
    StageRecord r;
    SchemeStage& s = r.stage;
    try {
        s.n = j.at("n").get<long>();
        s.alpha = RationalAngle::parse(j.at("alpha").get<std::string>());
        s.j = j.at("j").get<int>();
        s.N = BigInt(j.at("N").get<std::string>());
        s.nu = parse_rational(j.at("nu").get<std::string>());
        s.epsilon = j.at("epsilon").get<double>();
        s.epsilon_lipschitz = j.at("epsilon_lipschitz").get<double>();
        s.base_theta = j.at("base_theta").get<double>();
        s.base = CylinderPoint(j.at("base")[0].get<double>(), j.at("base")[1].get<double>());
        s.conjugator = MapExpr::parse(j.at("conjugator").get<std::string>());
        for (const auto& f : j.at("factors")) {
            Conjugator g;
            g.q = f.at("q").get<std::uint64_t>();
            g.M = f.at("M").get<std::uint64_t>();
            g.eps = f.at("eps").get<double>();
            g.K = f.at("K").get<double>();
            g.doublings = f.at("doublings").get<int>();
            g.reach = f.at("reach").get<double>();
            g.covering = f.at("covering").get<double>();
            g.commutation = f.at("commutation").get<double>();
            g.map = MapExpr::parse(f.at("map").get<std::string>());
            s.factors.push_back(g);
        }
        const json& t = j.at("nu_terms");
        s.nu_terms.closeness_active = t.at("closeness_active").get<bool>();
        s.nu_terms.density_active = t.at("density_active").get<bool>();
        s.nu_terms.closeness_bound = t.at("closeness_bound").get<bool>();
        s.nu_terms.separation_value = t.at("separation_value").get<double>();
        s.nu_terms.separation_exact = t.at("separation_exact").get<bool>();
        s.nu_terms.nu = s.nu;
        s.nu_terms.farey = term_from(t, "farey", s.nu);
        s.nu_terms.liouville = term_from(t, "liouville", s.nu);
        s.nu_terms.separation = term_from(t, "separation", s.nu);
        s.nu_terms.closeness = term_from(t, "closeness", s.nu);
        s.nu_terms.density = term_from(t, "density", s.nu);
        const json& c = j.at("cert");
        s.cert.curve_covering = c.at("curve_covering").get<double>();
        s.cert.orbit_covering = c.at("orbit_covering").get<double>();
        s.cert.conjugacy = c.at("conjugacy").get<double>();
        s.cert.commutation = c.at("commutation").get<double>();
        s.cert.symplectic = c.at("symplectic").get<double>();
        s.cert.lipschitz = c.at("lipschitz").get<double>();
        const json& l = j.at("ladder");
        r.ladder.amplitude = l.at("amplitude").get<double>();
        r.ladder.halvings = l.at("halvings").get<int>();
        r.ladder.dJ = l.at("dJ").get<double>();
        r.ladder.dOmega = l.at("dOmega").get<double>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("stage record: ") + e.what());
    }
    return r;
}

std::string RunManifest::to_json() const {
    json j;
    j["config_hash"] = config_hash;
    j["tool_version"] = tool_version;
    j["seed"] = seed;
    j["stages"] = json::array();
    for (std::size_t i = 0; i < stage_files.size(); ++i)
        j["stages"].push_back({{"file", stage_files[i]}, {"sha256", stage_sha256[i]}});
    j["status"] = status;
    if (failed_stage >= 0) j["failure"] = {{"stage", failed_stage}, {"residual", failed_residual}, {"what", failure}};
    return j.dump(1) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
    RunManifest m;
    try {
        json j = json::parse(text);
        m.config_hash = j.at("config_hash").get<std::string>();
        m.tool_version = j.at("tool_version").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& s : j.at("stages")) {
            m.stage_files.push_back(s.at("file").get<std::string>());
            m.stage_sha256.push_back(s.at("sha256").get<std::string>());
        }
        m.status = j.at("status").get<std::string>();
        if (j.contains("failure")) {
            m.failed_stage = j["failure"].at("stage").get<long>();
            m.failed_residual = j["failure"].at("residual").get<double>();
            m.failure = j["failure"].at("what").get<std::string>();
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
    return m;
}

// ---------------------------------------------------------------- run

RunManifest run(const ExperimentConfig& cfg, bool resume) {
    cfg.validate();
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);
    const fs::path mpath = dir / "manifest.json";

    RunManifest m;
    const EngineConfig ecfg = cfg.engine();
    std::vector<SchemeStage> stages{initial_stage(ecfg)};  // stage 0 is rebuilt, not stored
    DeformationBuilder ladder(cfg.base_map(), cfg.bump(), cfg.tracking());
    const FlowConfig& flow = cfg.flow;

    if (resume && fs::exists(mpath)) {
        m = RunManifest::from_json(read_file(mpath));
        if (m.config_hash != cfg.hash()) throw ConfigError("resume: configuration differs from the recorded run");
        if (m.tool_version != kToolVersion)
            throw ConfigError("resume: run was written by tool version " + m.tool_version);
        for (std::size_t i = 0; i < m.stage_files.size(); ++i) {
            std::string text = read_file(dir / m.stage_files[i]);
            if (sha256_hex(text) != m.stage_sha256[i])
                throw ParseError("resume: stage record " + m.stage_files[i] + " does not match its checksum");
            StageRecord r = stage_from_json(text, flow);
            ladder.add_fixed(r.ladder.amplitude);
            stages.push_back(std::move(r.stage));
        }
    } else {
        m.config_hash = cfg.hash();
        m.seed = cfg.seed;
    }
    m.status = "partial";
    m.failed_stage = -1;
    m.failure.clear();
    write_file(dir / "config.txt", cfg.canonical());
    write_file(mpath, m.to_json());

    const std::vector<double> schedule = cfg.schedule();
    for (long n = static_cast<long>(stages.size()); n <= cfg.stages; ++n) {
        StageRecord rec;
        try {
            rec.stage = step(stages.back(), ecfg);
            if (rec.stage.cert.symplectic > cfg.tol_symplectic)
                throw CertificateFailure("symplectic residual above tolerance", n, rec.stage.cert.symplectic);
            rec.ladder = ladder.add(schedule[n - 1]);
        } catch (const CertificateFailure& e) {
            m.status = "failed";
            m.failed_stage = e.index;
            m.failed_residual = e.residual;
            m.failure = e.what();
            write_file(mpath, m.to_json());
            throw;
        }
        std::string text = stage_to_json(rec);
        std::string name = "stage_" + std::to_string(n) + ".json";
        write_file(dir / name, text);
        m.stage_files.push_back(name);
        m.stage_sha256.push_back(sha256_hex(text));
        write_file(mpath, m.to_json());
        stages.push_back(std::move(rec.stage));
    }
    m.status = "complete";
    write_file(mpath, m.to_json());
    return m;
}

RunDirectory::RunDirectory(fs::path dir) : dir_(std::move(dir)) {
    if (!fs::exists(dir_ / "manifest.json")) throw MissingStage("no run manifest in " + dir_.string());
    cfg_ = ExperimentConfig::load(dir_ / "config.txt");
    cfg_.output_dir = dir_.string();
    manifest_ = RunManifest::from_json(read_file(dir_ / "manifest.json"));
}

StageRecord RunDirectory::stage(std::size_t n) const {
    if (n >= stage_count()) throw MissingStage("run has no stage " + std::to_string(n));
    if (n == 0) return StageRecord{initial_stage(cfg_.engine()), {}};
    return stage_from_json(read_file(dir_ / manifest_.stage_files[n - 1]), cfg_.flow);
}

std::vector<SchemeStage> RunDirectory::stages() const {
    std::vector<SchemeStage> out;
    for (std::size_t n = 0; n < stage_count(); ++n) out.push_back(stage(n).stage);
    return out;
}

DeformationBuilder RunDirectory::ladder(std::size_t n) const {
    if (n >= stage_count()) throw MissingStage("run has no stage " + std::to_string(n));
    DeformationBuilder b(cfg_.base_map(), cfg_.bump(), cfg_.tracking());
    for (std::size_t k = 1; k <= n; ++k) b.add_fixed(stage(k).ladder.amplitude);
    return b;
}

// ---------------------------------------------------------------- diagnostics

const std::vector<std::string>& diagnostic_names() {
    static const std::vector<std::string> names = {"symplectic", "conjugacy", "density",  "separation", "nijenhuis",
                                                   "holoform",   "sigma",     "glue",     "liouville"};
    return names;
}

namespace {

struct Lines {
    std::ostringstream os;
    void add(const std::string& k, double v) { os << k << " " << fmt17(v) << "\n"; }
    void add(const std::string& k, const std::string& v) { os << k << " " << v << "\n"; }
};

}  // namespace

DiagnosticReport diagnose(const RunDirectory& run, const std::string& check, long stage) {
    const auto& names = diagnostic_names();
    if (std::find(names.begin(), names.end(), check) == names.end())
        throw UnknownCheck("unknown check '" + check + "'");
    if (stage < 0 || static_cast<std::size_t>(stage) >= run.stage_count())
        throw MissingStage("run has no stage " + std::to_string(stage));

    const ExperimentConfig& cfg = run.config();
    const EngineConfig ecfg = cfg.engine();
    const auto n = static_cast<std::size_t>(stage);
    DiagnosticReport rep;
    rep.check = check;
    rep.stage = stage;
    Lines out;

    if (check == "symplectic") {
        double r = symplectic_residual(stage_map(run.stage(n).stage), cfg.grid_n, cfg.flow);
        out.add("residual", r);
        out.add("tolerance", cfg.tol_symplectic);
        rep.pass = r <= cfg.tol_symplectic;
    } else if (check == "conjugacy") {
        if (n == 0) throw MissingStage("conjugacy compares stage n with stage n - 1; stage 0 has no predecessor");
        SchemeStage a = run.stage(n - 1).stage, b = run.stage(n).stage;
        MapExpr rot = MapExpr::rotation(a.alpha);
        double r = map_distance(MapExpr::compose({b.conjugator.inverse(), rot, b.conjugator}),
                                MapExpr::compose({a.conjugator.inverse(), rot, a.conjugator}), cfg.grid_n, cfg.flow);
        out.add("residual", r);
        out.add("tolerance", cfg.tol_conjugacy);
        rep.pass = r <= cfg.tol_conjugacy;
    } else if (check == "density") {
        SchemeStage s = run.stage(n).stage;
        double level = std::pow(3.0, -static_cast<double>(stage)) + 2.0 / cfg.grid_n;
        OrbitDensity od = orbit_density(s, level, ecfg);
        out.add("covering", od.covering);
        out.add("threshold", level);
        out.add("length", od.N.get_str());
        out.add("enumerated", od.enumerated ? "1" : "0");
        rep.pass = od.covering <= level;
    } else if (check == "separation") {
        SeparationReport sr = separation_report(run.stages(), n, ecfg);
        out.add("scanned", sr.scanned ? "1" : "0");
        out.add("measured", sr.measured);
        out.add("lower_bound_log10", sr.lower_bound_log10);
        out.add("product", sr.product);
        out.add("limit_bound_log10", sr.limit_bound_log10);
        rep.pass = sr.pass;
    } else if (check == "nijenhuis" || check == "holoform" || check == "sigma") {
        DeformationBuilder b = run.ladder(n);
        JField J = b.structure(n);
        Map4 H = b.map(n);
        const double step = b.options().step;
        rep.pass = true;
        if (check == "nijenhuis") {
            const std::vector<double> steps{1e-2, 1e-3, 1e-4};
            double min_slope = std::numeric_limits<double>::infinity(), max_res = 0;
            long at_roundoff = 0;
            for (const auto& p : b.points()) {
                std::vector<double> r;
                for (double h : steps)
                    r.push_back(nijenhuis_residual(n == 0 ? J : pullback_structure_field(H, h), p, h));
                max_res = std::max(max_res, *std::max_element(r.begin(), r.end()));
                DecaySlope d = decay_slope(steps, r);
                if (d.below_roundoff())
                    ++at_roundoff;
                else
                    min_slope = std::min(min_slope, d.slope);
            }
            out.add("max_residual", max_res);
            out.add("min_slope", min_slope);
            out.add("points_at_roundoff", std::to_string(at_roundoff));
            out.add("slope_threshold", cfg.tol_nijenhuis_slope);
            rep.pass = min_slope >= cfg.tol_nijenhuis_slope;
        } else if (check == "holoform") {
            FormField W = b.form(n);
            double worst = 0;
            for (const auto& p : b.points()) worst = std::max(worst, holomorphic_form_residual(W, J, p, step).value());
            out.add("residual", worst);
            out.add("tolerance", cfg.tol_holoform);
            rep.pass = worst <= cfg.tol_holoform;
        } else {
            double rs = 0, rm = 0;
            for (const auto& p : b.points()) {
                rs = std::max(rs, sigma_structure_residual(J, p));
                rm = std::max(rm, sigma_map_residual(H, p));
            }
            out.add("structure_residual", rs);
            out.add("map_residual", rm);
            out.add("structure_tolerance", cfg.tol_sigma_structure);
            out.add("map_tolerance", cfg.tol_sigma_map);
            rep.pass = rs <= cfg.tol_sigma_structure && rm <= cfg.tol_sigma_map;
        }
    } else if (check == "glue") {
        if (n == 0) throw MissingStage("stage 0 carries no deformation");
        StageRecord r = run.stage(n);
        GlueReport g = glue_and_report(cfg.base_map().scaled(r.ladder.amplitude), cfg.bump(), 2.0, cfg.grid_n);
        out.os << g.to_text();
        rep.pass = g.det_residual <= cfg.tol_det && g.support_moved == 0 && g.membership_excess <= 1e-12 &&
                   g.sigma_residual <= cfg.tol_sigma_map && g.mass_residual <= cfg.tol_mass;
    } else {  // liouville
        std::vector<RationalAngle> angles;
        for (std::size_t k = 0; k <= n; ++k) angles.push_back(run.stage(k).stage.alpha);
        try {
            LiouvilleReport lr = liouville_certificate(angles);
            out.add("stages", std::to_string(angles.size()));
            for (std::size_t k = 0; k < lr.tail_bounds.size(); ++k)
                out.add("tail_bound_log2_" + std::to_string(k), log2_abs(lr.tail_bounds[k]));
            rep.pass = lr.pass;
        } catch (const CertificateFailure& e) {
            out.add("violated", std::to_string(e.index));
            out.add("reason", e.what());
            rep.pass = false;
        }
    }

    std::ostringstream head;
    head << "check " << check << "\nstage " << stage << "\npass " << (rep.pass ? 1 : 0) << "\n";
    rep.text = head.str() + out.os.str();
    rep.file = run.path() / ("diag_" + check + "_" + std::to_string(stage) + ".txt");
    write_file(rep.file, rep.text);
    return rep;
}

// ---------------------------------------------------------------- export

void export_orbit(const RunDirectory& run, long stage, const OrbitExportOptions& opt, const fs::path& out) {
    if (opt.length < 1) throw PreconditionError("export_orbit: length must be at least 1");
    if (stage < 0 || static_cast<std::size_t>(stage) >= run.stage_count())
        throw MissingStage("run has no stage " + std::to_string(stage));
    const SchemeStage s = run.stage(static_cast<std::size_t>(stage)).stage;
    const Surface surf = run.config().surface;
    std::ostringstream os;
    os << "# stage " << stage << "\n";
    os << "# alpha " << s.alpha.str() << "\n";
    os << "# surface " << surface_name(surf) << "\n";
    os << "# start " << fmt17(opt.theta) << " " << fmt17(opt.y) << "\n";
    os << "# columns index theta y";
    if (surf == Surface::Sphere) os << " x1 x2 x3";
    if (surf == Surface::Disk) os << " x1 x2";
    os << "\n";
    const XPoint start(CylinderPoint(opt.theta, opt.y));
    for (long k = 0; k < opt.length; ++k) {
        CylinderPoint c = stage_iterate(s, start, BigInt(k), run.config().flow).to_cylinder();
        os << k << " " << fmt17(c.theta) << " " << fmt17(c.y);
        if (surf == Surface::Sphere) {
            SpherePoint p = axial_unproject(c);
            os << " " << fmt17(p.x1) << " " << fmt17(p.x2) << " " << fmt17(p.x3);
        } else if (surf == Surface::Disk) {
            DiskPoint d = polar_unproject(c);
            os << " " << fmt17(d.x1) << " " << fmt17(d.x2);
        }
        os << "\n";
    }
    write_file(out, os.str());
}

}  // namespace abc
