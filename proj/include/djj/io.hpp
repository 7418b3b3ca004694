#pragma once
// Config parsing (strict key = value format), normalized config dump and
// hash, and CSV / JSON-Lines record output.  Doubles are serialized with 17
// significant digits so emit -> parse -> emit is byte-identical.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "record.hpp"
#include "twomode.hpp"
#include "types.hpp"

namespace djj {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class SolverChoice { Meanfield, TwoMode, Lindblad };
enum class OutputFormat { Csv, JsonLines };
enum class LindbladMethod { Master, Trajectories, Ness };

struct RunConfig {
    SolverChoice solver = SolverChoice::TwoMode;
    LatticeParams lattice;
    CouplingModel coupling;
    double kappa_coefficient = 2e-3;
    double tolerance = 1e-8;
    double epsilon = 0.05;
    double t_max = 0;      // 0 = solver default
    double t_final = 0;    // 0 = subcommand default
    int n_samples = 0;     // 0 = auto
    InitialCondition initial = InitialCondition::Full;
    double seed_fraction = 1e-3;
    bool clamp_edges = false;
    int n_max = 3;
    int n_total_cap = -1;  // -1 = no cap beyond per-site
    int n_traj = 0;
    LindbladMethod method = LindbladMethod::Master;
    std::vector<double> j_grid;       // empty = module default
    std::vector<double> gamma_grid;   // factors of J if gamma_relative
    bool gamma_relative = true;
    SweepDirection direction = SweepDirection::Up;
    std::uint64_t rng_seed = 1;
    int threads = 0;       // 0 = leave runtime default
    std::string output;    // empty = stdout
    OutputFormat format = OutputFormat::Csv;

    ChemicalPotentialModel mu_model() const {
        return {MuVariant::Linear, lattice.u_interaction};
    }
    RateModelParams rate_params() const {
        return {lattice, coupling, kappa_coefficient, mu_model()};
    }

    bool operator==(const RunConfig& o) const {
        return solver == o.solver && lattice.n_sites == o.lattice.n_sites
               && lattice.j_coupling == o.lattice.j_coupling
               && lattice.u_interaction == o.lattice.u_interaction
               && lattice.gamma == o.lattice.gamma
               && lattice.lossy_site == o.lattice.lossy_site
               && lattice.n0 == o.lattice.n0
               && coupling.variant == o.coupling.variant
               && coupling.fc_width == o.coupling.fc_width
               && kappa_coefficient == o.kappa_coefficient
               && tolerance == o.tolerance && epsilon == o.epsilon
               && t_max == o.t_max && t_final == o.t_final
               && n_samples == o.n_samples && initial == o.initial
               && seed_fraction == o.seed_fraction
               && clamp_edges == o.clamp_edges && n_max == o.n_max
               && n_total_cap == o.n_total_cap && n_traj == o.n_traj
               && method == o.method && j_grid == o.j_grid
               && gamma_grid == o.gamma_grid
               && gamma_relative == o.gamma_relative
               && direction == o.direction && rng_seed == o.rng_seed
               && threads == o.threads && output == o.output
               && format == o.format;
    }
};

// 17 significant digits: enough for exact double round trips through strtod.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] inline void cfg_fail(int line, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

inline double parse_double(const std::string& v, const std::string& key, int line) {
    const char* s = v.c_str();
    char* end = nullptr;
    double d = std::strtod(s, &end);
    if (end == s || *end != '\0')
        cfg_fail(line, "key '" + key + "' expects a number, got '" + v + "'");
    return d;
}

inline long parse_int(const std::string& v, const std::string& key, int line) {
    const char* s = v.c_str();
    char* end = nullptr;
    long d = std::strtol(s, &end, 10);
    if (end == s || *end != '\0')
        cfg_fail(line, "key '" + key + "' expects an integer, got '" + v + "'");
    return d;
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& key, int line) {
    if (!v.empty() && v[0] == '-')
        cfg_fail(line, "key '" + key + "' expects a non-negative integer, got '" + v + "'");
    const char* s = v.c_str();
    char* end = nullptr;
    std::uint64_t d = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0')
        cfg_fail(line, "key '" + key + "' expects an integer, got '" + v + "'");
    return d;
}

inline bool parse_bool(const std::string& v, const std::string& key, int line) {
    if (v == "true") return true;
    if (v == "false") return false;
    cfg_fail(line, "key '" + key + "' expects true or false, got '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& v, const std::string& key,
                                      int line) {
    std::vector<double> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ','))
        out.push_back(parse_double(trim(tok), key, line));
    return out;
}

inline std::string join_list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += format_double(v[i]);
    }
    return s;
}

} // namespace detail

inline RunConfig parse_config(const std::string& text) {
    using detail::cfg_fail;
    RunConfig c;
    bool have_solver = false;
    std::map<std::string, int> seen;        // key -> line, duplicate detection
    std::map<std::string, int> field_line;  // for cross-field diagnostics

    std::stringstream ss(text);
    std::string raw;
    int line = 0;
    while (std::getline(ss, raw)) {
        ++line;
        std::string s = raw;
        std::size_t hash = s.find('#');
        if (hash != std::string::npos) s = s.substr(0, hash);
        s = detail::trim(s);
        if (s.empty()) continue;
        std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            cfg_fail(line, "expected 'key = value', got '" + detail::trim(raw) + "'");
        std::string key = detail::trim(s.substr(0, eq));
        std::string val = detail::trim(s.substr(eq + 1));
        if (key.empty()) cfg_fail(line, "empty key");
        if (seen.count(key)) cfg_fail(line, "duplicate key '" + key + "' (first at line "
                                                + std::to_string(seen[key]) + ")");
        seen[key] = line;
        field_line[key] = line;

        auto need_pos = [&](double v) {
            if (!(v > 0) || !finite(v))
                cfg_fail(line, "key '" + key + "' must be > 0");
            return v;
        };
        auto need_nonneg = [&](double v) {
            if (!(v >= 0) || !finite(v))
                cfg_fail(line, "key '" + key + "' must be >= 0");
            return v;
        };

        if (key == "solver") {
            if (val == "meanfield") c.solver = SolverChoice::Meanfield;
            else if (val == "two_mode") c.solver = SolverChoice::TwoMode;
            else if (val == "lindblad") c.solver = SolverChoice::Lindblad;
            else cfg_fail(line, "key 'solver' expects meanfield, two_mode or lindblad");
            have_solver = true;
        } else if (key == "n_sites") {
            long v = detail::parse_int(val, key, line);
            if (v < 2) cfg_fail(line, "key 'n_sites' must be >= 2");
            c.lattice.n_sites = int(v);
        } else if (key == "lossy_site") {
            long v = detail::parse_int(val, key, line);
            if (v < 0) cfg_fail(line, "key 'lossy_site' must be >= 0");
            c.lattice.lossy_site = int(v);
        } else if (key == "j_coupling") {
            c.lattice.j_coupling = need_pos(detail::parse_double(val, key, line));
        } else if (key == "u_interaction") {
            c.lattice.u_interaction = need_nonneg(detail::parse_double(val, key, line));
        } else if (key == "gamma") {
            c.lattice.gamma = need_nonneg(detail::parse_double(val, key, line));
        } else if (key == "n0") {
            c.lattice.n0 = need_pos(detail::parse_double(val, key, line));
        } else if (key == "coupling") {
            if (val == "constant") c.coupling.variant = CouplingVariant::Constant;
            else if (val == "franck_condon")
                c.coupling.variant = CouplingVariant::FranckCondon;
            else cfg_fail(line, "key 'coupling' expects constant or franck_condon");
        } else if (key == "fc_width") {
            c.coupling.fc_width = need_pos(detail::parse_double(val, key, line));
        } else if (key == "kappa_coefficient") {
            c.kappa_coefficient = need_nonneg(detail::parse_double(val, key, line));
        } else if (key == "tolerance") {
            c.tolerance = need_pos(detail::parse_double(val, key, line));
        } else if (key == "epsilon") {
            double v = detail::parse_double(val, key, line);
            if (!(v > 0) || !(v < 1)) cfg_fail(line, "key 'epsilon' must be in (0, 1)");
            c.epsilon = v;
        } else if (key == "t_max") {
            c.t_max = need_nonneg(detail::parse_double(val, key, line));
        } else if (key == "t_final") {
            c.t_final = need_nonneg(detail::parse_double(val, key, line));
        } else if (key == "n_samples") {
            long v = detail::parse_int(val, key, line);
            if (v < 0) cfg_fail(line, "key 'n_samples' must be >= 0");
            c.n_samples = int(v);
        } else if (key == "initial") {
            if (val == "full") c.initial = InitialCondition::Full;
            else if (val == "empty") c.initial = InitialCondition::Empty;
            else cfg_fail(line, "key 'initial' expects full or empty");
        } else if (key == "seed_fraction") {
            double v = detail::parse_double(val, key, line);
            if (!(v > 0) || !(v < 1))
                cfg_fail(line, "key 'seed_fraction' must be in (0, 1)");
            c.seed_fraction = v;
        } else if (key == "clamp_edges") {
            c.clamp_edges = detail::parse_bool(val, key, line);
        } else if (key == "n_max") {
            long v = detail::parse_int(val, key, line);
            if (v < 1) cfg_fail(line, "key 'n_max' must be >= 1");
            c.n_max = int(v);
        } else if (key == "n_total_cap") {
            long v = detail::parse_int(val, key, line);
            if (v < -1) cfg_fail(line, "key 'n_total_cap' must be >= -1");
            c.n_total_cap = int(v);
        } else if (key == "n_traj") {
            long v = detail::parse_int(val, key, line);
            if (v < 0) cfg_fail(line, "key 'n_traj' must be >= 0");
            c.n_traj = int(v);
        } else if (key == "method") {
            if (val == "master") c.method = LindbladMethod::Master;
            else if (val == "trajectories") c.method = LindbladMethod::Trajectories;
            else if (val == "ness") c.method = LindbladMethod::Ness;
            else cfg_fail(line, "key 'method' expects master, trajectories or ness");
        } else if (key == "j_grid") {
            c.j_grid = detail::parse_list(val, key, line);
            for (double v : c.j_grid)
                if (!(v > 0)) cfg_fail(line, "key 'j_grid' entries must be > 0");
        } else if (key == "gamma_grid") {
            c.gamma_grid = detail::parse_list(val, key, line);
            for (double v : c.gamma_grid)
                if (!(v >= 0)) cfg_fail(line, "key 'gamma_grid' entries must be >= 0");
        } else if (key == "gamma_relative") {
            c.gamma_relative = detail::parse_bool(val, key, line);
        } else if (key == "direction") {
            if (val == "up") c.direction = SweepDirection::Up;
            else if (val == "down") c.direction = SweepDirection::Down;
            else cfg_fail(line, "key 'direction' expects up or down");
        } else if (key == "rng_seed") {
            c.rng_seed = detail::parse_u64(val, key, line);
        } else if (key == "threads") {
            long v = detail::parse_int(val, key, line);
            if (v < 0) cfg_fail(line, "key 'threads' must be >= 0");
            c.threads = int(v);
        } else if (key == "output") {
            c.output = val;
        } else if (key == "format") {
            if (val == "csv") c.format = OutputFormat::Csv;
            else if (val == "jsonl") c.format = OutputFormat::JsonLines;
            else cfg_fail(line, "key 'format' expects csv or jsonl");
        } else {
            cfg_fail(line, "unknown key '" + key + "'");
        }
    }
    if (!have_solver) throw ConfigError("config: missing solver");
    if (c.lattice.lossy_site >= c.lattice.n_sites) {
        int at = field_line.count("lossy_site") ? field_line["lossy_site"]
                                                : field_line["n_sites"];
        cfg_fail(at, "key 'lossy_site' must be < n_sites");
    }
    c.lattice.validate();
    c.coupling.validate();
    return c;
}

inline std::string dump_config(const RunConfig& c) {
    auto fd = format_double;
    std::string s;
    s += "solver = ";
    s += (c.solver == SolverChoice::Meanfield ? "meanfield"
          : c.solver == SolverChoice::TwoMode ? "two_mode" : "lindblad");
    s += "\n";
    s += "n_sites = " + std::to_string(c.lattice.n_sites) + "\n";
    s += "lossy_site = " + std::to_string(c.lattice.lossy_site) + "\n";
    s += "j_coupling = " + fd(c.lattice.j_coupling) + "\n";
    s += "u_interaction = " + fd(c.lattice.u_interaction) + "\n";
    s += "gamma = " + fd(c.lattice.gamma) + "\n";
    s += "n0 = " + fd(c.lattice.n0) + "\n";
    s += std::string("coupling = ")
         + (c.coupling.variant == CouplingVariant::Constant ? "constant"
                                                            : "franck_condon")
         + "\n";
    s += "fc_width = " + fd(c.coupling.fc_width) + "\n";
    s += "kappa_coefficient = " + fd(c.kappa_coefficient) + "\n";
    s += "tolerance = " + fd(c.tolerance) + "\n";
    s += "epsilon = " + fd(c.epsilon) + "\n";
    s += "t_max = " + fd(c.t_max) + "\n";
    s += "t_final = " + fd(c.t_final) + "\n";
    s += "n_samples = " + std::to_string(c.n_samples) + "\n";
    s += std::string("initial = ")
         + (c.initial == InitialCondition::Full ? "full" : "empty") + "\n";
    s += "seed_fraction = " + fd(c.seed_fraction) + "\n";
    s += std::string("clamp_edges = ") + (c.clamp_edges ? "true" : "false") + "\n";
    s += "n_max = " + std::to_string(c.n_max) + "\n";
    s += "n_total_cap = " + std::to_string(c.n_total_cap) + "\n";
    s += "n_traj = " + std::to_string(c.n_traj) + "\n";
    s += std::string("method = ")
         + (c.method == LindbladMethod::Master ? "master"
            : c.method == LindbladMethod::Trajectories ? "trajectories" : "ness")
         + "\n";
    s += "j_grid = " + detail::join_list(c.j_grid) + "\n";
    s += "gamma_grid = " + detail::join_list(c.gamma_grid) + "\n";
    s += std::string("gamma_relative = ") + (c.gamma_relative ? "true" : "false")
         + "\n";
    s += std::string("direction = ")
         + (c.direction == SweepDirection::Up ? "up" : "down") + "\n";
    s += "rng_seed = " + std::to_string(c.rng_seed) + "\n";
    s += "threads = " + std::to_string(c.threads) + "\n";
    s += "output = " + c.output + "\n";
    s += std::string("format = ")
         + (c.format == OutputFormat::Csv ? "csv" : "jsonl") + "\n";
    return s;
}

// FNV-1a over the normalized dump: stable fingerprint carried in output headers.
inline std::uint64_t config_hash(const RunConfig& c) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : dump_config(c)) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string config_hash_hex(const RunConfig& c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%016llx",
                  static_cast<unsigned long long>(config_hash(c)));
    return buf;
}

// --- record serialization ---------------------------------------------------

inline const char* record_columns() {
    return "j_coupling,gamma,initial_condition,filling_ratio,current,delta_phi,"
           "tau,converged,solver";
}

inline std::string json_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        if (ch == '"' || ch == '\\') out += '\\';
        out += ch;
    }
    return out;
}

inline void emit_records(const std::vector<SteadyStateRecord>& records,
                         OutputFormat format, std::ostream& os,
                         const std::string& hash_hex = "") {
    auto fd = format_double;
    if (format == OutputFormat::Csv) {
        if (!hash_hex.empty()) os << "# config = " << hash_hex << "\n";
        os << record_columns() << "\n";
        for (const auto& r : records) {
            os << fd(r.j_coupling) << "," << fd(r.gamma) << ","
               << to_string(r.initial_condition) << "," << fd(r.filling_ratio)
               << "," << fd(r.current) << "," << fd(r.delta_phi) << ","
               << (r.tau ? fd(*r.tau) : std::string("NotConverged")) << ","
               << (r.converged ? "true" : "false") << "," << to_string(r.solver)
               << "\n";
        }
    } else {
        if (!hash_hex.empty())
            os << "{\"_header\":{\"config\":\"" << hash_hex << "\"}}\n";
        for (const auto& r : records) {
            os << "{\"j_coupling\":" << fd(r.j_coupling)
               << ",\"gamma\":" << fd(r.gamma) << ",\"initial_condition\":\""
               << to_string(r.initial_condition) << "\",\"filling_ratio\":"
               << fd(r.filling_ratio) << ",\"current\":" << fd(r.current)
               << ",\"delta_phi\":" << fd(r.delta_phi) << ",\"tau\":"
               << (r.tau ? fd(*r.tau) : std::string("null"))
               << ",\"converged\":" << (r.converged ? "true" : "false")
               << ",\"solver\":\"" << to_string(r.solver) << "\"}\n";
        }
    }
}

inline void emit_records(const std::vector<SteadyStateRecord>& records,
                         OutputFormat format, const std::string& path,
                         const std::string& hash_hex = "") {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open output file: " + path);
    emit_records(records, format, os, hash_hex);
    os.flush();
    if (!os) throw std::runtime_error("write failed: " + path);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

inline double to_double(const std::string& s, const std::string& where) {
    const char* c = s.c_str();
    char* end = nullptr;
    double d = std::strtod(c, &end);
    if (end == c || *end != '\0')
        throw std::runtime_error(where + ": expected number, got '" + s + "'");
    return d;
}

} // namespace detail

inline std::vector<SteadyStateRecord> parse_records_csv(const std::string& text) {
    std::vector<SteadyStateRecord> out;
    std::stringstream ss(text);
    std::string line;
    bool saw_header = false;
    int n = 0;
    while (std::getline(ss, line)) {
        ++n;
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (!saw_header) {
            if (line != record_columns())
                throw std::runtime_error("CSV line " + std::to_string(n)
                                         + ": unexpected header");
            saw_header = true;
            continue;
        }
        auto f = detail::split_csv_line(line);
        if (f.size() != 9)
            throw std::runtime_error("CSV line " + std::to_string(n)
                                     + ": expected 9 fields, got "
                                     + std::to_string(f.size()));
        std::string where = "CSV line " + std::to_string(n);
        SteadyStateRecord r;
        r.j_coupling = detail::to_double(f[0], where);
        r.gamma = detail::to_double(f[1], where);
        r.initial_condition = (f[2] == "Full") ? InitialCondition::Full
                                               : InitialCondition::Empty;
        r.filling_ratio = detail::to_double(f[3], where);
        r.current = detail::to_double(f[4], where);
        r.delta_phi = detail::to_double(f[5], where);
        if (f[6] != "NotConverged") r.tau = detail::to_double(f[6], where);
        r.converged = (f[7] == "true");
        r.solver = (f[8] == "Meanfield") ? SolverKind::Meanfield
                                         : SolverKind::TwoMode;
        out.push_back(r);
    }
    return out;
}

inline std::vector<SteadyStateRecord> parse_records_jsonl(const std::string& text) {
    std::vector<SteadyStateRecord> out;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        line = detail::trim(line);
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (j.contains("_header")) continue;
        SteadyStateRecord r;
        r.j_coupling = j.at("j_coupling").get<double>();
        r.gamma = j.at("gamma").get<double>();
        r.initial_condition = (j.at("initial_condition").get<std::string>() == "Full")
                                  ? InitialCondition::Full : InitialCondition::Empty;
        r.filling_ratio = j.at("filling_ratio").get<double>();
        r.current = j.at("current").get<double>();
        r.delta_phi = j.at("delta_phi").get<double>();
        if (!j.at("tau").is_null()) r.tau = j.at("tau").get<double>();
        r.converged = j.at("converged").get<bool>();
        r.solver = (j.at("solver").get<std::string>() == "Meanfield")
                       ? SolverKind::Meanfield : SolverKind::TwoMode;
        out.push_back(r);
    }
    return out;
}

// --- generic tables (time series etc.) --------------------------------------

inline void emit_table(const std::vector<std::string>& columns,
                       const std::vector<std::vector<double>>& rows,
                       OutputFormat format, std::ostream& os,
                       const std::string& hash_hex = "") {
    for (const auto& row : rows)
        if (row.size() != columns.size())
            throw std::invalid_argument("emit_table: ragged row");
    if (format == OutputFormat::Csv) {
        if (!hash_hex.empty()) os << "# config = " << hash_hex << "\n";
        for (std::size_t i = 0; i < columns.size(); ++i)
            os << (i ? "," : "") << columns[i];
        os << "\n";
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i)
                os << (i ? "," : "") << format_double(row[i]);
            os << "\n";
        }
    } else {
        if (!hash_hex.empty())
            os << "{\"_header\":{\"config\":\"" << hash_hex << "\"}}\n";
        for (const auto& row : rows) {
            os << "{";
            for (std::size_t i = 0; i < row.size(); ++i)
                os << (i ? "," : "") << "\"" << json_escape(columns[i])
                   << "\":" << format_double(row[i]);
            os << "}\n";
        }
    }
}

inline void emit_table(const std::vector<std::string>& columns,
                       const std::vector<std::vector<double>>& rows,
                       OutputFormat format, const std::string& path,
                       const std::string& hash_hex = "") {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open output file: " + path);
    emit_table(columns, rows, format, os, hash_hex);
    os.flush();
    if (!os) throw std::runtime_error("write failed: " + path);
}

// first two numeric columns of a CSV (comments and header rows skipped);
// used by the fit subcommand.
inline std::vector<std::pair<double, double>> parse_xy_csv(const std::string& text) {
    std::vector<std::pair<double, double>> out;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        auto f = detail::split_csv_line(line);
        if (f.size() < 2) continue;
        char* e0 = nullptr;
        char* e1 = nullptr;
        double x = std::strtod(f[0].c_str(), &e0);
        double y = std::strtod(f[1].c_str(), &e1);
        if (e0 == f[0].c_str() || *e0 != '\0' || e1 == f[1].c_str() || *e1 != '\0')
            continue;  // header or label row
        out.emplace_back(x, y);
    }
    return out;
}

} // namespace djj
