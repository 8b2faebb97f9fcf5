#pragma once

// Command-line front end: JSON config in, CSV/JSON tables out.  Every run is
// reproducible: the resolved config (after --set overrides) is hashed into
// the first line of each output file, floats are printed with a fixed
// 12-significant-digit format, and row assembly is deterministic regardless
// of the worker count.  Exit codes: 0 success, 2 config/constraint error,
// 3 numeric non-convergence.

#include "pmgate/array.hpp"
#include "pmgate/lightshift.hpp"
#include "pmgate/parallel.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace pmgate::cli {

using nlohmann::json;
using cell = nlohmann::ordered_json;  // table cells / JSON documents keep field order

struct CommonFlags {
    std::string out;     // --out override for the config "output" directory
    std::string format;  // "csv" or "json", already defaulted per command
    int threads = 1;
};

namespace detail {

// ---------------------------------------------------------------- hashing

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Hash of the canonical (key-sorted) dump of the resolved config, scoped by
// the subcommand so identical blocks in different commands do not collide.
inline std::string config_hash(const std::string& subcommand, const json& resolved) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0')
       << fnv1a(subcommand + '\n' + resolved.dump());
    return os.str();
}

// ------------------------------------------------------------- formatting

inline std::string fmt(double v) {
    std::array<char, 40> buf;
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                   std::chars_format::general, 12);
    return std::string(buf.data(), res.ptr);
}

inline std::string csv_cell(const cell& v) {
    if (v.is_null()) return "";
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return fmt(v.get<double>());
    std::string s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

// ----------------------------------------------------------- json reading

inline std::string joined(const std::string& path, const char* key) {
    return path.empty() ? std::string(key) : path + "." + key;
}

inline void require_object(const json& j, const std::string& path) {
    if (!j.is_object())
        throw parameter_error("config: \"" + path + "\" must be a JSON object");
}

inline void require_keys(const json& obj, const std::string& path,
                         std::initializer_list<const char*> allowed) {
    require_object(obj, path.empty() ? "<root>" : path);
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : obj.items())
        if (!ok.count(item.key()))
            throw parameter_error("config: unknown key \"" + joined(path, item.key().c_str()) +
                                  "\"");
}

inline bool has(const json& obj, const char* key) {
    return obj.is_object() && obj.contains(key);
}

inline const json& want(const json& obj, const std::string& path, const char* key) {
    if (!has(obj, key))
        throw parameter_error("config: missing key \"" + joined(path, key) + "\"");
    return obj.at(key);
}

inline double num_at(const json& obj, const std::string& path, const char* key) {
    const json& v = want(obj, path, key);
    if (!v.is_number())
        throw parameter_error("config: \"" + joined(path, key) + "\" must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x))
        throw parameter_error("config: \"" + joined(path, key) + "\" must be finite");
    return x;
}

inline double num_or(const json& obj, const std::string& path, const char* key, double def) {
    return has(obj, key) ? num_at(obj, path, key) : def;
}

inline long long int_at(const json& obj, const std::string& path, const char* key) {
    const json& v = want(obj, path, key);
    if (!v.is_number_integer())
        throw parameter_error("config: \"" + joined(path, key) + "\" must be an integer");
    return v.get<long long>();
}

inline long long int_or(const json& obj, const std::string& path, const char* key,
                        long long def) {
    return has(obj, key) ? int_at(obj, path, key) : def;
}

inline std::string str_at(const json& obj, const std::string& path, const char* key) {
    const json& v = want(obj, path, key);
    if (!v.is_string())
        throw parameter_error("config: \"" + joined(path, key) + "\" must be a string");
    return v.get<std::string>();
}

inline std::string str_or(const json& obj, const std::string& path, const char* key,
                          const std::string& def) {
    return has(obj, key) ? str_at(obj, path, key) : def;
}

inline Vec3 vec3_at(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() ||
        !v[2].is_number())
        throw parameter_error("config: \"" + where + "\" must be an [x, y, z] array");
    return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

// The units block is mandatory; it declares how frequency-valued numbers in
// the config are written.  MHz entries are ordinary frequencies and become
// angular internally (w = 2*pi*f).
inline double unit_factor(const json& cfg) {
    const json& u = want(cfg, "", "units");
    require_keys(u, "units", {"frequencies_in"});
    const std::string s = str_at(u, "units", "frequencies_in");
    if (s == "MHz") return two_pi;
    if (s == "rad_per_us") return 1.0;
    throw parameter_error("config: units.frequencies_in must be \"MHz\" or \"rad_per_us\"");
}

inline void check_seed(const json& cfg) {
    if (has(cfg, "seed")) (void)int_at(cfg, "", "seed");  // reserved; hashed with the config
}

inline std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
    return v;
}

// ----------------------------------------------------------- table output

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<cell>> rows;
};

inline std::filesystem::path out_dir(const json& cfg, const CommonFlags& fl) {
    const std::string dir = !fl.out.empty() ? fl.out : str_or(cfg, "", "output", ".");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw parameter_error("cannot create output directory \"" + dir + "\": " + ec.message());
    return dir;
}

inline std::filesystem::path write_table(const std::filesystem::path& dir,
                                         const std::string& stem, const Table& t,
                                         const std::string& hash, const std::string& format) {
    const std::filesystem::path file = dir / (stem + "." + format);
    std::ofstream out(file, std::ios::binary);
    if (!out) throw parameter_error("cannot open \"" + file.string() + "\" for writing");
    if (format == "csv") {
        out << "# config_hash=" << hash << "\n";
        for (std::size_t c = 0; c < t.columns.size(); ++c)
            out << (c ? "," : "") << t.columns[c];
        out << "\n";
        for (const auto& row : t.rows) {
            for (std::size_t c = 0; c < row.size(); ++c)
                out << (c ? "," : "") << csv_cell(row[c]);
            out << "\n";
        }
    } else {
        cell doc;
        doc["_config_hash"] = hash;
        doc["columns"] = t.columns;
        doc["rows"] = t.rows;
        out << doc.dump(2) << "\n";
    }
    if (!out.good()) throw parameter_error("failed while writing \"" + file.string() + "\"");
    return file;
}

// ------------------------------------------------------------ --set logic

inline void apply_set(json& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw parameter_error("--set expects key.path=value, got \"" + assignment + "\"");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;  // unquoted strings are taken literally
    }
    json* node = &cfg;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) throw parameter_error("--set: empty path component in \"" + path + "\"");
        if (!node->is_object())
            throw parameter_error("--set: \"" + path.substr(0, start) +
                                  "\" is not an object; cannot descend");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

inline json load_config(const std::string& path, const std::vector<std::string>& sets) {
    std::ifstream in(path);
    if (!in) throw parameter_error("cannot open config file \"" + path + "\"");
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::parse_error& e) {
        throw parameter_error("config parse error in \"" + path + "\": " + e.what());
    }
    if (!cfg.is_object()) throw parameter_error("config root must be a JSON object");
    for (const auto& s : sets) apply_set(cfg, s);
    return cfg;
}

// --------------------------------------------------------- shared parsers

inline Model parse_model(const std::string& s, const std::string& where) {
    if (s == "first_frame") return Model::FIRST_FRAME;
    if (s == "second_frame_rwa") return Model::SECOND_FRAME_RWA;
    if (s == "lab_frame") return Model::LAB_FRAME;
    throw parameter_error("config: \"" + where +
                          "\" must be first_frame, second_frame_rwa, or lab_frame");
}

struct DesignInfo {
    std::string kind;
    double angle = 0.0;    // rad
    int order = 0;         // 0 when the caller supplies orders itself
    int cycles = 0;        // modulation cycles per carrier period count k
    double omega_m = 0.0;  // rad/us
    GateProgram program;   // built only when an order is part of the block
};

inline GateProgram build_design(const std::string& kind, double angle, double omega_m, int k,
                                int order) {
    if (kind == "Z") return build_z_gate(angle, omega_m, k, order);
    if (kind == "X_PM") return build_x_gate_pm(angle, omega_m, k, order);
    return build_x_gate_hybrid(angle, omega_m, k, order);
}

inline GateProgram make_bare_x(double angle, double omega) {
    if (!(omega > 0.0))
        throw parameter_error("bare pulse needs a positive drive amplitude");
    GateProgram p;
    p.target = {GateTarget::Kind::X, angle};
    DriveSegment s;
    s.kind = SegmentKind::BARE;
    s.bare_axis = BareAxis::X;
    s.bare_angle = angle;
    s.duration = angle / omega;
    p.segments.push_back(s);
    return p;
}

inline int cycles_from(double k_exact, const std::string& path) {
    const double k_round = std::round(k_exact);
    if (!(k_exact > 0.0) || k_round < 1.0 ||
        std::abs(k_exact - k_round) > 1e-9 * std::max(1.0, k_exact)) {
        std::ostringstream os;
        os << "config: \"" << path
           << "\": eps_m must fit a whole number of modulation cycles into the gate "
              "(eps_m = omega_m*angle/(2*pi*k), k a positive integer); the requested value "
              "gives k = "
           << fmt(k_exact);
        throw parameter_error(os.str());
    }
    return static_cast<int>(k_round);
}

// Parses a gate-design block.  When external_omega_m > 0 the drive amplitude
// comes from the surrounding scene (resonant with the target site) and the
// block must not name its own omega_m.  need_order = false leaves program
// construction to the caller (order lists).
inline DesignInfo parse_design(const json& j, const std::string& path, double unit,
                               double external_omega_m, bool allow_bare, bool need_order) {
    require_object(j, path);
    DesignInfo d;
    d.kind = str_at(j, path, "kind");
    d.angle = num_or(j, path, "angle_over_pi", 1.0) * std::numbers::pi;
    if (!(d.angle > 0.0))
        throw parameter_error("config: \"" + path + ".angle_over_pi\" must be > 0");

    if (d.kind == "BARE_X") {
        if (!allow_bare)
            throw parameter_error("config: \"" + path +
                                  ".kind\": BARE_X is only available for light-shift scans");
        require_keys(j, path, {"kind", "angle_over_pi"});
        d.omega_m = external_omega_m;
        d.program = make_bare_x(d.angle, external_omega_m);
        return d;
    }
    if (d.kind != "Z" && d.kind != "X_PM" && d.kind != "X_HYBRID")
        throw parameter_error("config: \"" + path +
                              ".kind\" must be Z, X_PM, X_HYBRID" +
                              (allow_bare ? ", or BARE_X" : ""));

    if (external_omega_m > 0.0) {
        if (has(j, "omega_m"))
            throw parameter_error("config: \"" + path +
                                  ".omega_m\" is derived from the scene here; remove it");
        require_keys(j, path, {"kind", "angle_over_pi", "order", "eps_m_ratio", "eps_m"});
        d.omega_m = external_omega_m;
    } else {
        require_keys(j, path,
                     {"kind", "angle_over_pi", "order", "eps_m_ratio", "eps_m", "omega_m"});
        d.omega_m = num_at(j, path, "omega_m") * unit;
        if (!(d.omega_m > 0.0))
            throw parameter_error("config: \"" + path + ".omega_m\" must be > 0");
    }

    const bool by_ratio = has(j, "eps_m_ratio"), by_value = has(j, "eps_m");
    if (by_ratio == by_value)
        throw parameter_error("config: \"" + path +
                              "\" needs exactly one of eps_m_ratio or eps_m");
    double k_exact;
    if (by_ratio) {
        const double r = num_at(j, path, "eps_m_ratio");
        if (!(r > 0.0))
            throw parameter_error("config: \"" + path + ".eps_m_ratio\" must be > 0");
        k_exact = d.angle / (two_pi * r);
    } else {
        const double e = num_at(j, path, "eps_m") * unit;
        if (!(e > 0.0)) throw parameter_error("config: \"" + path + ".eps_m\" must be > 0");
        k_exact = d.omega_m * d.angle / (two_pi * e);
    }
    d.cycles = cycles_from(k_exact, path);

    if (need_order) {
        d.order = static_cast<int>(int_at(j, path, "order"));
        d.program = build_design(d.kind, d.angle, d.omega_m, d.cycles, d.order);
    } else if (has(j, "order")) {
        throw parameter_error("config: \"" + path +
                              ".order\" conflicts with the top-level orders list");
    }
    return d;
}

inline BeamProfile parse_beam(const json& cfg, double unit) {
    const json& b = want(cfg, "", "beam");
    require_keys(b, "beam", {"omega0", "r0_um", "center_um"});
    BeamProfile beam;
    beam.omega0 = num_at(b, "beam", "omega0") * unit;
    beam.r0 = num_at(b, "beam", "r0_um");
    if (has(b, "center_um")) beam.center = vec3_at(b.at("center_um"), "beam.center_um");
    validate_beam(beam);
    return beam;
}

struct SceneSpec {
    ArrayScene scene;
    bool lattice_mode = false;
    double spacing = 0.0;  // um, lattice mode only
};

// Scene = beam + either a square lattice block or an explicit sites list.
// target_required = false lets the caller install its own target afterwards
// (parallel runs name targets separately).  allow_single_default = true
// falls back to one atom at the beam center when neither block is present.
inline SceneSpec parse_scene(const json& cfg, double unit, bool target_required,
                             bool allow_single_default) {
    const BeamProfile beam = parse_beam(cfg, unit);
    const bool by_lattice = has(cfg, "lattice"), by_sites = has(cfg, "sites");
    if (by_lattice && by_sites)
        throw parameter_error("config: provide either \"lattice\" or \"sites\", not both");

    SceneSpec sc;
    if (by_lattice) {
        if (has(cfg, "target"))
            throw parameter_error(
                "config: with a lattice block the target belongs in \"lattice.target\"");
        const json& l = cfg.at("lattice");
        require_keys(l, "lattice", {"spacing_um", "size", "target"});
        double a;
        const json& sp = want(l, "lattice", "spacing_um");
        if (sp.is_string()) {
            if (sp.get<std::string>() != "optimal")
                throw parameter_error(
                    "config: \"lattice.spacing_um\" must be a number or \"optimal\"");
            a = optimal_spacing(beam.r0);
        } else {
            a = num_at(l, "lattice", "spacing_um");
        }
        const int n = static_cast<int>(int_at(l, "lattice", "size"));
        sc.scene = square_lattice(beam, a, n, str_or(l, "lattice", "target", "0,0"));
        sc.lattice_mode = true;
        sc.spacing = a;
    } else if (by_sites) {
        const json& arr = cfg.at("sites");
        if (!arr.is_array() || arr.empty())
            throw parameter_error("config: \"sites\" must be a non-empty array");
        std::vector<Site> sites;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string where = "sites[" + std::to_string(i) + "]";
            require_keys(arr[i], where, {"label", "position_um"});
            Site s;
            s.label = str_at(arr[i], where, "label");
            s.position = vec3_at(want(arr[i], where, "position_um"), where + ".position_um");
            sites.push_back(std::move(s));
        }
        std::string target = target_required
                                 ? str_at(cfg, "", "target")
                                 : str_or(cfg, "", "target", sites.front().label);
        sc.scene = explicit_sites(beam, std::move(sites), std::move(target));
    } else if (allow_single_default) {
        sc.scene = explicit_sites(beam, {{"t", beam.center}}, "t");
    } else {
        throw parameter_error("config: a \"lattice\" or \"sites\" block is required");
    }
    return sc;
}

inline SceneOptions parse_scene_options(const json& cfg, int threads) {
    SceneOptions o;
    o.threads = threads;
    if (!has(cfg, "scene_options")) return o;
    const json& s = cfg.at("scene_options");
    require_keys(s, "scene_options",
                 {"model", "amplitude_spread", "step_policy", "carrier_ratio"});
    o.model = parse_model(str_or(s, "scene_options", "model", "first_frame"),
                          "scene_options.model");
    o.amplitude_spread = num_or(s, "scene_options", "amplitude_spread", 0.0);
    o.step_policy = static_cast<int>(int_or(s, "scene_options", "step_policy", 64));
    o.carrier_ratio = num_or(s, "scene_options", "carrier_ratio", 50.0);
    return o;
}

inline SweepOptions parse_sweep_options(const json& cfg, int threads) {
    SweepOptions o;
    o.model = parse_model(str_or(cfg, "", "model", "first_frame"), "model");
    o.step_policy = static_cast<int>(int_or(cfg, "", "step_policy", 64));
    o.carrier_ratio = num_or(cfg, "", "carrier_ratio", 50.0);
    o.threads = threads;
    return o;
}

inline std::vector<double> parse_ratio_grid(const json& cfg) {
    const json& g = want(cfg, "", "grid");
    require_keys(g, "grid", {"ratio_min", "ratio_max", "points"});
    const double lo = num_or(g, "grid", "ratio_min", 0.0);
    const double hi = num_at(g, "grid", "ratio_max");
    const int n = static_cast<int>(int_at(g, "grid", "points"));
    if (lo < 0.0 || hi < lo || n < 1)
        throw parameter_error("config: grid needs 0 <= ratio_min <= ratio_max and points >= 1");
    return linspace(lo, hi, n);
}

inline std::vector<double> parse_detunings(const json& cfg, double unit) {
    const bool by_list = has(cfg, "detunings"), by_grid = has(cfg, "detuning_grid");
    if (by_list && by_grid)
        throw parameter_error("config: provide either \"detunings\" or \"detuning_grid\"");
    if (by_list) {
        const json& arr = cfg.at("detunings");
        if (!arr.is_array() || arr.empty())
            throw parameter_error("config: \"detunings\" must be a non-empty array of numbers");
        std::vector<double> dets;
        for (const auto& v : arr) {
            if (!v.is_number())
                throw parameter_error("config: \"detunings\" entries must be numbers");
            dets.push_back(v.get<double>() * unit);
        }
        return dets;
    }
    if (by_grid) {
        const json& g = cfg.at("detuning_grid");
        require_keys(g, "detuning_grid", {"min", "max", "points"});
        const double lo = num_at(g, "detuning_grid", "min") * unit;
        const double hi = num_at(g, "detuning_grid", "max") * unit;
        const int n = static_cast<int>(int_at(g, "detuning_grid", "points"));
        if (hi < lo || n < 1)
            throw parameter_error("config: detuning_grid needs min <= max and points >= 1");
        return linspace(lo, hi, n);
    }
    return {0.0};
}

inline std::string flag_of(const SweepRow& r) {
    return r.ok ? "ok" : "error: " + r.message;
}

inline Table sweep_table(const std::vector<SweepRow>& rows) {
    Table t;
    t.columns = {"omega_over_omega_m", "detuning_rad_per_us", "c0_sq", "cx_sq",
                 "cy_sq",              "cz_sq",               "fidelity", "flag"};
    for (const auto& r : rows)
        t.rows.push_back({r.omega_over_omega_m, r.detuning, r.p0, r.px, r.py, r.pz, r.fidelity,
                          flag_of(r)});
    return t;
}

// Returns 3 (numeric exit code) when any row failed, printing the first
// failure; 0 otherwise.  Tables are written before this is consulted so the
// partial data is still on disk.
inline int rows_status(const std::vector<SweepRow>& rows) {
    for (const auto& r : rows)
        if (!r.ok) {
            std::cerr << "error: sweep point omega/omega_m = " << fmt(r.omega_over_omega_m)
                      << " failed: " << r.message << "\n";
            return 3;
        }
    return 0;
}

template <typename Record>
inline int records_status(const std::vector<Record>& records) {
    for (const auto& r : records)
        if (!r.ok) {
            std::cerr << "error: site \"" << r.label << "\" failed: " << r.message << "\n";
            return 3;
        }
    return 0;
}

}  // namespace detail

// ------------------------------------------------------------- gate-sweep

inline int cmd_gate_sweep(const json& cfg, const CommonFlags& fl) {
    using namespace detail;
    require_keys(cfg, "",
                 {"units", "output", "seed", "design", "grid", "detunings", "model",
                  "step_policy", "carrier_ratio"});
    const double unit = unit_factor(cfg);
    check_seed(cfg);
    const DesignInfo d =
        parse_design(want(cfg, "", "design"), "design", unit, 0.0, false, true);
    const std::vector<double> ratios = parse_ratio_grid(cfg);
    const std::vector<double> dets = parse_detunings(cfg, unit);
    const SweepOptions opts = parse_sweep_options(cfg, fl.threads);

    const auto rows = sweep_gate_components(d.program, ratios, dets, opts);
    const std::string hash = config_hash("gate-sweep", cfg);
    const auto file = write_table(out_dir(cfg, fl), "gate_sweep", sweep_table(rows), hash, fl.format);

    // summary probes at the quoted operating points, independent of the grid
    const auto probes =
        sweep_gate_components(d.program, {0.25, 0.5, 0.75, 1.0}, {0.0}, opts);
    std::cout << "gate-sweep: " << d.kind << " order " << d.order << ", " << rows.size()
              << " rows -> " << file.string() << "\n";
    std::cout << "  fidelity at omega/omega_m = 1: " << fmt(probes[3].fidelity) << "\n";
    for (int i = 0; i < 3; ++i) {
        const double resid = std::max({probes[i].px, probes[i].py, probes[i].pz});
        std::cout << "  crossing residual at " << fmt(probes[i].omega_over_omega_m)
                  << ": max weight " << fmt(resid) << "\n";
    }
    const int rc = rows_status(rows);
    return rc ? rc : rows_status(probes);
}

// --------------------------------------------------------- concat-compare

inline int cmd_concat_compare(const json& cfg, const CommonFlags& fl) {
    using namespace detail;
    require_keys(cfg, "",
                 {"units", "output", "seed", "design", "orders", "mode", "grid", "detunings",
                  "detuning_grid", "model", "step_policy", "carrier_ratio"});
    const double unit = unit_factor(cfg);
    check_seed(cfg);
    const DesignInfo d =
        parse_design(want(cfg, "", "design"), "design", unit, 0.0, false, false);

    const json& oj = want(cfg, "", "orders");
    if (!oj.is_array() || oj.empty())
        throw parameter_error("config: \"orders\" must be a non-empty integer array");
    std::vector<int> orders;
    for (const auto& v : oj) {
        if (!v.is_number_integer())
            throw parameter_error("config: \"orders\" entries must be integers");
        const int n = v.get<int>();
        if (std::find(orders.begin(), orders.end(), n) != orders.end())
            throw parameter_error("config: duplicate order " + std::to_string(n));
        orders.push_back(n);
    }

    const std::string mode = str_or(cfg, "", "mode", "fixed_eps_m");
    if (mode != "fixed_eps_m" && mode != "fixed_bandwidth")
        throw parameter_error("config: \"mode\" must be fixed_eps_m or fixed_bandwidth");

    const std::vector<double> ratios = parse_ratio_grid(cfg);
    const std::vector<double> dets = parse_detunings(cfg, unit);
    const SweepOptions opts = parse_sweep_options(cfg, fl.threads);
    const std::string hash = config_hash("concat-compare", cfg);
    const auto dir = out_dir(cfg, fl);

    std::cout << "concat-compare: " << d.kind << ", mode " << mode << ", " << orders.size()
              << " tables -> " << dir.string() << "\n";
    int rc = 0;
    const int base_order = orders.front();
    for (const int n : orders) {
        // fixed_eps_m keeps the modulation strength (total time) constant;
        // fixed_bandwidth keeps the segment duration of the first order.
        long long k = d.cycles;
        if (mode == "fixed_bandwidth") {
            if (n >= base_order) {
                const int shift = n - base_order;
                if (shift > 20 || (k << shift) > 1000000)
                    throw parameter_error("config: fixed_bandwidth cycle count overflows");
                k <<= shift;
            } else {
                const int shift = base_order - n;
                if (k % (1ll << shift) != 0)
                    throw parameter_error(
                        "config: fixed_bandwidth needs the base cycle count divisible by 2^" +
                        std::to_string(shift) + " for order " + std::to_string(n));
                k >>= shift;
            }
        }
        const GateProgram prog =
            build_design(d.kind, d.angle, d.omega_m, static_cast<int>(k), n);
        const auto rows = sweep_gate_components(prog, ratios, dets, opts);
        write_table(dir, "concat_compare_order_" + std::to_string(n), sweep_table(rows), hash,
                    fl.format);

        const auto center = sweep_gate_components(prog, linspace(0.98, 1.02, 41), {0.0}, opts);
        double flat = 0.0;
        for (const auto& r : center)
            if (r.ok) flat = std::max(flat, 1.0 - r.fidelity);
        const double eps = prog.segments.front().tones.front().eps_m;
        std::cout << "  order " << n << ": eps_m = " << fmt(eps)
                  << " rad/us, center flatness (max infidelity, omega/omega_m in [0.98, 1.02]) = "
                  << fmt(flat) << "\n";
        if (!rc) rc = rows_status(rows);
        if (!rc) rc = rows_status(center);
    }
    return rc;
}

// ------------------------------------------------------------ lattice-map

inline int cmd_lattice_map(const json& cfg, const CommonFlags& fl) {
    using namespace detail;
    require_keys(cfg, "",
                 {"units", "output", "seed", "beam", "lattice", "sites", "target", "design",
                  "scene_options"});
    const double unit = unit_factor(cfg);
    check_seed(cfg);
    const SceneSpec sc = parse_scene(cfg, unit, true, false);
    const double omega_target = rabi_at(sc.scene.beam, sc.scene.target().position);
    const DesignInfo d =
        parse_design(want(cfg, "", "design"), "design", unit, omega_target, false, true);
    const SceneOptions opts = parse_scene_options(cfg, fl.threads);

    const auto records = crosstalk_map(sc.scene, d.program, opts);
    Table t;
    t.columns = {"site_label", "x_um", "y_um", "z_um", "omega_over_omega0", "fidelity_target",
                 "fidelity_identity", "crosstalk"};
    for (const auto& r : records)
        t.rows.push_back({r.label, r.position.x, r.position.y, r.position.z,
                          r.omega_over_omega0, r.fidelity_target, r.fidelity_identity,
                          r.crosstalk});
    const std::string hash = config_hash("lattice-map", cfg);
    const auto file = write_table(out_dir(cfg, fl), "lattice_map", t, hash, fl.format);

    std::cout << "lattice-map: " << records.size() << " sites -> " << file.string() << "\n";
    const Vec3 tp = sc.scene.target().position;
    double worst_ct = 0.0, nn_ct = 0.0, nnn_ct = 0.0;
    std::string worst_label;
    bool any_nn = false, any_nnn = false;
    for (const auto& r : records) {
        if (r.is_target) {
            std::cout << "  target \"" << r.label << "\": fidelity " << fmt(r.fidelity_target)
                      << "\n";
            continue;
        }
        if (r.crosstalk >= worst_ct) {
            worst_ct = r.crosstalk;
            worst_label = r.label;
        }
        if (sc.lattice_mode) {
            const double dist = distance(r.position, tp);
            if (std::abs(dist - sc.spacing) <= 1e-9 * sc.spacing) {
                nn_ct = std::max(nn_ct, r.crosstalk);
                any_nn = true;
            } else if (std::abs(dist - sc.spacing * std::numbers::sqrt2) <=
                       1e-9 * sc.spacing) {
                nnn_ct = std::max(nnn_ct, r.crosstalk);
                any_nnn = true;
            }
        }
    }
    if (!worst_label.empty())
        std::cout << "  max spectator crosstalk: " << fmt(worst_ct) << " at \"" << worst_label
                  << "\"\n";
    if (any_nn) std::cout << "  nearest-neighbor crosstalk: " << fmt(nn_ct) << "\n";
    if (any_nnn) std::cout << "  next-nearest-neighbor crosstalk: " << fmt(nnn_ct) << "\n";
    return records_status(records);
}

// ----------------------------------------------------------- parallel-sim

inline int cmd_parallel_sim(const json& cfg, const CommonFlags& fl) {
    using namespace detail;
    require_keys(cfg, "",
                 {"units", "output", "seed", "beam", "lattice", "sites", "target", "targets",
                  "eps_m", "order", "distinguishability_factor", "center_candidates_um",
                  "scene_options"});
    const double unit = unit_factor(cfg);
    check_seed(cfg);

    const json& tj = want(cfg, "", "targets");
    if (!tj.is_array() || tj.empty())
        throw parameter_error("config: \"targets\" must be a non-empty array");
    std::vector<ParallelTarget> targets;
    for (std::size_t i = 0; i < tj.size(); ++i) {
        const std::string where = "targets[" + std::to_string(i) + "]";
        require_keys(tj[i], where, {"site", "angle_over_pi"});
        targets.push_back({str_at(tj[i], where, "site"),
                           num_at(tj[i], where, "angle_over_pi") * std::numbers::pi});
    }

    SceneSpec sc = parse_scene(cfg, unit, false, false);
    sc.scene.target_site = targets.front().site;
    const double eps = num_at(cfg, "", "eps_m") * unit;
    const int order = static_cast<int>(int_or(cfg, "", "order", 1));
    const double factor = num_or(cfg, "", "distinguishability_factor", 4.0);

    ParallelPlan plan;
    try {
        plan = plan_parallel(sc.scene, targets, eps, factor);
    } catch (const parameter_error& e) {
        if (std::string(e.what()).find("distinguishab") != std::string::npos) {
            // rank candidate beam centers so the caller can re-aim the beam
            std::vector<Vec3> candidates;
            if (has(cfg, "center_candidates_um")) {
                const json& arr = cfg.at("center_candidates_um");
                if (!arr.is_array())
                    throw parameter_error("config: \"center_candidates_um\" must be an array");
                for (std::size_t i = 0; i < arr.size(); ++i)
                    candidates.push_back(vec3_at(
                        arr[i], "center_candidates_um[" + std::to_string(i) + "]"));
            } else {
                double dmin = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < targets.size(); ++i)
                    for (std::size_t j = i + 1; j < targets.size(); ++j) {
                        Vec3 a{}, b{};
                        for (const auto& s : sc.scene.sites) {
                            if (s.label == targets[i].site) a = s.position;
                            if (s.label == targets[j].site) b = s.position;
                        }
                        dmin = std::min(dmin, distance(a, b));
                    }
                for (double fx : {-0.31, -0.17, 0.0, 0.17, 0.31})
                    for (double fy : {-0.31, -0.17, 0.0, 0.17, 0.31})
                        candidates.push_back({sc.scene.beam.center.x + fx * dmin,
                                              sc.scene.beam.center.y + fy * dmin,
                                              sc.scene.beam.center.z});
            }
            const auto ranked = center_offset_search(sc.scene, candidates, eps);
            if (!ranked.empty())
                std::cerr << "suggestion: re-center the beam at (" << fmt(ranked[0].center.x)
                          << ", " << fmt(ranked[0].center.y) << ", " << fmt(ranked[0].center.z)
                          << ") um; min tone gap " << fmt(ranked[0].min_pair_gap)
                          << " rad/us (margin " << fmt(ranked[0].margin) << ")\n";
        }
        throw;
    }

    const SceneOptions opts = parse_scene_options(cfg, fl.threads);
    const auto records = propagate_parallel(sc.scene, plan, order, opts);
    Table t;
    t.columns = {"site_label", "x_um", "y_um", "z_um", "omega_over_omega0", "fidelity_target",
                 "fidelity_identity", "crosstalk", "tone_index"};
    for (const auto& r : records)
        t.rows.push_back({r.label, r.position.x, r.position.y, r.position.z,
                          r.omega_over_omega0, r.fidelity_target, r.fidelity_identity,
                          r.crosstalk, r.tone_index});
    const std::string hash = config_hash("parallel-sim", cfg);
    const auto file = write_table(out_dir(cfg, fl), "parallel_sim", t, hash, fl.format);

    std::cout << "parallel-sim: " << plan.tones.size() << " tones, T = " << fmt(plan.total_T)
              << " us, order " << order << " -> " << file.string() << "\n";
    double min_target = 1.0, max_ct = 0.0;
    for (const auto& r : records) {
        if (r.tone_index >= 0)
            min_target = std::min(min_target, r.fidelity_target);
        else
            max_ct = std::max(max_ct, r.crosstalk);
    }
    std::cout << "  min target fidelity: " << fmt(min_target) << "\n";
    std::cout << "  max spectator crosstalk: " << fmt(max_ct) << "\n";
    return records_status(records);
}

// -------------------------------------------------------------- lightshift

inline int cmd_lightshift(const json& cfg, const CommonFlags& fl) {
    using namespace detail;
    require_keys(cfg, "", {"units", "output", "seed", "params", "mode", "simulate", "scan"});
    const double unit = unit_factor(cfg);
    check_seed(cfg);

    const json& pj = want(cfg, "", "params");
    require_keys(pj, "params",
                 {"omega1", "omega2", "omega_c", "delta_big", "delta_c", "factor",
                  "delta_small", "delta_shift"});
    FourLevelParams p;
    p.omega1 = num_at(pj, "params", "omega1") * unit;
    p.omega2 = num_at(pj, "params", "omega2") * unit;
    p.omega_c = num_at(pj, "params", "omega_c") * unit;
    p.delta_big = num_at(pj, "params", "delta_big") * unit;
    p.delta_small = num_or(pj, "params", "delta_small", 0.0) * unit;
    p.delta_shift = num_or(pj, "params", "delta_shift", 0.0) * unit;

    const bool by_dc = has(pj, "delta_c"), by_factor = has(pj, "factor");
    if (by_dc == by_factor)
        throw parameter_error("config: \"params\" needs exactly one of delta_c or factor");
    double xi;
    if (by_factor) {
        xi = num_at(pj, "params", "factor");
        p.delta_c = solve_detuning_for_factor(xi, p.delta_big, p.omega_c);
    } else {
        p.delta_c = num_at(pj, "params", "delta_c") * unit;
        xi = pmgate::detail::realized_factor(p);
        if (std::abs(xi - 1.0) < 1e-12) xi = 1.0;
    }

    const std::string mode = str_at(cfg, "", "mode");
    const std::string hash = config_hash("lightshift", cfg);
    const auto dir = out_dir(cfg, fl);

    if (mode == "analytic") {
        const double eff = effective_rabi(p);
        const DressedBasis b = dressed_basis(p);
        const double sens = p.omega_c == 0.0 ? 0.0 : sensitivity_to_shift(p, xi);
        Table t;
        t.columns = {"omega_eff_rad_per_us", "modification_factor", "delta_plus",
                     "delta_minus",          "ratio_plus_sq",       "ratio_minus_sq",
                     "d_factor_d_shift_us",  "perturbative_advisory"};
        t.rows.push_back({eff, xi, b.delta_plus, b.delta_minus, b.ratio_plus * b.ratio_plus,
                          b.ratio_minus * b.ratio_minus, sens, perturbative_advisory(p)});
        const auto file = write_table(dir, "lightshift_analytic", t, hash, fl.format);
        std::cout << "lightshift analytic -> " << file.string() << "\n";
        std::cout << "  omega_eff = " << fmt(eff) << " rad/us (" << fmt(eff / two_pi)
                  << " MHz), factor " << fmt(xi) << "\n";
        return 0;
    }
    if (mode == "simulate") {
        double periods = 2.5;
        int samples = 1024;
        if (has(cfg, "simulate")) {
            const json& s = cfg.at("simulate");
            require_keys(s, "simulate", {"periods", "samples"});
            periods = num_or(s, "simulate", "periods", 2.5);
            samples = static_cast<int>(int_or(s, "simulate", "samples", 1024));
        }
        const double eff = effective_rabi(p);
        const RabiTrace tr =
            simulate_rabi_oscillation(p, periods * two_pi / std::abs(eff), samples);
        Table t;
        t.columns = {"t_us", "p_up", "p_down", "p_e", "p_s"};
        for (std::size_t j = 0; j < tr.t.size(); ++j)
            t.rows.push_back({tr.t[j], tr.p_up[j], tr.p_down[j], tr.p_e[j], tr.p_s[j]});
        const auto file = write_table(dir, "lightshift_trace", t, hash, fl.format);
        std::cout << "lightshift simulate -> " << file.string() << "\n";
        std::cout << "  omega_eff analytic " << fmt(tr.analytic_omega) << " rad/us, extracted "
                  << fmt(tr.extracted_omega) << " rad/us (rel dev "
                  << fmt(std::abs(tr.extracted_omega - tr.analytic_omega) /
                         std::abs(tr.analytic_omega))
                  << ")\n";
        return 0;
    }
    if (mode == "scan") {
        const json& s = want(cfg, "", "scan");
        require_keys(s, "scan", {"shift_min", "shift_max", "points", "gate"});
        ShiftRange range;
        range.lo = num_at(s, "scan", "shift_min") * unit;
        range.hi = num_at(s, "scan", "shift_max") * unit;
        range.points = static_cast<int>(int_or(s, "scan", "points", 51));
        const double eff0 = effective_rabi(p);
        const GateProgram gate =
            has(s, "gate")
                ? parse_design(s.at("gate"), "scan.gate", unit, eff0, true, true).program
                : make_bare_x(std::numbers::pi, eff0);

        const ShiftScanResult res = addressing_infidelity_scan(p, xi, range, gate);
        Table t;
        t.columns = {"delta_c_shift_rad_per_us", "omega_eff_analytic", "omega_eff_extracted",
                     "infidelity"};
        double worst_dev = 0.0;
        for (const auto& r : res.rows) {
            t.rows.push_back(
                {r.delta_c_shift, r.omega_eff_analytic, r.omega_eff_extracted, r.infidelity});
            worst_dev = std::max(worst_dev,
                                 std::abs(r.omega_eff_extracted - r.omega_eff_analytic) /
                                     std::abs(r.omega_eff_analytic));
        }
        const auto file = write_table(dir, "lightshift_scan", t, hash, fl.format);
        std::cout << "lightshift scan: " << res.rows.size() << " points -> " << file.string()
                  << "\n";
        std::cout << "  worst infidelity: " << fmt(res.worst_infidelity) << "\n";
        std::cout << "  worst analytic/extracted deviation: " << fmt(worst_dev) << "\n";
        return 0;
    }
    throw parameter_error("config: \"mode\" must be analytic, simulate, or scan");
}

// --------------------------------------------------------- fidelity-report

inline int cmd_fidelity_report(const json& cfg, const CommonFlags& fl) {
    using namespace detail;
    require_keys(cfg, "",
                 {"units", "output", "seed", "scenario", "beam", "lattice", "sites", "target",
                  "cloud", "design", "orders", "bounds", "scene_options"});
    const double unit = unit_factor(cfg);
    check_seed(cfg);
    const SceneSpec sc = parse_scene(cfg, unit, true, true);

    const json& cj = want(cfg, "", "cloud");
    require_keys(cj, "cloud", {"radius_um", "thermal_um", "sampling", "grid_n"});
    CloudModel cloud;
    cloud.radius = num_or(cj, "cloud", "radius_um", 0.0);
    cloud.thermal_displacement = num_or(cj, "cloud", "thermal_um", 0.0);
    const std::string sampling = str_or(cj, "cloud", "sampling", "worst_case");
    if (sampling == "worst_case")
        cloud.sampling = CloudModel::Sampling::WORST_CASE;
    else if (sampling == "grid")
        cloud.sampling = CloudModel::Sampling::GRID;
    else
        throw parameter_error("config: \"cloud.sampling\" must be worst_case or grid");
    cloud.grid_n = static_cast<int>(int_or(cj, "cloud", "grid_n", 129));

    const json& oj = want(cfg, "", "orders");
    if (!oj.is_array() || oj.empty())
        throw parameter_error("config: \"orders\" must be a non-empty integer array");
    std::vector<int> orders;
    for (const auto& v : oj) {
        if (!v.is_number_integer())
            throw parameter_error("config: \"orders\" entries must be integers");
        orders.push_back(v.get<int>());
    }
    std::vector<double> bounds;
    if (has(cfg, "bounds")) {
        const json& bj = cfg.at("bounds");
        if (!bj.is_array() || bj.size() != orders.size())
            throw parameter_error("config: \"bounds\" must match \"orders\" in length");
        for (const auto& v : bj) {
            if (!v.is_number())
                throw parameter_error("config: \"bounds\" entries must be numbers");
            bounds.push_back(v.get<double>());
        }
    }

    const double omega_target = rabi_at(sc.scene.beam, sc.scene.target().position);
    const DesignInfo d =
        parse_design(want(cfg, "", "design"), "design", unit, omega_target, false, false);
    const SceneOptions opts = parse_scene_options(cfg, fl.threads);
    const std::string scenario = str_or(cfg, "", "scenario", "scenario");
    const std::string hash = config_hash("fidelity-report", cfg);

    cell report;
    report["_config_hash"] = hash;
    report["scenario"] = scenario;
    report["orders"] = cell::array();
    std::cout << "fidelity-report: \"" << scenario << "\", " << orders.size() << " orders\n";

    const Vec3 tp = sc.scene.target().position;
    for (std::size_t i = 0; i < orders.size(); ++i) {
        const GateProgram prog =
            build_design(d.kind, d.angle, d.omega_m, d.cycles, orders[i]);
        const CloudBound cb = cloud_fidelity_bound(sc.scene, prog, cloud, opts);

        // lattice scenes report the nearest-neighbor ring; explicit scenes
        // report the worst spectator overall
        cell nn = nullptr;
        double nn_val = 0.0;
        bool any = false;
        for (const auto& [label, ct] : cb.max_crosstalk_per_site) {
            if (sc.lattice_mode) {
                Vec3 pos{};
                for (const auto& site : sc.scene.sites)
                    if (site.label == label) pos = site.position;
                if (std::abs(distance(pos, tp) - sc.spacing) > 1e-9 * sc.spacing) continue;
            }
            nn_val = std::max(nn_val, ct);
            any = true;
        }
        if (any) nn = nn_val;

        cell entry;
        entry["order"] = orders[i];
        entry["max_infidelity"] = cb.max_infidelity_target;
        entry["nn_crosstalk"] = nn;
        std::ostringstream line;
        line << "  order " << orders[i] << ": max infidelity "
             << fmt(cb.max_infidelity_target);
        if (!bounds.empty()) {
            entry["bound"] = bounds[i];
            entry["within_bound"] = cb.max_infidelity_target <= bounds[i];
            line << " (bound " << fmt(bounds[i]) << " -> "
                 << (cb.max_infidelity_target <= bounds[i] ? "ok" : "EXCEEDED") << ")";
        }
        if (any) line << ", nn crosstalk " << fmt(nn_val);
        std::cout << line.str() << "\n";
        report["orders"].push_back(entry);
    }

    const auto dir = out_dir(cfg, fl);
    std::filesystem::path file;
    if (fl.format == "json") {
        file = dir / "fidelity_report.json";
        std::ofstream out(file, std::ios::binary);
        if (!out) throw parameter_error("cannot open \"" + file.string() + "\" for writing");
        out << report.dump(2) << "\n";
        if (!out.good())
            throw parameter_error("failed while writing \"" + file.string() + "\"");
    } else {
        Table t;
        t.columns = {"order", "max_infidelity", "nn_crosstalk", "bound", "within_bound"};
        for (const auto& e : report["orders"])
            t.rows.push_back({e.at("order"), e.at("max_infidelity"), e.at("nn_crosstalk"),
                              e.contains("bound") ? e.at("bound") : cell(nullptr),
                              e.contains("within_bound") ? e.at("within_bound")
                                                         : cell(nullptr)});
        file = write_table(dir, "fidelity_report", t, hash, fl.format);
    }
    std::cout << "  -> " << file.string() << "\n";
    return 0;
}

// ------------------------------------------------------------------ driver

namespace detail {

inline int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("PMGATE_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1 || v > 4096)
            throw parameter_error("PMGATE_THREADS must be a positive integer, got \"" +
                                  std::string(env) + "\"");
        return static_cast<int>(v);
    }
    return 1;
}

}  // namespace detail

inline int run(int argc, char** argv) {
    CLI::App app{"phase-modulated single-qubit gate synthesis, propagation, and crosstalk "
                 "analysis for atom arrays"};
    app.require_subcommand(1);

    std::string config, out, format;
    int threads = 0;
    std::vector<std::string> sets;

    struct Cmd {
        const char* name;
        const char* desc;
        int (*fn)(const json&, const CommonFlags&);
        const char* default_format;
    };
    const std::array<Cmd, 6> cmds{{
        {"gate-sweep", "gate components and fidelity across drive amplitude", cmd_gate_sweep,
         "csv"},
        {"concat-compare", "refocusing-order comparison tables", cmd_concat_compare, "csv"},
        {"lattice-map", "per-site fidelity and crosstalk over a beam scene", cmd_lattice_map,
         "csv"},
        {"parallel-sim", "multi-tone parallel gate simulation", cmd_parallel_sim, "csv"},
        {"lightshift", "four-level light-shift addressing analysis", cmd_lightshift, "csv"},
        {"fidelity-report", "worst-case cloud infidelity ladder", cmd_fidelity_report, "json"},
    }};
    std::array<CLI::App*, 6> subs{};
    for (std::size_t i = 0; i < cmds.size(); ++i) {
        CLI::App* sub = app.add_subcommand(cmds[i].name, cmds[i].desc);
        sub->add_option("--config", config, "JSON config file")->required();
        sub->add_option("--set", sets, "override a config key, e.g. --set design.order=4");
        sub->add_option("--out", out, "output directory (overrides config \"output\")");
        sub->add_option("--threads", threads, "worker threads (default PMGATE_THREADS or 1)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--format", format, "output format")
            ->check(CLI::IsMember({"csv", "json"}));
        subs[i] = sub;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        for (std::size_t i = 0; i < cmds.size(); ++i) {
            if (!subs[i]->parsed()) continue;
            const json cfg = detail::load_config(config, sets);
            CommonFlags fl;
            fl.out = out;
            fl.format = format.empty() ? cmds[i].default_format : format;
            fl.threads = detail::resolve_threads(threads);
            return cmds[i].fn(cfg, fl);
        }
        throw parameter_error("no subcommand selected");
    } catch (const numeric_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace pmgate::cli
