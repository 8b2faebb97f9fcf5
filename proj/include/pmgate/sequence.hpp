#pragma once

// Gate-program synthesis: phase-modulated drive segments, Thue-Morse
// refocusing patterns, the standard Z / X designs, quantization checks and
// JSON (de)serialization.
//
// A program is a time-ordered list of segments.  PM segments drive
//   H = (W/2) sigma_x'(phi) + sum_i eps_i cos(w_i t + phi_m_i) sigma_z
// in the first rotating frame, where sigma_x'(phi) = cos(phi) sx + sin(phi) sy
// and t is measured from the start of the segment's contiguous PM run.
// BARE segments are ideal instantaneous rotations when duration == 0, or
// resonant finite-length pulses otherwise.

#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmgate/common.hpp"
#include "pmgate/qcore.hpp"

namespace pmgate {

// One sideband of the phase modulation.  eps_m is the synthesized sigma_z
// amplitude, omega_m the modulation frequency, phi_m the modulation phase.
struct ModulationTone {
    double eps_m = 0.0;    // rad/us
    double omega_m = 0.0;  // rad/us
    double phi_m = 0.0;    // rad

    // The second-frame picture assumes eps_m << omega_m; past 1/8 the
    // rotating-wave treatment becomes questionable.  Advisory, not an error.
    bool rwa_advisory() const { return eps_m > omega_m / 8.0; }

    friend bool operator==(const ModulationTone&, const ModulationTone&) = default;
};

enum class SegmentKind { PM, BARE };
enum class BareAxis { X, Y };

struct DriveSegment {
    SegmentKind kind = SegmentKind::PM;
    double phi = 0.0;       // carrier phase, PM segments (rad)
    double duration = 0.0;  // us; BARE with duration 0 means ideal/instantaneous
    std::vector<ModulationTone> tones;
    BareAxis bare_axis = BareAxis::Y;
    double bare_angle = 0.0;  // signed rotation angle, BARE segments (rad)

    friend bool operator==(const DriveSegment&, const DriveSegment&) = default;
};

struct GateTarget {
    enum class Kind { I, Z, X };
    Kind kind = Kind::I;
    double angle = 0.0;  // rad; ignored for I

    friend bool operator==(const GateTarget&, const GateTarget&) = default;
};

// Ideal unitary the target describes.
inline Unitary2 target_unitary(const GateTarget& t) {
    switch (t.kind) {
        case GateTarget::Kind::I: return Unitary2::identity();
        case GateTarget::Kind::Z: return su2_exp({0, 0, 1}, t.angle);
        case GateTarget::Kind::X: return su2_exp({1, 0, 0}, t.angle);
    }
    throw parameter_error("target_unitary: unknown target kind");
}

struct GateProgram {
    std::vector<DriveSegment> segments;
    GateTarget target;

    double total_duration() const {
        double t = 0.0;
        for (const auto& s : segments) t += s.duration;
        return t;
    }

    // Duration spent under phase-modulated drive.
    double pm_duration() const {
        double t = 0.0;
        for (const auto& s : segments)
            if (s.kind == SegmentKind::PM) t += s.duration;
        return t;
    }

    // Modulation frequency of the first PM tone; the resonance condition of
    // the standard designs sets this equal to the target-site Rabi rate.
    double primary_omega_m() const {
        for (const auto& s : segments)
            if (s.kind == SegmentKind::PM && !s.tones.empty()) return s.tones.front().omega_m;
        throw parameter_error("GateProgram: no PM segment with tones");
    }

    friend bool operator==(const GateProgram&, const GateProgram&) = default;
};

inline void validate_segment(const DriveSegment& s) {
    if (s.kind == SegmentKind::PM) {
        if (!(s.duration > 0.0)) throw parameter_error("DriveSegment: PM segment duration must be > 0");
        if (s.tones.empty()) throw parameter_error("DriveSegment: PM segment needs at least one tone");
        for (const auto& tone : s.tones) {
            if (!(tone.eps_m > 0.0)) throw parameter_error("ModulationTone: eps_m must be > 0");
            if (!(tone.omega_m > 0.0)) throw parameter_error("ModulationTone: omega_m must be > 0");
        }
    } else {
        if (s.duration < 0.0) throw parameter_error("DriveSegment: BARE segment duration must be >= 0");
        if (!s.tones.empty()) throw parameter_error("DriveSegment: BARE segment cannot carry tones");
    }
}

inline void validate_program(const GateProgram& p) {
    if (p.segments.empty()) throw parameter_error("GateProgram: needs at least one segment");
    for (const auto& s : p.segments) validate_segment(s);
}

// ---------------------------------------------------------------------------
// Thue-Morse patterns.

// Bit b_j = parity of popcount(j), j = 0 .. 2^order - 1.
inline std::vector<int> thue_morse_bits(int order) {
    if (order < 1 || order > 20) throw parameter_error("thue_morse_bits: order must be in [1, 20]");
    const std::size_t n = std::size_t(1) << order;
    std::vector<int> bits(n);
    for (std::size_t j = 0; j < n; ++j) bits[j] = std::popcount(j) & 1;
    return bits;
}

// Thue-Morse bits mapped onto a pair of phases (default {0, pi}: the
// refocusing pattern that alternates the carrier phase).
inline std::vector<double> thue_morse_phases(int order, double phase_zero = 0.0,
                                             double phase_one = std::numbers::pi) {
    const std::vector<int> bits = thue_morse_bits(order);
    std::vector<double> phases(bits.size());
    for (std::size_t j = 0; j < bits.size(); ++j) phases[j] = bits[j] ? phase_one : phase_zero;
    return phases;
}

// ---------------------------------------------------------------------------
// Standard designs.

namespace detail {
inline void check_design_args(double phi, double omega_m, int k, int order, const char* who) {
    std::ostringstream os;
    if (!(phi > 0.0)) {
        os << who << ": rotation angle must be > 0, got " << phi;
        throw parameter_error(os.str());
    }
    if (!(omega_m > 0.0)) {
        os << who << ": omega_m must be > 0, got " << omega_m;
        throw parameter_error(os.str());
    }
    if (k < 1) {
        os << who << ": quantization integer k must be >= 1, got " << k;
        throw parameter_error(os.str());
    }
    if (order < 1 || order > 16) {
        os << who << ": concatenation order must be in [1, 16], got " << order;
        throw parameter_error(os.str());
    }
}

// Core of the Z and X-PM designs: eps_m = omega_m phi / (2 pi k) so that the
// total time T = phi / eps_m spans exactly k modulation periods, split into
// 2^order equal segments with Thue-Morse phases.
inline GateProgram tm_design(double phi, double omega_m, int k, int order, double phase_zero,
                             double phase_one, bool modulate_phi_m, GateTarget target) {
    const double eps_m = omega_m * phi / (two_pi * k);
    const double total_t = phi / eps_m;
    const std::vector<double> phases = thue_morse_phases(order, phase_zero, phase_one);
    GateProgram p;
    p.target = target;
    p.segments.reserve(phases.size());
    for (double seg_phi : phases) {
        DriveSegment s;
        s.kind = SegmentKind::PM;
        s.phi = seg_phi;
        s.duration = total_t / static_cast<double>(phases.size());
        s.tones = {{eps_m, omega_m, modulate_phi_m ? seg_phi : 0.0}};
        p.segments.push_back(std::move(s));
    }
    validate_program(p);
    return p;
}
}  // namespace detail

// Z(phi) rotation: resonance omega_m = Rabi rate, carrier phases Thue-Morse
// {0, pi}, modulation phase 0 throughout.
inline GateProgram build_z_gate(double phi, double omega_m, int k, int order) {
    detail::check_design_args(phi, omega_m, k, order, "build_z_gate");
    return detail::tm_design(phi, omega_m, k, order, 0.0, std::numbers::pi, false,
                             {GateTarget::Kind::Z, phi});
}

// All-PM X(phi): both the carrier phase and the modulation phase follow the
// Thue-Morse pattern mapped to {pi/2, 3pi/2}, so every segment accumulates
// rotation about +x while the off-resonance term alternates sign.
inline GateProgram build_x_gate_pm(double phi, double omega_m, int k, int order) {
    detail::check_design_args(phi, omega_m, k, order, "build_x_gate_pm");
    return detail::tm_design(phi, omega_m, k, order, 0.5 * std::numbers::pi, 1.5 * std::numbers::pi,
                             true, {GateTarget::Kind::X, phi});
}

// Hybrid X(phi): ideal y(-pi/2), the PM Z(phi) design, ideal y(+pi/2); the
// conjugation maps the protected z rotation onto x.
inline GateProgram build_x_gate_hybrid(double phi, double omega_m, int k, int order) {
    detail::check_design_args(phi, omega_m, k, order, "build_x_gate_hybrid");
    GateProgram p = build_z_gate(phi, omega_m, k, order);
    p.target = {GateTarget::Kind::X, phi};
    DriveSegment pre;
    pre.kind = SegmentKind::BARE;
    pre.duration = 0.0;
    pre.bare_axis = BareAxis::Y;
    pre.bare_angle = -0.5 * std::numbers::pi;
    DriveSegment post = pre;
    post.bare_angle = 0.5 * std::numbers::pi;
    p.segments.insert(p.segments.begin(), pre);
    p.segments.push_back(post);
    validate_program(p);
    return p;
}

// ---------------------------------------------------------------------------
// Quantization diagnostics.

struct ToneQuantization {
    double omega_m = 0.0;
    double eps_m = 0.0;
    double cycles = 0.0;          // omega_m * T_pm / 2pi
    double cycle_residual = 0.0;  // distance to the nearest integer
    double accumulated_angle = 0.0;  // eps_m * T_pm
    bool rwa_advisory = false;
};

struct QuantizationReport {
    std::vector<ToneQuantization> tones;
    double angle_residual = 0.0;  // |accumulated - target| for single-tone Z/X designs
    bool angle_checked = false;
    bool ok = true;

    double max_cycle_residual() const {
        double r = 0.0;
        for (const auto& t : tones) r = std::max(r, t.cycle_residual);
        return r;
    }
};

inline constexpr double quantization_tol = 1e-9;

// Checks that every tone completes an integer number of modulation cycles
// over the PM duration, and (for single-tone Z/X programs) that the
// accumulated sigma_z angle eps_m * T matches the target angle.
inline QuantizationReport validate_quantization(const GateProgram& p) {
    validate_program(p);
    const double t_pm = p.pm_duration();
    QuantizationReport rep;

    // Collect distinct tones (by frequency) across PM segments.
    std::vector<ModulationTone> distinct;
    std::size_t tones_per_segment = 0;
    for (const auto& s : p.segments) {
        if (s.kind != SegmentKind::PM) continue;
        tones_per_segment = std::max(tones_per_segment, s.tones.size());
        for (const auto& tone : s.tones) {
            bool seen = false;
            for (const auto& d : distinct)
                if (d.omega_m == tone.omega_m && d.eps_m == tone.eps_m) seen = true;
            if (!seen) distinct.push_back(tone);
        }
    }

    for (const auto& tone : distinct) {
        ToneQuantization q;
        q.omega_m = tone.omega_m;
        q.eps_m = tone.eps_m;
        q.cycles = tone.omega_m * t_pm / two_pi;
        q.cycle_residual = std::abs(q.cycles - std::round(q.cycles));
        q.accumulated_angle = tone.eps_m * t_pm;
        q.rwa_advisory = tone.rwa_advisory();
        if (q.cycle_residual > quantization_tol) rep.ok = false;
        rep.tones.push_back(q);
    }

    if (distinct.size() == 1 && tones_per_segment == 1 && p.target.kind != GateTarget::Kind::I) {
        rep.angle_checked = true;
        rep.angle_residual = std::abs(rep.tones.front().accumulated_angle - p.target.angle);
        if (rep.angle_residual > quantization_tol * std::max(1.0, std::abs(p.target.angle)))
            rep.ok = false;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// JSON serialization.  All frequencies in files are rad/us.

inline constexpr int program_schema_version = 1;

namespace detail {
inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                                const std::string& ctx) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* a : allowed)
            if (it.key() == a) known = true;
        if (!known) throw parameter_error("program JSON: unknown key \"" + it.key() + "\" in " + ctx);
    }
}

inline double require_number(const nlohmann::json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key)) throw parameter_error("program JSON: missing key \"" + std::string(key) + "\" in " + ctx);
    if (!j.at(key).is_number()) throw parameter_error("program JSON: key \"" + std::string(key) + "\" in " + ctx + " must be a number");
    return j.at(key).get<double>();
}
}  // namespace detail

inline nlohmann::ordered_json serialize_program(const GateProgram& p) {
    validate_program(p);
    nlohmann::ordered_json j;
    j["schema_version"] = program_schema_version;
    const char* kind = p.target.kind == GateTarget::Kind::Z   ? "Z"
                       : p.target.kind == GateTarget::Kind::X ? "X"
                                                              : "I";
    j["target"] = {{"kind", kind}, {"angle", p.target.angle}};
    j["segments"] = nlohmann::ordered_json::array();
    for (const auto& s : p.segments) {
        nlohmann::ordered_json js;
        if (s.kind == SegmentKind::PM) {
            js["kind"] = "PM";
            js["phi"] = s.phi;
            js["duration"] = s.duration;
            js["tones"] = nlohmann::ordered_json::array();
            for (const auto& tone : s.tones)
                js["tones"].push_back(
                    {{"eps_m", tone.eps_m}, {"omega_m", tone.omega_m}, {"phi_m", tone.phi_m}});
        } else {
            js["kind"] = "BARE";
            js["axis"] = s.bare_axis == BareAxis::X ? "x" : "y";
            js["angle"] = s.bare_angle;
            js["duration"] = s.duration;
        }
        j["segments"].push_back(std::move(js));
    }
    return j;
}

inline GateProgram deserialize_program(const nlohmann::json& j) {
    if (!j.is_object()) throw parameter_error("program JSON: top level must be an object");
    detail::reject_unknown_keys(j, {"schema_version", "target", "segments"}, "program");
    if (!j.contains("schema_version"))
        throw parameter_error("program JSON: missing key \"schema_version\"");
    if (!j.at("schema_version").is_number_integer() ||
        j.at("schema_version").get<int>() != program_schema_version) {
        std::ostringstream os;
        os << "program JSON: unsupported schema_version (expected " << program_schema_version << ")";
        throw parameter_error(os.str());
    }

    GateProgram p;
    if (!j.contains("target")) throw parameter_error("program JSON: missing key \"target\"");
    const auto& jt = j.at("target");
    detail::reject_unknown_keys(jt, {"kind", "angle"}, "target");
    const std::string kind = jt.value("kind", "");
    if (kind == "Z")
        p.target.kind = GateTarget::Kind::Z;
    else if (kind == "X")
        p.target.kind = GateTarget::Kind::X;
    else if (kind == "I")
        p.target.kind = GateTarget::Kind::I;
    else
        throw parameter_error("program JSON: target.kind must be one of \"Z\", \"X\", \"I\"");
    p.target.angle = jt.contains("angle") ? detail::require_number(jt, "angle", "target") : 0.0;

    if (!j.contains("segments") || !j.at("segments").is_array())
        throw parameter_error("program JSON: \"segments\" must be an array");
    for (const auto& js : j.at("segments")) {
        DriveSegment s;
        const std::string sk = js.value("kind", "");
        if (sk == "PM") {
            detail::reject_unknown_keys(js, {"kind", "phi", "duration", "tones"}, "PM segment");
            s.kind = SegmentKind::PM;
            s.phi = detail::require_number(js, "phi", "PM segment");
            s.duration = detail::require_number(js, "duration", "PM segment");
            if (!js.contains("tones") || !js.at("tones").is_array())
                throw parameter_error("program JSON: PM segment needs a \"tones\" array");
            for (const auto& jtone : js.at("tones")) {
                detail::reject_unknown_keys(jtone, {"eps_m", "omega_m", "phi_m"}, "tone");
                ModulationTone tone;
                tone.eps_m = detail::require_number(jtone, "eps_m", "tone");
                tone.omega_m = detail::require_number(jtone, "omega_m", "tone");
                tone.phi_m = detail::require_number(jtone, "phi_m", "tone");
                s.tones.push_back(tone);
            }
        } else if (sk == "BARE") {
            detail::reject_unknown_keys(js, {"kind", "axis", "angle", "duration"}, "BARE segment");
            s.kind = SegmentKind::BARE;
            const std::string axis = js.value("axis", "");
            if (axis == "x")
                s.bare_axis = BareAxis::X;
            else if (axis == "y")
                s.bare_axis = BareAxis::Y;
            else
                throw parameter_error("program JSON: BARE segment axis must be \"x\" or \"y\"");
            s.bare_angle = detail::require_number(js, "angle", "BARE segment");
            s.duration = detail::require_number(js, "duration", "BARE segment");
        } else {
            throw parameter_error("program JSON: segment kind must be \"PM\" or \"BARE\"");
        }
        p.segments.push_back(std::move(s));
    }
    validate_program(p);
    return p;
}

}  // namespace pmgate
