#pragma once

// Spatial layer: Gaussian drive profiles over labeled site geometries,
// per-site crosstalk evaluation, and worst-case fidelity bounds for atoms
// spread over a small cloud.
//
// The drive amplitude seen at distance r from the beam center is
// W(r) = W0 * exp(-r^2 / r0^2); placing lattice neighbors at a = r0*sqrt(ln 2)
// makes every site's amplitude an exact power-of-two fraction of W0.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pmgate/common.hpp"
#include "pmgate/dynamics.hpp"
#include "pmgate/qcore.hpp"
#include "pmgate/sequence.hpp"

namespace pmgate {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

inline double distance(const Vec3& a, const Vec3& b) {
    return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z);
}

struct BeamProfile {
    double omega0 = 0.0;  // peak Rabi amplitude, rad/us
    double r0 = 0.0;      // 1/e amplitude radius, um
    Vec3 center;
};

inline void validate_beam(const BeamProfile& b) {
    if (!(b.omega0 > 0.0)) throw parameter_error("beam: omega0 must be > 0");
    if (!(b.r0 > 0.0)) throw parameter_error("beam: r0 must be > 0");
}

inline double rabi_at(const BeamProfile& beam, const Vec3& position) {
    validate_beam(beam);
    const double r = distance(position, beam.center);
    return beam.omega0 * std::exp(-(r * r) / (beam.r0 * beam.r0));
}

// Lattice constant at which the nearest neighbor sits at exactly half the
// peak amplitude.
inline double optimal_spacing(double r0) {
    if (!(r0 > 0.0)) throw parameter_error("optimal_spacing: r0 must be > 0");
    return r0 * std::sqrt(std::numbers::ln2);
}

struct Site {
    std::string label;
    Vec3 position;  // um
};

struct ArrayScene {
    BeamProfile beam;
    std::vector<Site> sites;
    std::string target_site;

    const Site& target() const {
        for (const auto& s : sites)
            if (s.label == target_site) return s;
        throw parameter_error("scene: target site '" + target_site + "' not found");
    }
};

inline void validate_scene(const ArrayScene& scene) {
    validate_beam(scene.beam);
    if (scene.sites.empty()) throw parameter_error("scene: no sites");
    std::set<std::string> labels;
    for (const auto& s : scene.sites) {
        if (!labels.insert(s.label).second)
            throw parameter_error("scene: duplicate site label '" + s.label + "'");
        if (!std::isfinite(s.position.x) || !std::isfinite(s.position.y) ||
            !std::isfinite(s.position.z))
            throw parameter_error("scene: non-finite position at site '" + s.label + "'");
    }
    scene.target();  // throws when missing
}

// n x n square lattice of spacing a centered on the beam; sites are labeled
// "i,j" by their integer lattice coordinates and the target defaults to the
// central site "0,0".
inline ArrayScene square_lattice(const BeamProfile& beam, double a, int n,
                                 std::string target = "0,0") {
    if (!(a > 0.0)) throw parameter_error("square_lattice: spacing must be > 0");
    if (n < 1) throw parameter_error("square_lattice: n must be >= 1");
    ArrayScene scene;
    scene.beam = beam;
    scene.target_site = std::move(target);
    const int lo = -(n - 1) / 2;
    for (int i = lo; i < lo + n; ++i) {
        for (int j = lo; j < lo + n; ++j) {
            std::ostringstream label;
            label << i << "," << j;
            scene.sites.push_back({label.str(),
                                   {beam.center.x + a * i, beam.center.y + a * j, beam.center.z}});
        }
    }
    validate_scene(scene);
    return scene;
}

inline ArrayScene explicit_sites(const BeamProfile& beam, std::vector<Site> sites,
                                 std::string target) {
    ArrayScene scene;
    scene.beam = beam;
    scene.sites = std::move(sites);
    scene.target_site = std::move(target);
    validate_scene(scene);
    return scene;
}

struct CloudModel {
    enum class Sampling { WORST_CASE, GRID };
    double radius = 0.0;                        // spatial spread, um
    double thermal_displacement = 0.0;          // travel during the gate, um
    Sampling sampling = Sampling::WORST_CASE;
    int grid_n = 129;                           // samples across [-d, +d] in GRID mode
};

inline void validate_cloud(const CloudModel& c) {
    if (c.radius < 0.0) throw parameter_error("cloud: radius must be >= 0");
    if (c.thermal_displacement < 0.0)
        throw parameter_error("cloud: thermal_displacement must be >= 0");
    if (c.sampling == CloudModel::Sampling::GRID && c.grid_n < 2)
        throw parameter_error("cloud: grid_n must be >= 2");
}

namespace detail {

// Radial displacements an atom may experience.  Worst-case mode evaluates
// the nominal spot and both radial endpoints of the spread (for a site at
// the beam center these coincide; for flank sites the inward endpoint can
// carry the larger amplitude change); grid mode samples evenly across
// +-spread.
inline std::vector<double> cloud_displacements(const CloudModel& cloud) {
    validate_cloud(cloud);
    const double d = cloud.radius + cloud.thermal_displacement;
    if (d == 0.0) return {0.0};
    if (cloud.sampling == CloudModel::Sampling::WORST_CASE) return {0.0, d, -d};
    std::vector<double> out(static_cast<std::size_t>(cloud.grid_n));
    for (int i = 0; i < cloud.grid_n; ++i)
        out[static_cast<std::size_t>(i)] = -d + 2.0 * d * i / (cloud.grid_n - 1);
    return out;
}

// Unit vector pointing radially outward from the beam center through the
// site; an on-center site uses +x.
inline Vec3 outward_direction(const BeamProfile& beam, const Vec3& position) {
    const double r = distance(position, beam.center);
    if (r == 0.0) return {1.0, 0.0, 0.0};
    return {(position.x - beam.center.x) / r, (position.y - beam.center.y) / r,
            (position.z - beam.center.z) / r};
}

inline Vec3 displaced(const Vec3& position, const Vec3& direction, double amount) {
    return {position.x + direction.x * amount, position.y + direction.y * amount,
            position.z + direction.z * amount};
}

inline void require_target_resonance(const ArrayScene& scene, const GateProgram& program) {
    const double omega_target = rabi_at(scene.beam, scene.target().position);
    const double omega_m = program.primary_omega_m();
    if (std::abs(omega_m - omega_target) > 1e-9 * omega_target) {
        std::ostringstream os;
        os << "scene/program mismatch: modulation frequency " << omega_m
           << " rad/us is not the target-site amplitude " << omega_target << " rad/us";
        throw parameter_error(os.str());
    }
}

}  // namespace detail

struct SceneOptions {
    Model model = Model::FIRST_FRAME;
    double amplitude_spread = 0.0;  // fractional; sites evaluated at W*(1 +- s) as well
    int step_policy = 64;
    double carrier_ratio = 50.0;
    int threads = 1;
};

struct SiteRecord {
    std::string label;
    Vec3 position;
    double omega = 0.0;             // local amplitude, rad/us
    double omega_over_omega0 = 0.0;
    double p0 = 0.0, px = 0.0, py = 0.0, pz = 0.0;  // weights at the nominal amplitude
    double fidelity_target = 0.0;   // worst over the amplitude spread
    double fidelity_identity = 0.0; // worst over the amplitude spread
    double crosstalk = 0.0;         // spectators: 1 - fidelity_identity; target: 1 - fidelity_target
    bool is_target = false;
    bool ok = true;
    std::string message;
};

namespace detail {

inline Unitary2 propagate_at(const GateProgram& program, double omega, const SceneOptions& opts) {
    PropagationRequest req;
    req.program = program;
    req.omega = omega;
    req.model = opts.model;
    req.step_policy = opts.step_policy;
    req.carrier_ratio = opts.carrier_ratio;
    return propagate(req);
}

}  // namespace detail

// Evaluates the program at every site of the scene.  Spectator crosstalk is
// the worst departure from the identity over the amplitude spread; the
// target row reports the worst departure from the intended gate.
inline std::vector<SiteRecord> crosstalk_map(const ArrayScene& scene, const GateProgram& program,
                                             const SceneOptions& opts = {}) {
    validate_scene(scene);
    validate_program(program);
    detail::require_target_resonance(scene, program);
    if (opts.amplitude_spread < 0.0 || opts.amplitude_spread >= 1.0)
        throw parameter_error("crosstalk_map: amplitude_spread must be in [0, 1)");

    const Unitary2 target_gate = target_unitary(program.target);
    std::vector<SiteRecord> records(scene.sites.size());
    parallel_for_index(scene.sites.size(), opts.threads, [&](std::size_t idx) {
        const Site& site = scene.sites[idx];
        SiteRecord rec;
        rec.label = site.label;
        rec.position = site.position;
        rec.omega = rabi_at(scene.beam, site.position);
        rec.omega_over_omega0 = rec.omega / scene.beam.omega0;
        rec.is_target = site.label == scene.target_site;
        try {
            std::vector<double> scales{1.0};
            if (opts.amplitude_spread > 0.0) {
                scales.push_back(1.0 - opts.amplitude_spread);
                scales.push_back(1.0 + opts.amplitude_spread);
            }
            rec.fidelity_target = 1.0;
            rec.fidelity_identity = 1.0;
            for (double scale : scales) {
                const Unitary2 u = detail::propagate_at(program, rec.omega * scale, opts);
                if (scale == 1.0) {
                    const PauliCoeffs c = pauli_decompose(u);
                    rec.p0 = std::norm(c.c0);
                    rec.px = std::norm(c.cx);
                    rec.py = std::norm(c.cy);
                    rec.pz = std::norm(c.cz);
                }
                rec.fidelity_target = std::min(rec.fidelity_target, gate_fidelity(u, target_gate));
                rec.fidelity_identity =
                    std::min(rec.fidelity_identity, gate_fidelity(u, PauliTarget::I));
            }
            rec.crosstalk = rec.is_target ? 1.0 - rec.fidelity_target : 1.0 - rec.fidelity_identity;
        } catch (const error& e) {
            rec.ok = false;
            rec.message = e.what();
        }
        records[idx] = std::move(rec);
    });
    std::sort(records.begin(), records.end(),
              [](const SiteRecord& a, const SiteRecord& b) { return a.label < b.label; });
    return records;
}

struct CloudBound {
    double max_infidelity_target = 0.0;
    std::map<std::string, double> max_crosstalk_per_site;  // spectators only
};

// Worst-case gate error when every atom may sit anywhere within the cloud
// spread of its nominal site.  Each site is displaced along its outward
// radial direction; the target reports 1 - fidelity vs the intended gate,
// spectators report 1 - fidelity vs identity.
inline CloudBound cloud_fidelity_bound(const ArrayScene& scene, const GateProgram& program,
                                       const CloudModel& cloud, const SceneOptions& opts = {}) {
    validate_scene(scene);
    validate_program(program);
    validate_cloud(cloud);
    detail::require_target_resonance(scene, program);

    const Unitary2 target_gate = target_unitary(program.target);
    const std::vector<double> displacements = detail::cloud_displacements(cloud);
    CloudBound bound;
    std::vector<double> worst(scene.sites.size(), 0.0);

    parallel_for_index(scene.sites.size(), opts.threads, [&](std::size_t idx) {
        const Site& site = scene.sites[idx];
        const bool is_target = site.label == scene.target_site;
        const Vec3 dir = detail::outward_direction(scene.beam, site.position);
        double site_worst = 0.0;
        for (double d : displacements) {
            const double omega = rabi_at(scene.beam, detail::displaced(site.position, dir, d));
            const Unitary2 u = detail::propagate_at(program, omega, opts);
            const double fid =
                is_target ? gate_fidelity(u, target_gate) : gate_fidelity(u, PauliTarget::I);
            site_worst = std::max(site_worst, 1.0 - fid);
        }
        worst[idx] = site_worst;
    });

    for (std::size_t i = 0; i < scene.sites.size(); ++i) {
        if (scene.sites[i].label == scene.target_site)
            bound.max_infidelity_target = worst[i];
        else
            bound.max_crosstalk_per_site[scene.sites[i].label] = worst[i];
    }
    return bound;
}

}  // namespace pmgate
