#pragma once

// Parallel single-qubit gates through multi-tone phase modulation: one
// modulation tone per target site, resonant with that site's local Rabi
// rate.  Planning validates that the targets are spectrally distinguishable
// and that one common duration closes every tone's modulation cycle; the
// evaluation is plain multi-tone first-frame propagation, site by site.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pmgate/array.hpp"
#include "pmgate/common.hpp"
#include "pmgate/dynamics.hpp"
#include "pmgate/sequence.hpp"

namespace pmgate {

// Quantization failure; carries the nearest workable eps_m when one exists
// (0 when the scan found none).
struct quantization_error : parameter_error {
    double suggested_eps_m = 0.0;
    quantization_error(const std::string& what, double suggestion)
        : parameter_error(what), suggested_eps_m(suggestion) {}
};

struct ParallelTarget {
    std::string site;
    double angle = 0.0;  // intended z rotation, rad
};

struct ParallelPlan {
    std::vector<ModulationTone> tones;                    // one per target, phi_m = 0
    std::map<std::string, std::size_t> site_assignments;  // site label -> tone index
    std::vector<double> angles;                           // rad, indexed like tones
    double eps_common = 0.0;                              // rad/us, the largest per-tone eps_m
    double total_T = 0.0;                                 // us
};

namespace detail {

inline bool near_integer(double x, double tol = 1e-9) {
    return std::abs(x - std::round(x)) <= tol * std::max(1.0, std::abs(x));
}

// Nearest duration T near T0 that closes every tone's modulation cycle,
// found by stepping the slowest tone's cycle count outward from its nominal
// value; returns the eps_m that produces it, or 0 when nothing nearby works.
inline double suggest_eps_m(const std::vector<double>& omegas, double phi_max, double t0) {
    const double omega_min = *std::min_element(omegas.begin(), omegas.end());
    const auto feasible = [&](double t) {
        for (double w : omegas)
            if (!near_integer(w * t / two_pi) || w * t < two_pi * (1.0 - 1e-9)) return false;
        return true;
    };
    const std::int64_t k0 = std::max<std::int64_t>(1, std::llround(omega_min * t0 / two_pi));
    for (std::int64_t step = 0; step <= 4096; ++step) {
        for (std::int64_t k : {k0 + step, k0 - step}) {
            if (k < 1) continue;
            const double t = two_pi * static_cast<double>(k) / omega_min;
            if (feasible(t)) return phi_max / t;
            if (step == 0) break;
        }
    }
    return 0.0;
}

}  // namespace detail

// Chooses one tone per target, resonant with the target's local amplitude,
// and one common duration T = max(angle)/eps_m.  Each tone's strength is
// angle/T so every target accumulates its intended rotation over the same
// window; eps_m must make every tone close an integer number of modulation
// cycles in T.
inline ParallelPlan plan_parallel(const ArrayScene& scene, const std::vector<ParallelTarget>& targets,
                                  double eps_m, double distinguishability_factor = 4.0) {
    validate_scene(scene);
    if (targets.empty()) throw parameter_error("plan_parallel: no targets");
    if (!(eps_m > 0.0)) throw parameter_error("plan_parallel: eps_m must be > 0");
    if (!(distinguishability_factor > 0.0))
        throw parameter_error("plan_parallel: distinguishability_factor must be > 0");

    std::vector<double> omegas(targets.size());
    double phi_max = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (!(targets[i].angle > 0.0))
            throw parameter_error("plan_parallel: rotation angle must be > 0 for site '" +
                                  targets[i].site + "'");
        const Site* found = nullptr;
        for (const auto& s : scene.sites)
            if (s.label == targets[i].site) found = &s;
        if (!found) throw parameter_error("plan_parallel: unknown site '" + targets[i].site + "'");
        omegas[i] = rabi_at(scene.beam, found->position);
        phi_max = std::max(phi_max, targets[i].angle);
    }

    for (std::size_t i = 0; i < targets.size(); ++i) {
        for (std::size_t j = i + 1; j < targets.size(); ++j) {
            const double gap = std::abs(omegas[i] - omegas[j]);
            if (gap < distinguishability_factor * eps_m) {
                std::ostringstream os;
                os << "plan_parallel: sites '" << targets[i].site << "' and '" << targets[j].site
                   << "' are not distinguishable: |dW| = " << gap << " rad/us < "
                   << distinguishability_factor << " * eps_m = "
                   << distinguishability_factor * eps_m;
                throw parameter_error(os.str());
            }
        }
    }

    const double total_t = phi_max / eps_m;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double k = omegas[i] * total_t / two_pi;
        if (!detail::near_integer(k) || k < 1.0 - 1e-9) {
            const double suggestion = detail::suggest_eps_m(omegas, phi_max, total_t);
            std::ostringstream os;
            os << "plan_parallel: tone for site '" << targets[i].site << "' spans " << k
               << " modulation cycles over T = " << total_t << " us, not an integer";
            if (suggestion > 0.0) os << "; nearest feasible eps_m = " << suggestion << " rad/us";
            throw quantization_error(os.str(), suggestion);
        }
    }

    ParallelPlan plan;
    plan.eps_common = eps_m;
    plan.total_T = total_t;
    plan.tones.reserve(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (plan.site_assignments.count(targets[i].site))
            throw parameter_error("plan_parallel: site '" + targets[i].site + "' listed twice");
        plan.tones.push_back({targets[i].angle / total_t, omegas[i], 0.0});
        plan.angles.push_back(targets[i].angle);
        plan.site_assignments[targets[i].site] = i;
    }
    return plan;
}

// Smallest detuning between a local amplitude and any active tone; large
// values (>~ 10 eps_m) mark a site as a safe spectator.
inline double min_tone_detuning(const ParallelPlan& plan, double omega) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& tone : plan.tones)
        if (tone.eps_m > 0.0) best = std::min(best, std::abs(omega - tone.omega_m));
    return best;
}

// The shared drive program a plan realizes: 2^order equal segments whose
// carrier phases follow the Thue-Morse {0, pi} refocusing pattern, all
// active tones present in every segment.  Tones with eps_m == 0 are omitted
// (switched off).
inline GateProgram parallel_program(const ParallelPlan& plan, int order) {
    if (plan.tones.empty()) throw parameter_error("parallel_program: plan has no tones");
    if (!(plan.total_T > 0.0)) throw parameter_error("parallel_program: total_T must be > 0");
    if (order < 1 || order > 16)
        throw parameter_error("parallel_program: concatenation order must be in [1, 16]");
    std::vector<ModulationTone> active;
    for (const auto& tone : plan.tones)
        if (tone.eps_m > 0.0) active.push_back(tone);
    if (active.empty()) throw parameter_error("parallel_program: all tones switched off");
    const std::vector<double> phases = thue_morse_phases(order, 0.0, std::numbers::pi);
    GateProgram p;
    p.target = {GateTarget::Kind::I, 0.0};
    p.segments.reserve(phases.size());
    for (double phi : phases) {
        DriveSegment s;
        s.phi = phi;
        s.duration = plan.total_T / static_cast<double>(phases.size());
        s.tones = active;
        p.segments.push_back(std::move(s));
    }
    validate_program(p);
    return p;
}

struct ParallelSiteRecord : SiteRecord {
    int tone_index = -1;  // -1 for spectators
};

// Runs the plan's program at every site of the scene.  Assigned sites are
// scored against their intended z rotation, spectators against identity;
// multi-tone drive only exists in the first frame, so that model is
// required.
inline std::vector<ParallelSiteRecord> propagate_parallel(const ArrayScene& scene,
                                                          const ParallelPlan& plan, int order,
                                                          const SceneOptions& opts = {}) {
    validate_scene(scene);
    if (opts.model != Model::FIRST_FRAME)
        throw parameter_error("propagate_parallel: multi-tone drive requires the first-frame model");
    if (opts.amplitude_spread < 0.0 || opts.amplitude_spread >= 1.0)
        throw parameter_error("propagate_parallel: amplitude_spread must be in [0, 1)");
    for (const auto& [label, index] : plan.site_assignments) {
        if (index >= plan.tones.size())
            throw parameter_error("propagate_parallel: tone index out of range for site '" + label +
                                  "'");
        bool present = false;
        for (const auto& s : scene.sites) present = present || s.label == label;
        if (!present)
            throw parameter_error("propagate_parallel: assigned site '" + label +
                                  "' is not in the scene");
    }
    const GateProgram program = parallel_program(plan, order);

    std::vector<ParallelSiteRecord> records(scene.sites.size());
    parallel_for_index(scene.sites.size(), opts.threads, [&](std::size_t idx) {
        const Site& site = scene.sites[idx];
        ParallelSiteRecord rec;
        rec.label = site.label;
        rec.position = site.position;
        rec.omega = rabi_at(scene.beam, site.position);
        rec.omega_over_omega0 = rec.omega / scene.beam.omega0;
        const auto assigned = plan.site_assignments.find(site.label);
        rec.is_target = assigned != plan.site_assignments.end();
        if (rec.is_target) rec.tone_index = static_cast<int>(assigned->second);
        const Unitary2 intended =
            rec.is_target ? su2_exp({0, 0, 1}, plan.angles[assigned->second]) : Unitary2::identity();
        try {
            std::vector<double> scales{1.0};
            if (opts.amplitude_spread > 0.0) {
                scales.push_back(1.0 - opts.amplitude_spread);
                scales.push_back(1.0 + opts.amplitude_spread);
            }
            rec.fidelity_target = 1.0;
            rec.fidelity_identity = 1.0;
            for (double scale : scales) {
                PropagationRequest req;
                req.program = program;
                req.omega = rec.omega * scale;
                req.step_policy = opts.step_policy;
                req.carrier_ratio = opts.carrier_ratio;
                const Unitary2 u = propagate_first_frame(req);
                if (scale == 1.0) {
                    const PauliCoeffs c = pauli_decompose(u);
                    rec.p0 = std::norm(c.c0);
                    rec.px = std::norm(c.cx);
                    rec.py = std::norm(c.cy);
                    rec.pz = std::norm(c.cz);
                }
                rec.fidelity_target = std::min(rec.fidelity_target, gate_fidelity(u, intended));
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
              [](const ParallelSiteRecord& a, const ParallelSiteRecord& b) {
                  return a.label < b.label;
              });
    return records;
}

struct CenterRanking {
    Vec3 center;
    double min_pair_gap = 0.0;  // rad/us; infinity when the scene has one site
    double margin = 0.0;        // min_pair_gap / (4 eps_m)
};

// Ranks candidate beam centers by how distinguishable they make the sites:
// the figure of merit is the smallest pairwise difference of local
// amplitudes, reported relative to the 4 eps_m distinguishability threshold.
inline std::vector<CenterRanking> center_offset_search(const ArrayScene& scene,
                                                       const std::vector<Vec3>& candidates,
                                                       double eps_m) {
    validate_scene(scene);
    if (candidates.empty()) throw parameter_error("center_offset_search: no candidate centers");
    if (!(eps_m > 0.0)) throw parameter_error("center_offset_search: eps_m must be > 0");
    std::vector<CenterRanking> out;
    out.reserve(candidates.size());
    for (const Vec3& center : candidates) {
        BeamProfile beam = scene.beam;
        beam.center = center;
        std::vector<double> omegas;
        omegas.reserve(scene.sites.size());
        for (const auto& s : scene.sites) omegas.push_back(rabi_at(beam, s.position));
        double gap = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < omegas.size(); ++i)
            for (std::size_t j = i + 1; j < omegas.size(); ++j)
                gap = std::min(gap, std::abs(omegas[i] - omegas[j]));
        out.push_back({center, gap, gap / (4.0 * eps_m)});
    }
    std::stable_sort(out.begin(), out.end(), [](const CenterRanking& a, const CenterRanking& b) {
        return a.min_pair_gap > b.min_pair_gap;
    });
    return out;
}

}  // namespace pmgate
