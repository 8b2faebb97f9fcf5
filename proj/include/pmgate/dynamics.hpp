#pragma once

// Propagation of gate programs in three dynamical models:
//
//   FIRST_FRAME       numeric integration of
//                       H = (W/2) sigma_x'(phi) + (d/2) sz
//                           + sum_i eps_i cos(w_i t + phi_m_i) sz
//                     by piecewise-constant midpoint sampling with exact 2x2
//                     step exponentials and step-doubling convergence.
//
//   SECOND_FRAME_RWA  exact per-segment composition of
//                       H2 = ((W - w_m)/2) sigma_x' + (eps_m/2) sigma_z'
//                     with sigma_z' = cos(phi_m) sz - sin(phi_m) sigma_y'.
//                     Valid for single-tone programs on resonance-quantized
//                     durations; eps_m << w_m for physical accuracy.
//
//   LAB_FRAME         integration of the untransformed Hamiltonian
//                       H = (w0/2) sz + W cos(w t + phi - (2 eps/w_m) sin(...)) sx
//                     with a synthetic carrier w0 = carrier_ratio * W, results
//                     rotated back into the first frame for comparison.
//
// All models return the evolution operator as an exactly unitary 2x2 matrix.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pmgate/common.hpp"
#include "pmgate/qcore.hpp"
#include "pmgate/sequence.hpp"

namespace pmgate {

enum class Model { FIRST_FRAME, SECOND_FRAME_RWA, LAB_FRAME };

struct PropagationRequest {
    GateProgram program;
    double omega = 0.0;     // local Rabi amplitude, rad/us
    double detuning = 0.0;  // d = w_qubit - w_drive, rad/us
    Model model = Model::FIRST_FRAME;
    int step_policy = 64;         // samples per fastest period (>=16 first frame, >=64 lab)
    double carrier_ratio = 50.0;  // w0 / W for the synthetic lab-frame carrier (>=10)
    bool finite_bare = false;     // drive BARE segments with duration > 0 at the local W
    double convergence_tol = 1e-8;  // step-doubling acceptance on Pauli coefficients
    int max_refinements = 12;
};

namespace detail {

struct SegmentTiming {
    const DriveSegment* seg;
    double t0;     // global start time, us
    double epoch;  // start of this segment's contiguous PM run (tone phase origin)
};

inline std::vector<SegmentTiming> segment_timings(const GateProgram& p) {
    std::vector<SegmentTiming> out;
    double t = 0.0;
    double epoch = 0.0;
    bool in_pm_run = false;
    for (const auto& s : p.segments) {
        if (s.kind == SegmentKind::PM) {
            if (!in_pm_run) {
                epoch = t;
                in_pm_run = true;
            }
        } else {
            in_pm_run = false;
        }
        out.push_back({&s, t, epoch});
        t += s.duration;
    }
    return out;
}

inline PauliVector bare_axis_vector(BareAxis a) {
    return a == BareAxis::X ? PauliVector{1, 0, 0} : PauliVector{0, 1, 0};
}

inline SpinRotation ideal_bare_rotation(const DriveSegment& s) {
    return SpinRotation::axis_angle(bare_axis_vector(s.bare_axis), s.bare_angle);
}

// Carrier phase that realizes the segment's bare rotation as a resonant
// drive: x -> 0, y -> pi/2, with a pi shift for negative angles.
inline double bare_drive_phase(const DriveSegment& s) {
    double phase = s.bare_axis == BareAxis::X ? 0.0 : 0.5 * std::numbers::pi;
    if (s.bare_angle < 0.0) phase += std::numbers::pi;
    return phase;
}

inline double fastest_rate(const PropagationRequest& req, bool lab) {
    double r = std::max(std::abs(req.omega), std::abs(req.detuning));
    for (const auto& s : req.program.segments)
        for (const auto& tone : s.tones) r = std::max({r, tone.omega_m, tone.eps_m});
    if (lab) r = std::max(r, req.carrier_ratio * std::abs(req.omega) + std::abs(req.detuning));
    return r;
}

inline double max_coeff_diff(const SpinRotation& a, const SpinRotation& b) {
    return std::max({std::abs(a.w - b.w), std::abs(a.v.x - b.v.x), std::abs(a.v.y - b.v.y),
                     std::abs(a.v.z - b.v.z)});
}

// Single pass of the first-frame integrator at a fixed step policy.
inline SpinRotation first_frame_once(const PropagationRequest& req, int policy) {
    const double rate = fastest_rate(req, false);
    const double dt_target = rate > 0.0 ? (two_pi / rate) / static_cast<double>(policy) : 0.0;
    SpinRotation u = SpinRotation::identity();
    long steps_since_renorm = 0;
    for (const auto& st : segment_timings(req.program)) {
        const DriveSegment& s = *st.seg;
        if (s.kind == SegmentKind::BARE) {
            if (s.duration == 0.0 || !req.finite_bare) {
                u = ideal_bare_rotation(s) * u;
            } else {
                const double phase = bare_drive_phase(s);
                const PauliVector h{req.omega * std::cos(phase), req.omega * std::sin(phase),
                                    req.detuning};
                u = SpinRotation::generator(h, s.duration) * u;
            }
            continue;
        }
        const long n = dt_target > 0.0
                           ? std::max<long>(1, static_cast<long>(std::ceil(s.duration / dt_target)))
                           : 1;
        const double dt = s.duration / static_cast<double>(n);
        const double hx = req.omega * std::cos(s.phi);
        const double hy = req.omega * std::sin(s.phi);
        for (long j = 0; j < n; ++j) {
            const double t_mid = st.t0 + (static_cast<double>(j) + 0.5) * dt;
            double hz = req.detuning;
            for (const auto& tone : s.tones)
                hz += 2.0 * tone.eps_m * std::cos(tone.omega_m * (t_mid - st.epoch) + tone.phi_m);
            u = SpinRotation::generator({hx, hy, hz}, dt) * u;
            if (++steps_since_renorm == 1024) {
                u.renormalize();
                steps_since_renorm = 0;
            }
        }
    }
    u.renormalize();
    return u;
}

// Single pass of the lab-frame integrator; the result is transformed into
// the first rotating frame segment by segment so it can be compared with
// the other models directly.
inline SpinRotation lab_frame_once(const PropagationRequest& req, int policy) {
    const double w0 = req.carrier_ratio * req.omega;
    const double w = w0 - req.detuning;  // drive carrier; d = w0 - w
    const double rate = fastest_rate(req, true);
    const double dt_target = rate > 0.0 ? (two_pi / rate) / static_cast<double>(policy) : 0.0;
    SpinRotation u = SpinRotation::identity();
    long steps_since_renorm = 0;
    for (const auto& st : segment_timings(req.program)) {
        const DriveSegment& s = *st.seg;
        const bool ideal_bare =
            s.kind == SegmentKind::BARE && (s.duration == 0.0 || !req.finite_bare);
        if (ideal_bare) {
            u = ideal_bare_rotation(s) * u;
            continue;
        }
        const double carrier_phi = s.kind == SegmentKind::BARE ? bare_drive_phase(s) : s.phi;
        // Accumulated drive phase relative to the carrier: lambda(t) such
        // that the drive argument is lambda(t) + carrier_phi and the frame
        // transformation is exp(-i lambda(t) sz / 2).
        auto lambda = [&](double t) {
            double l = w * t;
            if (s.kind == SegmentKind::PM)
                for (const auto& tone : s.tones)
                    l -= (2.0 * tone.eps_m / tone.omega_m) *
                         std::sin(tone.omega_m * (t - st.epoch) + tone.phi_m);
            return l;
        };
        const double t1 = st.t0 + s.duration;
        SpinRotation seg = SpinRotation::axis_angle({0, 0, 1}, lambda(st.t0));  // frame at entry
        const long n = dt_target > 0.0
                           ? std::max<long>(1, static_cast<long>(std::ceil(s.duration / dt_target)))
                           : 1;
        const double dt = s.duration / static_cast<double>(n);
        for (long j = 0; j < n; ++j) {
            const double t_mid = st.t0 + (static_cast<double>(j) + 0.5) * dt;
            const double hx = 2.0 * req.omega * std::cos(lambda(t_mid) + carrier_phi);
            seg = SpinRotation::generator({hx, 0.0, w0}, dt) * seg;
            if (++steps_since_renorm == 1024) {
                seg.renormalize();
                steps_since_renorm = 0;
            }
        }
        seg = SpinRotation::axis_angle({0, 0, 1}, lambda(t1)).adjoint() * seg;  // frame at exit
        u = seg * u;
    }
    u.renormalize();
    return u;
}

// Step-doubling driver shared by the numeric models.
template <typename OnePass>
inline SpinRotation refine_to_convergence(const PropagationRequest& req, int base_policy,
                                          OnePass&& once, const char* who) {
    SpinRotation prev = once(req, base_policy);
    int policy = base_policy;
    double diff = 0.0;
    for (int r = 0; r < req.max_refinements; ++r) {
        policy *= 2;
        const SpinRotation next = once(req, policy);
        diff = max_coeff_diff(prev, next);
        if (diff < req.convergence_tol) return next;
        prev = next;
    }
    std::ostringstream os;
    os << who << ": integration did not converge below " << req.convergence_tol
       << " (residual " << diff << " at " << policy << " samples per period)";
    throw numeric_error(os.str());
}

}  // namespace detail

// Numeric first-frame propagation.  Refines the step policy until doubling
// it changes every Pauli coefficient by less than convergence_tol.
inline Unitary2 propagate_first_frame(const PropagationRequest& req) {
    if (req.model != Model::FIRST_FRAME)
        throw parameter_error("propagate_first_frame: request model is not FIRST_FRAME");
    if (req.step_policy < 16)
        throw parameter_error("propagate_first_frame: step_policy must be >= 16");
    validate_program(req.program);
    if (req.omega < 0.0) throw parameter_error("propagate_first_frame: omega must be >= 0");
    return detail::refine_to_convergence(req, req.step_policy, detail::first_frame_once,
                                         "propagate_first_frame")
        .unitary();
}

// Exact second-frame composition.  Single-tone PM segments and ideal BARE
// rotations only; zero detuning (model limitation, not an implementation
// shortcut).  If the program violates the cycle quantization the result is
// still returned but the optional report flags it.
inline Unitary2 propagate_second_frame_rwa(const PropagationRequest& req,
                                           QuantizationReport* report = nullptr) {
    if (req.model != Model::SECOND_FRAME_RWA)
        throw parameter_error("propagate_second_frame_rwa: request model is not SECOND_FRAME_RWA");
    validate_program(req.program);
    if (req.detuning != 0.0)
        throw parameter_error(
            "propagate_second_frame_rwa: nonzero detuning is not representable in the second "
            "frame; use FIRST_FRAME or LAB_FRAME");
    if (req.omega < 0.0) throw parameter_error("propagate_second_frame_rwa: omega must be >= 0");

    const QuantizationReport rep = validate_quantization(req.program);
    if (report) *report = rep;

    SpinRotation u = SpinRotation::identity();
    for (const auto& s : req.program.segments) {
        if (s.kind == SegmentKind::BARE) {
            if (s.duration > 0.0 && req.finite_bare)
                throw parameter_error(
                    "propagate_second_frame_rwa: finite-duration BARE segments are not modeled in "
                    "the second frame; use FIRST_FRAME");
            u = detail::ideal_bare_rotation(s) * u;
            continue;
        }
        if (s.tones.size() != 1)
            throw parameter_error(
                "propagate_second_frame_rwa: multi-tone segments require FIRST_FRAME");
        const ModulationTone& tone = s.tones.front();
        const double cp = std::cos(s.phi), sp = std::sin(s.phi);
        const PauliVector x_prime{cp, sp, 0.0};
        const PauliVector y_prime{-sp, cp, 0.0};
        const double cm = std::cos(tone.phi_m), sm = std::sin(tone.phi_m);
        const PauliVector z_prime{-sm * y_prime.x, -sm * y_prime.y, cm};
        const double delta_m = req.omega - tone.omega_m;
        const PauliVector h{delta_m * x_prime.x + tone.eps_m * z_prime.x,
                            delta_m * x_prime.y + tone.eps_m * z_prime.y,
                            tone.eps_m * z_prime.z};
        u = SpinRotation::generator(h, s.duration) * u;
    }
    u.renormalize();
    return u.unitary();
}

// Numeric lab-frame propagation with a synthetic carrier, mapped back into
// the first rotating frame.
inline Unitary2 propagate_lab_frame(const PropagationRequest& req) {
    if (req.model != Model::LAB_FRAME)
        throw parameter_error("propagate_lab_frame: request model is not LAB_FRAME");
    if (req.step_policy < 64)
        throw parameter_error("propagate_lab_frame: step_policy must be >= 64");
    if (req.carrier_ratio < 10.0)
        throw parameter_error("propagate_lab_frame: carrier_ratio must be >= 10");
    validate_program(req.program);
    if (req.omega < 0.0) throw parameter_error("propagate_lab_frame: omega must be >= 0");
    return detail::refine_to_convergence(req, req.step_policy, detail::lab_frame_once,
                                         "propagate_lab_frame")
        .unitary();
}

inline Unitary2 propagate(const PropagationRequest& req) {
    switch (req.model) {
        case Model::FIRST_FRAME: return propagate_first_frame(req);
        case Model::SECOND_FRAME_RWA: return propagate_second_frame_rwa(req);
        case Model::LAB_FRAME: return propagate_lab_frame(req);
    }
    throw parameter_error("propagate: unknown model");
}

// ---------------------------------------------------------------------------
// Closed-form block composition.
//
// For the Z design every block evolves under a constant second-frame
// Hamiltonian whose axis is ((+-)(W - w_m), 0, eps_m)/eps_R, the sign set by
// the block's refocusing bit; the block angle is theta = eps_R * t_block.
// The product over the pattern is the exact second-frame gate (no time
// discretization).

inline Unitary2 concat_unitary_analytic(double omega, double omega_m, double eps_m,
                                        const std::vector<int>& pattern, double total_t) {
    if (pattern.empty() || (pattern.size() & (pattern.size() - 1)) != 0)
        throw parameter_error("concat_unitary_analytic: pattern length must be a power of two");
    for (int b : pattern)
        if (b != 0 && b != 1)
            throw parameter_error("concat_unitary_analytic: pattern entries must be 0 or 1");
    if (!(omega_m > 0.0)) throw parameter_error("concat_unitary_analytic: omega_m must be > 0");
    if (eps_m < 0.0) throw parameter_error("concat_unitary_analytic: eps_m must be >= 0");
    if (!(total_t > 0.0)) throw parameter_error("concat_unitary_analytic: total_t must be > 0");

    const double delta_m = omega - omega_m;
    const double t_block = total_t / static_cast<double>(pattern.size());
    SpinRotation u = SpinRotation::identity();
    for (int b : pattern) {
        const double sign = b ? -1.0 : 1.0;
        u = SpinRotation::generator({sign * delta_m, 0.0, eps_m}, t_block) * u;
    }
    u.renormalize();
    return u.unitary();
}

// ---------------------------------------------------------------------------
// Gate-component sweeps.

struct SweepRow {
    double omega_over_omega_m = 0.0;
    double detuning = 0.0;
    PauliCoeffs coeffs;
    double p0 = 0.0, px = 0.0, py = 0.0, pz = 0.0;  // |c_k|^2
    double fidelity = 0.0;                          // against the program target
    bool ok = true;
    std::string message;
};

struct SweepOptions {
    Model model = Model::FIRST_FRAME;
    int step_policy = 64;
    double carrier_ratio = 50.0;
    int threads = 1;
};

// Runs fn(i) for i in [0, n) on the requested number of workers.  Results
// must be written to per-index slots; the partition is deterministic.
inline void parallel_for_index(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    const int workers = std::max(1, threads);
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int wk = 0; wk < workers; ++wk) {
        pool.emplace_back([&, wk] {
            for (std::size_t i = static_cast<std::size_t>(wk); i < n;
                 i += static_cast<std::size_t>(workers))
                fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

// Propagates one program family over a grid of Rabi ratios and detunings;
// rows are keyed by grid index so concurrent evaluation is deterministic.
// Failed points are flagged and the sweep continues.
inline std::vector<SweepRow> sweep_gate_components(const GateProgram& program,
                                                   const std::vector<double>& omega_over_omega_m,
                                                   const std::vector<double>& detunings,
                                                   const SweepOptions& opts = {}) {
    validate_program(program);
    const double wm = program.primary_omega_m();
    const Unitary2 target = target_unitary(program.target);
    const std::vector<double> dets = detunings.empty() ? std::vector<double>{0.0} : detunings;
    std::vector<SweepRow> rows(omega_over_omega_m.size() * dets.size());

    parallel_for_index(rows.size(), opts.threads, [&](std::size_t idx) {
        const double ratio = omega_over_omega_m[idx / dets.size()];
        const double det = dets[idx % dets.size()];
        SweepRow row;
        row.omega_over_omega_m = ratio;
        row.detuning = det;
        try {
            PropagationRequest req;
            req.program = program;
            req.omega = ratio * wm;
            req.detuning = det;
            req.model = opts.model;
            req.step_policy = opts.step_policy;
            req.carrier_ratio = opts.carrier_ratio;
            const Unitary2 u = propagate(req);
            row.coeffs = pauli_decompose(u);
            row.p0 = std::norm(row.coeffs.c0);
            row.px = std::norm(row.coeffs.cx);
            row.py = std::norm(row.coeffs.cy);
            row.pz = std::norm(row.coeffs.cz);
            row.fidelity = gate_fidelity(u, target);
        } catch (const error& e) {
            row.ok = false;
            row.message = e.what();
        }
        rows[idx] = std::move(row);
    });
    return rows;
}

}  // namespace pmgate
