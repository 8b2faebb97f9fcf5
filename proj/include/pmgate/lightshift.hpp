#pragma once

// Four-level light-shift addressing: a strong off-resonant "addressing"
// beam W_c dresses the intermediate state and retunes the two-photon Rabi
// rate between the qubit states site by site.
//
// Basis order everywhere: |up>, |e>, |s>, |down>.  The rotating-frame
// Hamiltonian is real symmetric:
//
//   H = [ 0      W1/2   0          0    ]
//       [ W1/2  -D      Wc/2       W2/2 ]
//       [ 0      Wc/2  -D-Dc       0    ]
//       [ 0      W2/2   0          d    ]
//
// with D the one-photon detuning, Dc the addressing detuning (an AOD
// frequency shift dc adds to it), d the two-photon detuning.  The closed
// form for the effective qubit Rabi rate is
//
//   W_eff = W1 W2 / (2D - Wc^2 / (2(D + Dc))),
//
// and requesting a modification factor xi relative to the undressed rate
// W1 W2/(2D) fixes Dc = -D + xi Wc^2 / (4D (xi - 1)).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmgate/common.hpp"
#include "pmgate/dynamics.hpp"
#include "pmgate/qcore.hpp"
#include "pmgate/sequence.hpp"

namespace pmgate {

struct FourLevelParams {
    double omega1 = 0.0;       // Raman drive |up> <-> |e|, rad/us
    double omega2 = 0.0;       // Raman drive |down> <-> |e|, rad/us
    double omega_c = 0.0;      // addressing drive |e> <-> |s|, rad/us
    double delta_big = 0.0;    // one-photon detuning, rad/us
    double delta_c = 0.0;      // addressing detuning, rad/us
    double delta_small = 0.0;  // two-photon detuning, rad/us
    double delta_shift = 0.0;  // AOD frequency shift, adds to delta_c
};

inline void validate_four_level(const FourLevelParams& p) {
    if (!(p.omega1 > 0.0) || !(p.omega2 > 0.0))
        throw parameter_error("four-level: omega1 and omega2 must be > 0");
    if (p.omega_c < 0.0) throw parameter_error("four-level: omega_c must be >= 0");
    if (p.delta_big == 0.0) throw parameter_error("four-level: delta_big must be nonzero");
    for (double v : {p.omega1, p.omega2, p.omega_c, p.delta_big, p.delta_c, p.delta_small,
                     p.delta_shift})
        if (!std::isfinite(v)) throw parameter_error("four-level: non-finite parameter");
}

// The adiabatic elimination behind the closed form wants |D| >> W1, W2.
inline bool perturbative_advisory(const FourLevelParams& p) {
    return std::abs(p.delta_big) < 5.0 * std::max(p.omega1, p.omega2);
}

// Effective two-photon Rabi rate between the qubit states.
inline double effective_rabi(const FourLevelParams& p) {
    validate_four_level(p);
    const double dc = p.delta_c + p.delta_shift;
    const double inner = p.delta_big + dc;
    const double scale = std::max({std::abs(p.delta_big), std::abs(dc), p.omega_c});
    if (std::abs(inner) <= 1e-6 * scale) {
        std::ostringstream os;
        os << "effective_rabi: addressing resonance, denominator D + Dc vanishes near delta_c = "
           << -p.delta_big - p.delta_shift << " rad/us";
        throw parameter_error(os.str());
    }
    const double pulled = p.omega_c * p.omega_c / (2.0 * inner);
    const double denom = 2.0 * p.delta_big - pulled;
    if (std::abs(denom) <= 1e-6 * std::max(std::abs(2.0 * p.delta_big), std::abs(pulled))) {
        std::ostringstream os;
        os << "effective_rabi: dressed-state resonance, effective denominator vanishes near "
              "delta_c = "
           << -p.delta_big - p.delta_shift +
                  p.omega_c * p.omega_c / (4.0 * p.delta_big)
           << " rad/us";
        throw parameter_error(os.str());
    }
    return p.omega1 * p.omega2 / denom;
}

// Addressing detuning that retunes the effective rate to xi times the
// undressed value W1 W2/(2D).
inline double solve_detuning_for_factor(double xi, double delta_big, double omega_c) {
    if (delta_big == 0.0)
        throw parameter_error("solve_detuning_for_factor: delta_big must be nonzero");
    if (!(omega_c > 0.0))
        throw parameter_error("solve_detuning_for_factor: omega_c must be > 0 (no dressing)");
    if (std::abs(xi - 1.0) <= 1e-9)
        throw parameter_error(
            "solve_detuning_for_factor: xi = 1 is the undressed rate; no finite detuning changes "
            "nothing");
    return -delta_big + xi * omega_c * omega_c / (4.0 * delta_big * (xi - 1.0));
}

struct DressedBasis {
    double delta_plus = 0.0;   // rad/us
    double delta_minus = 0.0;  // rad/us
    double ratio_plus = 0.0;   // drive amplitude fraction through |+>
    double ratio_minus = 0.0;  // drive amplitude fraction through |->
};

// Diagonalizes the |e>, |s> block.  The two dressed states sit at
// D_pm = D + (Dc +- sqrt(Wc^2 + Dc^2))/2 and carry drive fractions
// r_pm = (Dc -+ sqrt)/norm with r_+^2 + r_-^2 = 1.
inline DressedBasis dressed_basis(const FourLevelParams& p) {
    validate_four_level(p);
    const double dc = p.delta_c + p.delta_shift;
    DressedBasis b;
    if (p.omega_c == 0.0) {
        // decoupled limit: |e> is itself an eigenstate; which branch it is
        // depends on the sign of the (irrelevant) empty |s> level
        b.delta_plus = dc >= 0.0 ? p.delta_big + dc : p.delta_big;
        b.delta_minus = dc >= 0.0 ? p.delta_big : p.delta_big + dc;
        b.ratio_plus = dc >= 0.0 ? 0.0 : 1.0;
        b.ratio_minus = dc >= 0.0 ? 1.0 : 0.0;
        return b;
    }
    const double s = std::hypot(dc, p.omega_c);
    b.delta_plus = p.delta_big + 0.5 * (dc + s);
    b.delta_minus = p.delta_big + 0.5 * (dc - s);
    // cancellation-safe numerators: (dc - s)(dc + s) = -Wc^2
    const double num_plus = dc > 0.0 ? -p.omega_c * p.omega_c / (dc + s) : dc - s;
    const double num_minus = dc < 0.0 ? p.omega_c * p.omega_c / (s - dc) : dc + s;
    b.ratio_plus = num_plus / std::hypot(num_plus, p.omega_c);
    b.ratio_minus = num_minus / std::hypot(num_minus, p.omega_c);
    return b;
}

namespace detail {

// Modification factor the parameters actually realize.
inline double realized_factor(const FourLevelParams& p) {
    return effective_rabi(p) * 2.0 * p.delta_big / (p.omega1 * p.omega2);
}

inline void require_factor_consistency(const FourLevelParams& p, double xi, const char* who) {
    const double realized = realized_factor(p);
    if (std::abs(realized - xi) > 1e-6 * std::max(1.0, std::abs(xi))) {
        std::ostringstream os;
        os << who << ": parameters realize a modification factor " << realized
           << ", not the requested " << xi;
        throw parameter_error(os.str());
    }
}

}  // namespace detail

// d(xi)/d(delta_c): how fast an AOD frequency shift drags the modification
// factor.  Follows from the closed form; the quadratic (1 - xi)^2 means
// factors near 1 are insensitive and strong dressing (large Wc) suppresses
// the slope.
inline double sensitivity_to_shift(const FourLevelParams& p, double xi) {
    detail::require_factor_consistency(p, xi, "sensitivity_to_shift");
    if (xi == 1.0) return 0.0;
    if (!(p.omega_c > 0.0))
        throw parameter_error("sensitivity_to_shift: omega_c must be > 0 for xi != 1");
    const double one_minus = 1.0 - xi;
    return -4.0 * p.delta_big * one_minus * one_minus / (p.omega_c * p.omega_c);
}

namespace detail {

// Dominant oscillation frequency of a uniformly sampled real signal:
// mean-subtracted, Hann-windowed DFT with log-parabolic peak refinement.
// dt is the sample spacing; returns angular frequency.
inline double dominant_frequency(const std::vector<double>& samples, double dt) {
    const std::size_t n = samples.size();
    if (n < 16 || !(dt > 0.0))
        throw parameter_error("dominant_frequency: need >= 16 samples and dt > 0");
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> y(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double w = 0.5 * (1.0 - std::cos(two_pi * static_cast<double>(j) /
                                               static_cast<double>(n - 1)));
        y[j] = (samples[j] - mean) * w;
    }
    const std::size_t half = n / 2;
    std::vector<double> mag(half + 1, 0.0);
    for (std::size_t k = 1; k <= half; ++k) {
        std::complex<double> acc{0.0, 0.0};
        const double step = -two_pi * static_cast<double>(k) / static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j)
            acc += y[j] * std::polar(1.0, step * static_cast<double>(j));
        mag[k] = std::abs(acc);
    }
    std::size_t peak = 1;
    for (std::size_t k = 2; k <= half; ++k)
        if (mag[k] > mag[peak]) peak = k;
    if (mag[peak] < 1e-9 * static_cast<double>(n))
        throw numeric_error("dominant_frequency: no oscillation found in the trace");
    double runner_up = 0.0;  // outside the Hann mainlobe (+-2 bins) of the peak
    for (std::size_t k = 1; k <= half; ++k)
        if (k + 2 < peak || k > peak + 2) runner_up = std::max(runner_up, mag[k]);
    if (runner_up >= 0.5 * mag[peak])
        throw numeric_error("dominant_frequency: spectral peak is ambiguous");
    if (peak == half)
        throw numeric_error("dominant_frequency: peak at the Nyquist edge; sample faster");
    // log-parabola through the peak and its neighbors
    const double a = std::log(std::max(mag[peak - 1], 1e-300));
    const double b = std::log(mag[peak]);
    const double c = std::log(std::max(mag[peak + 1], 1e-300));
    double shift = 0.0;
    const double curvature = a - 2.0 * b + c;
    if (curvature < 0.0) shift = 0.5 * (a - c) / curvature;
    shift = std::clamp(shift, -0.5, 0.5);
    return two_pi * (static_cast<double>(peak) + shift) / (static_cast<double>(n) * dt);
}

}  // namespace detail

struct RabiTrace {
    std::vector<double> t;  // us
    std::vector<double> p_up, p_down, p_e, p_s;
    double analytic_omega = 0.0;   // effective_rabi of the parameters
    double extracted_omega = 0.0;  // spectral estimate from p_down
};

// Evolves the four-level Hamiltonian from |up> and extracts the two-photon
// oscillation frequency from the |down> population.  The Hamiltonian is
// time independent, so one eigendecomposition serves every sample.
inline RabiTrace simulate_rabi_oscillation(const FourLevelParams& p, double duration,
                                           int samples = 1024) {
    RabiTrace trace;
    trace.analytic_omega = effective_rabi(p);  // also validates parameters
    if (samples < 64) throw parameter_error("simulate_rabi_oscillation: need >= 64 samples");
    const double period = two_pi / std::abs(trace.analytic_omega);
    if (!(duration >= 2.0 * period)) {
        std::ostringstream os;
        os << "simulate_rabi_oscillation: duration " << duration
           << " us covers fewer than two expected Rabi periods (" << 2.0 * period << " us)";
        throw parameter_error(os.str());
    }

    Eigen::Matrix4d h;
    const double dc = p.delta_c + p.delta_shift;
    h << 0.0, 0.5 * p.omega1, 0.0, 0.0,                              //
        0.5 * p.omega1, -p.delta_big, 0.5 * p.omega_c, 0.5 * p.omega2,  //
        0.0, 0.5 * p.omega_c, -p.delta_big - dc, 0.0,                //
        0.0, 0.5 * p.omega2, 0.0, p.delta_small;
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(h);
    const Eigen::Vector4d evals = eig.eigenvalues();
    const Eigen::Matrix4d evecs = eig.eigenvectors();
    const Eigen::Vector4d weights = evecs.transpose() * Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);

    const auto n = static_cast<std::size_t>(samples);
    trace.t.resize(n);
    trace.p_up.resize(n);
    trace.p_down.resize(n);
    trace.p_e.resize(n);
    trace.p_s.resize(n);
    const double dt = duration / static_cast<double>(samples);
    for (std::size_t j = 0; j < n; ++j) {
        const double t = static_cast<double>(j) * dt;
        Eigen::Vector4cd phased;
        for (int m = 0; m < 4; ++m)
            phased(m) = std::polar(weights(m), -evals(m) * t);
        const Eigen::Vector4cd psi = evecs * phased;
        trace.t[j] = t;
        trace.p_up[j] = std::norm(psi(0));
        trace.p_e[j] = std::norm(psi(1));
        trace.p_s[j] = std::norm(psi(2));
        trace.p_down[j] = std::norm(psi(3));
    }
    trace.extracted_omega = detail::dominant_frequency(trace.p_down, dt);
    return trace;
}

struct ShiftRange {
    double lo = 0.0;  // rad/us
    double hi = 0.0;  // rad/us
    int points = 51;
};

struct ShiftScanRow {
    double delta_c_shift = 0.0;
    double omega_eff_analytic = 0.0;
    double omega_eff_extracted = 0.0;
    double infidelity = 0.0;
};

struct ShiftScanResult {
    std::vector<ShiftScanRow> rows;
    double worst_infidelity = 0.0;
};

namespace detail {

// Drive amplitude the program was designed for: the primary modulation
// frequency for PM programs, |angle|/duration for driven bare pulses.
inline double nominal_program_omega(const GateProgram& program) {
    for (const auto& s : program.segments)
        if (s.kind == SegmentKind::PM && !s.tones.empty()) return s.tones.front().omega_m;
    double omega = 0.0;
    for (const auto& s : program.segments) {
        if (s.kind != SegmentKind::BARE || s.duration <= 0.0) continue;
        const double candidate = std::abs(s.bare_angle) / s.duration;
        if (omega == 0.0)
            omega = candidate;
        else if (std::abs(candidate - omega) > 1e-9 * omega)
            throw parameter_error(
                "addressing_infidelity_scan: bare segments imply conflicting drive amplitudes");
    }
    if (omega == 0.0)
        throw parameter_error(
            "addressing_infidelity_scan: program has no driven segments to scale");
    return omega;
}

}  // namespace detail

// Worst-case gate error across a band of AOD frequency shifts: each shift
// retunes the effective Rabi rate, the gate program runs at the retuned
// amplitude, and the error against the intended gate is recorded.  Each row
// also carries a time-domain frequency extraction as an independent check
// on the closed form.
inline ShiftScanResult addressing_infidelity_scan(const FourLevelParams& params, double xi,
                                                  const ShiftRange& range,
                                                  const GateProgram& program) {
    if (params.delta_shift != 0.0)
        throw parameter_error("addressing_infidelity_scan: the scan supplies delta_shift");
    detail::require_factor_consistency(params, xi, "addressing_infidelity_scan");
    if (!std::isfinite(range.lo) || !std::isfinite(range.hi) || range.lo > range.hi)
        throw parameter_error("addressing_infidelity_scan: need finite lo <= hi");
    if (range.points < 1 || (range.lo < range.hi && range.points < 2))
        throw parameter_error("addressing_infidelity_scan: too few scan points");
    validate_program(program);

    const double omega_nominal = detail::nominal_program_omega(program);
    const double rabi_nominal = effective_rabi(params);
    const Unitary2 intended = target_unitary(program.target);

    ShiftScanResult result;
    result.rows.resize(static_cast<std::size_t>(range.points));
    for (int i = 0; i < range.points; ++i) {
        ShiftScanRow row;
        row.delta_c_shift =
            range.points == 1
                ? range.lo
                : range.lo + (range.hi - range.lo) * static_cast<double>(i) /
                      static_cast<double>(range.points - 1);
        FourLevelParams shifted = params;
        shifted.delta_shift = row.delta_c_shift;
        row.omega_eff_analytic = effective_rabi(shifted);
        const double sim_duration = 2.5 * two_pi / std::abs(row.omega_eff_analytic);
        row.omega_eff_extracted =
            simulate_rabi_oscillation(shifted, sim_duration, 512).extracted_omega;
        PropagationRequest req;
        req.program = program;
        req.omega = omega_nominal * row.omega_eff_analytic / rabi_nominal;
        req.finite_bare = true;
        row.infidelity = 1.0 - gate_fidelity(propagate_first_frame(req), intended);
        result.worst_infidelity = std::max(result.worst_infidelity, row.infidelity);
        result.rows[static_cast<std::size_t>(i)] = row;
    }
    return result;
}

}  // namespace pmgate
