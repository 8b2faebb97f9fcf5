#pragma once

// Shared constants, unit helpers and the error taxonomy used across pmgate.
//
// Unit conventions (everywhere in the library):
//   frequencies  angular, rad/us
//   times        us
//   lengths      um
//   angles       rad
// Callers working in ordinary MHz should convert with from_mhz().

#include <numbers>
#include <stdexcept>
#include <string>

namespace pmgate {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

// Ordinary-frequency MHz -> angular rad/us.
inline constexpr double from_mhz(double f_mhz) { return two_pi * f_mhz; }

// Base class for everything pmgate throws on purpose.
struct error : std::runtime_error {
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Bad inputs: argument ranges, schema violations, physical constraints
// (quantization, distinguishability, singular operating points).
struct parameter_error : error {
    explicit parameter_error(const std::string& what) : error(what) {}
};

// Numerical failures: non-converged integration, ambiguous spectral
// extraction.  Distinct from parameter_error so callers (and the CLI exit
// codes) can tell "fix your config" apart from "the computation failed".
struct numeric_error : error {
    explicit numeric_error(const std::string& what) : error(what) {}
};

}  // namespace pmgate
