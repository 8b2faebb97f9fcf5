#pragma once

// Two-level (SU(2)) primitives: unitaries, Pauli decompositions, closed-form
// exponentials, gate fidelities, and a dense Hermitian exponential for small
// multi-level blocks.
//
// Conventions:
//   sigma_z |0> = +|0>, i.e. basis index 0 is the +z eigenstate.
//   Rotations are su2_exp(n, theta) = exp(-i theta n.sigma / 2).
//   Fidelity is the trace overlap |Tr(target^dag U)|^2 / 4, insensitive to
//   global phase.

#include <array>
#include <cmath>
#include <complex>
#include <sstream>

#include <Eigen/Dense>

#include "pmgate/common.hpp"

namespace pmgate {

using cplx = std::complex<double>;

// Frobenius tolerance for accepting a matrix as unitary.
inline constexpr double unitary_tol = 1e-12;

// A real 3-vector of Pauli weights (a rotation axis when normalized).
struct PauliVector {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double norm() const { return std::sqrt(x * x + y * y + z * z); }

    PauliVector normalized() const {
        const double n = norm();
        if (n == 0.0) throw parameter_error("PauliVector: cannot normalize the zero vector");
        return {x / n, y / n, z / n};
    }

    friend PauliVector operator+(const PauliVector& a, const PauliVector& b) {
        return {a.x + b.x, a.y + b.y, a.z + b.z};
    }
    friend PauliVector operator-(const PauliVector& a, const PauliVector& b) {
        return {a.x - b.x, a.y - b.y, a.z - b.z};
    }
    friend PauliVector operator*(double s, const PauliVector& a) {
        return {s * a.x, s * a.y, s * a.z};
    }
};

inline double dot(const PauliVector& a, const PauliVector& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}

inline PauliVector cross(const PauliVector& a, const PauliVector& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

// Coefficients of U = c0 I + cx sx + cy sy + cz sz.
struct PauliCoeffs {
    cplx c0{0.0, 0.0};
    cplx cx{0.0, 0.0};
    cplx cy{0.0, 0.0};
    cplx cz{0.0, 0.0};
};

// A 2x2 unitary, stored row-major.  Construction through from_entries()
// validates unitarity; internal factories produce exactly unitary matrices.
class Unitary2 {
  public:
    Unitary2() : e_{cplx(1, 0), cplx(0, 0), cplx(0, 0), cplx(1, 0)} {}

    static Unitary2 identity() { return Unitary2(); }

    // Validating constructor for externally supplied entries.
    static Unitary2 from_entries(cplx u00, cplx u01, cplx u10, cplx u11) {
        Unitary2 u(u00, u01, u10, u11);
        const double defect = u.unitarity_defect();
        if (defect > unitary_tol) {
            std::ostringstream os;
            os << "Unitary2: matrix is not unitary (defect " << defect << " > " << unitary_tol << ")";
            throw parameter_error(os.str());
        }
        return u;
    }

    // Unchecked factory for matrices that are unitary by construction.
    static Unitary2 from_entries_unchecked(cplx u00, cplx u01, cplx u10, cplx u11) {
        return Unitary2(u00, u01, u10, u11);
    }

    cplx operator()(int r, int c) const { return e_[2 * r + c]; }

    Unitary2 adjoint() const {
        return Unitary2(std::conj(e_[0]), std::conj(e_[2]), std::conj(e_[1]), std::conj(e_[3]));
    }

    friend Unitary2 operator*(const Unitary2& a, const Unitary2& b) {
        return Unitary2(a.e_[0] * b.e_[0] + a.e_[1] * b.e_[2], a.e_[0] * b.e_[1] + a.e_[1] * b.e_[3],
                        a.e_[2] * b.e_[0] + a.e_[3] * b.e_[2], a.e_[2] * b.e_[1] + a.e_[3] * b.e_[3]);
    }

    // Frobenius norm of U^dag U - I.
    double unitarity_defect() const {
        const cplx a = std::conj(e_[0]) * e_[0] + std::conj(e_[2]) * e_[2] - 1.0;
        const cplx b = std::conj(e_[0]) * e_[1] + std::conj(e_[2]) * e_[3];
        const cplx c = std::conj(e_[1]) * e_[0] + std::conj(e_[3]) * e_[2];
        const cplx d = std::conj(e_[1]) * e_[1] + std::conj(e_[3]) * e_[3] - 1.0;
        return std::sqrt(std::norm(a) + std::norm(b) + std::norm(c) + std::norm(d));
    }

    // Frobenius distance to another matrix.
    double distance(const Unitary2& o) const {
        double s = 0.0;
        for (int i = 0; i < 4; ++i) s += std::norm(e_[i] - o.e_[i]);
        return std::sqrt(s);
    }

  private:
    Unitary2(cplx u00, cplx u01, cplx u10, cplx u11) : e_{u00, u01, u10, u11} {}
    std::array<cplx, 4> e_;
};

// Trace projections c_k = Tr(sigma_k U) / 2 (with sigma_0 = I).
inline PauliCoeffs pauli_decompose(const Unitary2& u) {
    PauliCoeffs c;
    c.c0 = 0.5 * (u(0, 0) + u(1, 1));
    c.cx = 0.5 * (u(0, 1) + u(1, 0));
    c.cy = 0.5 * cplx(0, 1) * (u(0, 1) - u(1, 0));
    c.cz = 0.5 * (u(0, 0) - u(1, 1));
    return c;
}

// Inverse of pauli_decompose.
inline Unitary2 pauli_reconstruct(const PauliCoeffs& c) {
    const cplx i(0, 1);
    return Unitary2::from_entries(c.c0 + c.cz, c.cx - i * c.cy, c.cx + i * c.cy, c.c0 - c.cz);
}

// exp(-i theta n.sigma / 2) for a unit axis n.  The axis must be normalized
// to within 1e-9; use PauliVector::normalized() first if unsure.
inline Unitary2 su2_exp(const PauliVector& axis, double angle) {
    const double n = axis.norm();
    if (std::abs(n - 1.0) > 1e-9) {
        std::ostringstream os;
        os << "su2_exp: axis norm " << n << " differs from 1 by more than 1e-9";
        throw parameter_error(os.str());
    }
    const double c = std::cos(0.5 * angle);
    const double s = std::sin(0.5 * angle);
    const cplx i(0, 1);
    return Unitary2::from_entries_unchecked(c - i * s * axis.z, (-i * axis.x - axis.y) * s,
                                            (-i * axis.x + axis.y) * s, c + i * s * axis.z);
}

// SU(2) element in quaternion form U = w I - i v.sigma with w^2 + |v|^2 = 1.
// Used by the propagators: products of many steps stay exactly unitary after
// a cheap renormalization, unlike raw 2x2 matrix products.
struct SpinRotation {
    double w = 1.0;
    PauliVector v{};

    static SpinRotation identity() { return {}; }

    // exp(-i theta n.sigma / 2); n must already be unit length.
    static SpinRotation axis_angle(const PauliVector& n, double theta) {
        return {std::cos(0.5 * theta), std::sin(0.5 * theta) * n};
    }

    // Rotation generated by an unnormalized vector h: exp(-i t h.sigma / 2).
    static SpinRotation generator(const PauliVector& h, double t) {
        const double n = h.norm();
        if (n == 0.0) return identity();
        return axis_angle({h.x / n, h.y / n, h.z / n}, n * t);
    }

    // Matrix product ab (apply b first when acting on kets).
    friend SpinRotation operator*(const SpinRotation& a, const SpinRotation& b) {
        return {a.w * b.w - dot(a.v, b.v), a.w * b.v + b.w * a.v + cross(a.v, b.v)};
    }

    SpinRotation adjoint() const { return {w, {-v.x, -v.y, -v.z}}; }

    void renormalize() {
        const double n = std::sqrt(w * w + v.x * v.x + v.y * v.y + v.z * v.z);
        w /= n;
        v = (1.0 / n) * v;
    }

    PauliCoeffs pauli() const {
        const cplx mi(0, -1);
        return {cplx(w, 0), mi * v.x, mi * v.y, mi * v.z};
    }

    Unitary2 unitary() const {
        const cplx i(0, 1);
        return Unitary2::from_entries_unchecked(w - i * v.z, (-i * v.x - v.y), (-i * v.x + v.y), w + i * v.z);
    }
};

enum class PauliTarget { I, X, Y, Z };

// |Tr(target^dag U)|^2 / 4 against an arbitrary unitary target.
inline double gate_fidelity(const Unitary2& u, const Unitary2& target) {
    const Unitary2 p = target.adjoint() * u;
    return 0.25 * std::norm(p(0, 0) + p(1, 1));
}

// Same overlap against I or a bare Pauli; equals |c_0|^2 resp. |c_P|^2.
inline double gate_fidelity(const Unitary2& u, PauliTarget target) {
    const PauliCoeffs c = pauli_decompose(u);
    switch (target) {
        case PauliTarget::I: return std::norm(c.c0);
        case PauliTarget::X: return std::norm(c.cx);
        case PauliTarget::Y: return std::norm(c.cy);
        case PauliTarget::Z: return std::norm(c.cz);
    }
    throw parameter_error("gate_fidelity: unknown Pauli target");
}

// exp(-i H t) for a Hermitian 4x4 block via eigendecomposition.  H must be
// Hermitian to within 1e-10 (Frobenius norm of H - H^dag).
inline Eigen::Matrix4cd herm_exp_4(const Eigen::Matrix4cd& h, double t) {
    const double herm_defect = (h - h.adjoint()).norm();
    if (herm_defect > 1e-10) {
        std::ostringstream os;
        os << "herm_exp_4: matrix is not Hermitian (defect " << herm_defect << " > 1e-10)";
        throw parameter_error(os.str());
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(0.5 * (h + h.adjoint()));
    if (es.info() != Eigen::Success) throw numeric_error("herm_exp_4: eigendecomposition failed");
    Eigen::Vector4cd phases;
    for (int k = 0; k < 4; ++k) phases(k) = std::exp(cplx(0.0, -es.eigenvalues()(k) * t));
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace pmgate
