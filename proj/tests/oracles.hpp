#pragma once

// Independent reference implementations used only by tests.  These are
// deliberately written with different algorithms than the library (Taylor
// series instead of eigendecomposition / closed forms) so agreement is
// meaningful.

#include <complex>
#include <random>

#include <Eigen/Dense>

#include "pmgate/qcore.hpp"

namespace oracles {

// Matrix exponential by scaling-and-squaring plus a plain Taylor series.
inline Eigen::MatrixXcd expm_series(const Eigen::MatrixXcd& a) {
    const double nrm = a.norm();
    int squarings = 0;
    double scale = 1.0;
    while (nrm * scale > 0.5) {
        scale *= 0.5;
        ++squarings;
    }
    const Eigen::MatrixXcd b = scale * a;
    Eigen::MatrixXcd term = Eigen::MatrixXcd::Identity(a.rows(), a.cols());
    Eigen::MatrixXcd sum = term;
    for (int k = 1; k <= 80; ++k) {
        term = (term * b) / static_cast<double>(k);
        sum += term;
        if (term.norm() < 1e-20) break;
    }
    for (int s = 0; s < squarings; ++s) sum = sum * sum;
    return sum;
}

inline Eigen::Matrix2cd to_eigen(const pmgate::Unitary2& u) {
    Eigen::Matrix2cd m;
    m << u(0, 0), u(0, 1), u(1, 0), u(1, 1);
    return m;
}

inline pmgate::Unitary2 from_eigen(const Eigen::Matrix2cd& m) {
    return pmgate::Unitary2::from_entries(m(0, 0), m(0, 1), m(1, 0), m(1, 1));
}

// exp(-i theta n.sigma / 2) through the series oracle (no closed form).
inline Eigen::Matrix2cd rotation_series(const pmgate::PauliVector& n, double theta) {
    Eigen::Matrix2cd gen;
    const std::complex<double> i(0, 1);
    gen << n.z, n.x - i * n.y, n.x + i * n.y, -n.z;
    return expm_series(-i * 0.5 * theta * gen);
}

inline Eigen::Matrix4cd random_hermitian4(unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Eigen::Matrix4cd m;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m(r, c) = std::complex<double>(dist(rng), dist(rng));
    return 0.5 * (m + m.adjoint().eval());
}

inline pmgate::PauliVector random_axis(std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    pmgate::PauliVector v{g(rng), g(rng), g(rng)};
    while (v.norm() < 1e-3) v = {g(rng), g(rng), g(rng)};
    return v.normalized();
}

inline pmgate::Unitary2 random_su2(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ang(-6.0, 6.0);
    return pmgate::su2_exp(random_axis(rng), ang(rng));
}

}  // namespace oracles
