// Tests for the SU(2) / small-matrix core.

#include "pmgate/qcore.hpp"

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

using namespace pmgate;

namespace {

double entry_distance(const Unitary2& u, const Eigen::Matrix2cd& m) {
    double s = 0.0;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) s += std::norm(u(r, c) - m(r, c));
    return std::sqrt(s);
}

}  // namespace

TEST(Su2Exp, ZPiIsMinusISigmaZ) {
    const Unitary2 u = su2_exp({0, 0, 1}, std::numbers::pi);
    EXPECT_NEAR(std::abs(u(0, 0) - cplx(0, -1)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(u(1, 1) - cplx(0, 1)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(u(0, 1)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(u(1, 0)), 0.0, 1e-15);
}

TEST(Su2Exp, XHalfPi) {
    const Unitary2 u = su2_exp({1, 0, 0}, 0.5 * std::numbers::pi);
    const double r = 1.0 / std::sqrt(2.0);
    EXPECT_NEAR(std::abs(u(0, 0) - cplx(r, 0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(u(0, 1) - cplx(0, -r)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(u(1, 0) - cplx(0, -r)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(u(1, 1) - cplx(r, 0)), 0.0, 1e-15);
}

TEST(Su2Exp, MatchesSeriesOracleOnRandomAxes) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> ang(-8.0, 8.0);
    for (int k = 0; k < 200; ++k) {
        const PauliVector n = oracles::random_axis(rng);
        const double theta = ang(rng);
        EXPECT_LT(entry_distance(su2_exp(n, theta), oracles::rotation_series(n, theta)), 1e-12);
    }
}

TEST(Su2Exp, CompositionAlongFixedAxisAddsAngles) {
    std::mt19937_64 rng(3);
    const PauliVector n = oracles::random_axis(rng);
    const Unitary2 u = su2_exp(n, 0.7) * su2_exp(n, 1.9);
    EXPECT_LT(u.distance(su2_exp(n, 2.6)), 1e-13);
}

TEST(Su2Exp, RejectsUnnormalizedAxis) {
    EXPECT_THROW(su2_exp({1, 1, 0}, 1.0), parameter_error);
    EXPECT_THROW(su2_exp({0, 0, 0}, 1.0), parameter_error);
}

TEST(Unitary2, FromEntriesRejectsNonUnitary) {
    EXPECT_THROW(Unitary2::from_entries(1.0, 0.0, 0.0, 1.1), parameter_error);
    EXPECT_THROW(Unitary2::from_entries(1.0, 1.0, 0.0, 1.0), parameter_error);
}

TEST(Unitary2, ProductAndAdjointStayUnitary) {
    std::mt19937_64 rng(11);
    Unitary2 u = Unitary2::identity();
    for (int k = 0; k < 50; ++k) u = u * oracles::random_su2(rng);
    EXPECT_LT(u.unitarity_defect(), 1e-12);
    EXPECT_LT((u * u.adjoint()).distance(Unitary2::identity()), 1e-12);
}

TEST(PauliDecompose, RoundTripOnRandomUnitaries) {
    std::mt19937_64 rng(23);
    for (int k = 0; k < 300; ++k) {
        const Unitary2 u = oracles::random_su2(rng) * oracles::random_su2(rng);
        const Unitary2 back = pauli_reconstruct(pauli_decompose(u));
        EXPECT_LT(u.distance(back), 1e-12);
    }
}

TEST(PauliDecompose, KnownCoefficients) {
    // exp(-i phi sz/2) = cos(phi/2) I - i sin(phi/2) sz.
    const double phi = 1.234;
    const PauliCoeffs c = pauli_decompose(su2_exp({0, 0, 1}, phi));
    EXPECT_NEAR(std::abs(c.c0 - cplx(std::cos(0.5 * phi), 0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(c.cz - cplx(0, -std::sin(0.5 * phi))), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(c.cx), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(c.cy), 0.0, 1e-15);
}

TEST(SpinRotation, AgreesWithMatrixProduct) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ang(-6.0, 6.0);
    SpinRotation q = SpinRotation::identity();
    Unitary2 m = Unitary2::identity();
    for (int k = 0; k < 100; ++k) {
        const PauliVector n = oracles::random_axis(rng);
        const double theta = ang(rng);
        q = SpinRotation::axis_angle(n, theta) * q;
        m = su2_exp(n, theta) * m;
    }
    EXPECT_LT(q.unitary().distance(m), 1e-12);
}

TEST(SpinRotation, GeneratorMatchesAxisAngle) {
    const PauliVector h{0.3, -1.1, 2.0};
    const SpinRotation a = SpinRotation::generator(h, 0.37);
    const SpinRotation b = SpinRotation::axis_angle(h.normalized(), h.norm() * 0.37);
    EXPECT_LT(a.unitary().distance(b.unitary()), 1e-15);
    EXPECT_LT(SpinRotation::generator({0, 0, 0}, 1.0).unitary().distance(Unitary2::identity()), 1e-15);
}

TEST(GateFidelity, GlobalPhaseInvariant) {
    const Unitary2 z = su2_exp({0, 0, 1}, std::numbers::pi);
    // exp(-i pi sz/2) = -i sz: overlap with sz is exactly 1.
    EXPECT_NEAR(gate_fidelity(z, PauliTarget::Z), 1.0, 1e-14);
    EXPECT_NEAR(gate_fidelity(z, PauliTarget::I), 0.0, 1e-14);
    EXPECT_NEAR(gate_fidelity(z, PauliTarget::X), 0.0, 1e-14);
}

TEST(GateFidelity, ArbitraryTargetMatchesPauliOverlap) {
    std::mt19937_64 rng(41);
    for (int k = 0; k < 50; ++k) {
        const Unitary2 u = oracles::random_su2(rng);
        const Unitary2 x = su2_exp({1, 0, 0}, std::numbers::pi);
        EXPECT_NEAR(gate_fidelity(u, x), gate_fidelity(u, PauliTarget::X), 1e-13);
        // Fidelity against itself is 1.
        EXPECT_NEAR(gate_fidelity(u, u), 1.0, 1e-13);
    }
}

TEST(GateFidelity, RotationAngleOverlap) {
    // F(Z(phi) vs sz) = sin^2(phi/2): only a pi rotation is a full Z.
    const double phi = 0.8;
    const Unitary2 u = su2_exp({0, 0, 1}, phi);
    EXPECT_NEAR(gate_fidelity(u, PauliTarget::Z), std::sin(0.5 * phi) * std::sin(0.5 * phi), 1e-14);
    EXPECT_NEAR(gate_fidelity(u, su2_exp({0, 0, 1}, phi)), 1.0, 1e-14);
}

TEST(HermExp4, MatchesSeriesOracle) {
    for (unsigned seed : {1u, 2u, 3u}) {
        const Eigen::Matrix4cd h = oracles::random_hermitian4(seed);
        const double t = 0.7;
        const Eigen::Matrix4cd u = herm_exp_4(h, t);
        const Eigen::Matrix4cd ref = oracles::expm_series(cplx(0, -t) * h);
        EXPECT_LT((u - ref).norm(), 1e-9) << "seed " << seed;
        EXPECT_LT((u * u.adjoint() - Eigen::Matrix4cd::Identity()).norm(), 1e-12);
    }
}

TEST(HermExp4, RejectsNonHermitian) {
    Eigen::Matrix4cd h = Eigen::Matrix4cd::Zero();
    h(0, 1) = cplx(1.0, 0.0);  // missing the conjugate partner
    EXPECT_THROW(herm_exp_4(h, 1.0), parameter_error);
}

TEST(PauliVector, NormalizeAndCross) {
    const PauliVector a{3, 0, 4};
    EXPECT_NEAR(a.norm(), 5.0, 1e-15);
    EXPECT_NEAR(a.normalized().norm(), 1.0, 1e-15);
    const PauliVector c = cross({1, 0, 0}, {0, 1, 0});
    EXPECT_NEAR(c.z, 1.0, 1e-15);
    EXPECT_THROW(PauliVector({0, 0, 0}).normalized(), parameter_error);
}
