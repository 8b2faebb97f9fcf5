#include "pmgate/array.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace pmgate {
namespace {

constexpr double kOmega0 = 4.0 * std::numbers::pi;  // 2pi * 2 rad/us peak
constexpr double kR0 = 7.0;                         // um

BeamProfile beam_at_origin() { return {kOmega0, kR0, {}}; }

ArrayScene single_site_scene() {
    return explicit_sites(beam_at_origin(), {{"t", {}}}, "t");
}

GateProgram hybrid_x(int order) {
    // eps_m = omega_m / 16 for phi = pi at k = 8
    return build_x_gate_hybrid(std::numbers::pi, kOmega0, 8, order);
}

TEST(BeamProfileTest, GaussianReferencePoints) {
    const BeamProfile beam = beam_at_origin();
    EXPECT_DOUBLE_EQ(rabi_at(beam, {0, 0, 0}), kOmega0);
    const double half = kR0 * std::sqrt(std::numbers::ln2);
    EXPECT_NEAR(rabi_at(beam, {half, 0, 0}), 0.5 * kOmega0, 1e-12 * kOmega0);
    const double quarter = kR0 * std::sqrt(2.0 * std::numbers::ln2);
    EXPECT_NEAR(rabi_at(beam, {0, quarter, 0}), 0.25 * kOmega0, 1e-12 * kOmega0);
    // distance is the full 3D separation
    EXPECT_NEAR(rabi_at(beam, {0, 0, half}), 0.5 * kOmega0, 1e-12 * kOmega0);
}

TEST(BeamProfileTest, RotationInvariantAndRadiallyMonotone) {
    BeamProfile beam = beam_at_origin();
    beam.center = {3.0, -1.5, 0.5};
    const double r = 4.2;
    const double reference = rabi_at(beam, {beam.center.x + r, beam.center.y, beam.center.z});
    for (int i = 0; i < 8; ++i) {
        const double angle = 2.0 * std::numbers::pi * i / 8.0;
        const Vec3 p{beam.center.x + r * std::cos(angle), beam.center.y + r * std::sin(angle),
                     beam.center.z};
        EXPECT_NEAR(rabi_at(beam, p), reference, 1e-12 * reference);
    }
    double previous = rabi_at(beam, beam.center);
    for (double radius : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
        const double w = rabi_at(beam, {beam.center.x, beam.center.y + radius, beam.center.z});
        EXPECT_LT(w, previous);
        previous = w;
    }
}

TEST(BeamProfileTest, ValidatesParameters) {
    EXPECT_THROW(rabi_at({0.0, kR0, {}}, {}), parameter_error);
    EXPECT_THROW(rabi_at({kOmega0, -1.0, {}}, {}), parameter_error);
}

TEST(OptimalSpacingTest, HalvesAmplitudeAtNearestNeighbor) {
    EXPECT_NEAR(optimal_spacing(7.0), 5.827882278103884, 1e-12);
    EXPECT_NEAR(optimal_spacing(1.0), 0.8325546111576977, 1e-13);
    const BeamProfile beam = beam_at_origin();
    const double a = optimal_spacing(kR0);
    EXPECT_NEAR(rabi_at(beam, {a, 0, 0}), 0.5 * kOmega0, 1e-12 * kOmega0);
    EXPECT_THROW(optimal_spacing(0.0), parameter_error);
}

TEST(SceneTest, SquareLatticeAmplitudesArePowersOfTwo) {
    BeamProfile beam = beam_at_origin();
    beam.center = {2.0, -3.0, 1.0};
    const ArrayScene scene = square_lattice(beam, optimal_spacing(kR0), 5);
    ASSERT_EQ(scene.sites.size(), 25u);
    for (const auto& site : scene.sites) {
        int i = 0, j = 0;
        ASSERT_EQ(std::sscanf(site.label.c_str(), "%d,%d", &i, &j), 2);
        const double expected = kOmega0 * std::pow(2.0, -static_cast<double>(i * i + j * j));
        EXPECT_NEAR(rabi_at(beam, site.position), expected, 1e-12 * expected) << site.label;
    }
    EXPECT_EQ(scene.target().label, "0,0");
}

TEST(SceneTest, ValidatesGeometry) {
    const BeamProfile beam = beam_at_origin();
    EXPECT_THROW(square_lattice(beam, 0.0, 3), parameter_error);
    EXPECT_THROW(square_lattice(beam, 1.0, 0), parameter_error);
    EXPECT_THROW(square_lattice(beam, 1.0, 3, "9,9"), parameter_error);
    EXPECT_THROW(explicit_sites(beam, {{"a", {}}, {"a", {1, 0, 0}}}, "a"), parameter_error);
    EXPECT_THROW(explicit_sites(beam, {{"a", {}}}, "b"), parameter_error);
    const double nan = std::nan("");
    EXPECT_THROW(explicit_sites(beam, {{"a", {nan, 0, 0}}}, "a"), parameter_error);
}

TEST(CrosstalkMapTest, RequiresProgramResonantWithTargetSite) {
    const ArrayScene scene = single_site_scene();
    const GateProgram detuned = build_x_gate_hybrid(std::numbers::pi, 0.9 * kOmega0, 8, 1);
    EXPECT_THROW(crosstalk_map(scene, detuned, {}), parameter_error);
    SceneOptions opts;
    opts.amplitude_spread = 1.0;
    EXPECT_THROW(crosstalk_map(scene, hybrid_x(1), opts), parameter_error);
}

TEST(CrosstalkMapTest, LatticeSuppressionAtExactResonance) {
    const ArrayScene scene = square_lattice(beam_at_origin(), optimal_spacing(kR0), 3);
    SceneOptions opts;
    opts.threads = 4;
    const auto records = crosstalk_map(scene, hybrid_x(1), opts);
    ASSERT_EQ(records.size(), 9u);
    // sorted by label; "0,0" lands in the middle
    EXPECT_EQ(records[4].label, "0,0");
    EXPECT_TRUE(records[4].is_target);
    EXPECT_GE(records[4].fidelity_target, 0.999);
    EXPECT_GT(records[4].px, 0.999);  // X(pi) weight concentrated on sigma_x
    double nn_crosstalk = 0.0, corner_crosstalk = 0.0;
    for (const auto& rec : records) {
        if (rec.is_target) continue;
        ASSERT_TRUE(rec.ok) << rec.message;
        EXPECT_LT(rec.crosstalk, 1e-3) << rec.label;
        EXPECT_GT(rec.p0, 0.999) << rec.label;  // spectators stay near identity
        if (rec.omega_over_omega0 > 0.4)
            nn_crosstalk = std::max(nn_crosstalk, rec.crosstalk);
        else
            corner_crosstalk = std::max(corner_crosstalk, rec.crosstalk);
    }
    EXPECT_GT(nn_crosstalk, corner_crosstalk);  // closer neighbors see more drive
}

TEST(CrosstalkMapTest, AmplitudeSpreadWorsensSpectatorsOnly) {
    const ArrayScene scene = square_lattice(beam_at_origin(), optimal_spacing(kR0), 3);
    SceneOptions plain, spread;
    plain.threads = spread.threads = 4;
    spread.amplitude_spread = 0.02;
    const auto base = crosstalk_map(scene, hybrid_x(1), plain);
    const auto wide = crosstalk_map(scene, hybrid_x(1), spread);
    for (std::size_t i = 0; i < base.size(); ++i) {
        ASSERT_EQ(base[i].label, wide[i].label);
        EXPECT_GE(base[i].fidelity_identity, wide[i].fidelity_identity);
        if (!wide[i].is_target) {
            EXPECT_LT(wide[i].crosstalk, 1e-2) << wide[i].label;
        }
    }
    // converged nearest-neighbor value with a 2% amplitude spread
    const auto nn = std::find_if(wide.begin(), wide.end(),
                                 [](const SiteRecord& r) { return r.label == "1,0"; });
    ASSERT_NE(nn, wide.end());
    EXPECT_NEAR(nn->crosstalk, 6.30e-4, 5e-5);
}

TEST(CrosstalkMapTest, ThreadCountDoesNotChangeResults) {
    const ArrayScene scene = square_lattice(beam_at_origin(), optimal_spacing(kR0), 3);
    SceneOptions one, four;
    one.threads = 1;
    four.threads = 4;
    const auto a = crosstalk_map(scene, hybrid_x(1), one);
    const auto b = crosstalk_map(scene, hybrid_x(1), four);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].label, b[i].label);
        EXPECT_EQ(a[i].fidelity_target, b[i].fidelity_target);
        EXPECT_EQ(a[i].fidelity_identity, b[i].fidelity_identity);
        EXPECT_EQ(a[i].crosstalk, b[i].crosstalk);
    }
}

TEST(CrosstalkMapTest, FarSiteSeesNoDriveAndStaysIdle) {
    const ArrayScene scene =
        explicit_sites(beam_at_origin(), {{"far", {1000.0, 0, 0}}, {"t", {}}}, "t");
    const auto records = crosstalk_map(scene, hybrid_x(1), {});
    ASSERT_EQ(records.size(), 2u);
    EXPECT_EQ(records[0].label, "far");
    EXPECT_EQ(records[0].omega, 0.0);
    EXPECT_EQ(records[0].fidelity_identity, 1.0);
    EXPECT_EQ(records[0].crosstalk, 0.0);
}

TEST(CloudBoundTest, DegenerateCloudMatchesResonantInfidelity) {
    const ArrayScene scene = single_site_scene();
    const GateProgram program = hybrid_x(2);
    const CloudBound bound = cloud_fidelity_bound(scene, program, {}, {});
    PropagationRequest req;
    req.program = program;
    req.omega = kOmega0;
    const double direct = 1.0 - gate_fidelity(propagate(req), target_unitary(program.target));
    EXPECT_DOUBLE_EQ(bound.max_infidelity_target, direct);
    EXPECT_TRUE(bound.max_crosstalk_per_site.empty());
}

TEST(CloudBoundTest, DesignOrderLadderForMicronCloud) {
    // 1 um cloud on a 7 um waist: amplitude swing 1 - exp(-1/49) ~ 2%
    const ArrayScene scene = single_site_scene();
    CloudModel cloud;
    cloud.radius = 1.0;
    const double order1 = cloud_fidelity_bound(scene, hybrid_x(1), cloud, {}).max_infidelity_target;
    const double order2 = cloud_fidelity_bound(scene, hybrid_x(2), cloud, {}).max_infidelity_target;
    const double order4 = cloud_fidelity_bound(scene, hybrid_x(4), cloud, {}).max_infidelity_target;
    EXPECT_NEAR(order1, 0.1096, 1e-3);
    EXPECT_LE(order2, 0.02);
    EXPECT_GT(order2, 0.015);
    EXPECT_LE(order4, 1e-3);
    EXPECT_GT(order4, 1e-4);
    EXPECT_GT(order1, order2);
    EXPECT_GT(order2, order4);
}

TEST(CloudBoundTest, ThermalTravelOfSingleAtom) {
    // 0.2 um of travel during the gate, no static spread
    const ArrayScene scene = single_site_scene();
    CloudModel cloud;
    cloud.thermal_displacement = 0.2;
    const double order1 = cloud_fidelity_bound(scene, hybrid_x(1), cloud, {}).max_infidelity_target;
    const double order2 = cloud_fidelity_bound(scene, hybrid_x(2), cloud, {}).max_infidelity_target;
    EXPECT_LE(order1, 0.004);
    EXPECT_GT(order1, 5e-4);
    EXPECT_LE(order2, 0.001);
    EXPECT_GT(order2, 5e-5);
}

TEST(CloudBoundTest, MonotoneNonDecreasingInRadius) {
    const ArrayScene scene = single_site_scene();
    SceneOptions fast;
    fast.model = Model::SECOND_FRAME_RWA;
    double previous = -1.0;
    for (double radius : {0.0, 0.3, 0.6, 1.0, 1.5}) {
        CloudModel cloud;
        cloud.radius = radius;
        const double bound =
            cloud_fidelity_bound(scene, hybrid_x(1), cloud, fast).max_infidelity_target;
        EXPECT_GE(bound, previous) << "radius " << radius;
        previous = bound;
    }
}

TEST(CloudBoundTest, GridSamplingMatchesWorstCaseForCenteredTarget) {
    const ArrayScene scene = single_site_scene();
    SceneOptions fast;
    fast.model = Model::SECOND_FRAME_RWA;
    CloudModel worst, grid;
    worst.radius = grid.radius = 1.0;
    grid.sampling = CloudModel::Sampling::GRID;
    grid.grid_n = 9;  // odd grid hits -d, 0, +d exactly
    const double a = cloud_fidelity_bound(scene, hybrid_x(1), worst, fast).max_infidelity_target;
    const double b = cloud_fidelity_bound(scene, hybrid_x(1), grid, fast).max_infidelity_target;
    EXPECT_DOUBLE_EQ(a, b);
    grid.grid_n = 1;
    EXPECT_THROW(cloud_fidelity_bound(scene, hybrid_x(1), grid, fast), parameter_error);
}

TEST(CloudBoundTest, ReportsSpectatorCrosstalkPerSite) {
    const ArrayScene scene = square_lattice(beam_at_origin(), optimal_spacing(kR0), 3);
    SceneOptions fast;
    fast.model = Model::SECOND_FRAME_RWA;
    CloudModel cloud;
    cloud.radius = 0.3;
    const CloudBound bound = cloud_fidelity_bound(scene, hybrid_x(1), cloud, fast);
    EXPECT_EQ(bound.max_crosstalk_per_site.size(), 8u);
    EXPECT_EQ(bound.max_crosstalk_per_site.count("0,0"), 0u);
    for (const auto& [label, crosstalk] : bound.max_crosstalk_per_site) {
        EXPECT_GE(crosstalk, 0.0) << label;
        EXPECT_LE(crosstalk, 1.0) << label;
    }
}

TEST(CloudBoundTest, ValidatesCloudParameters) {
    const ArrayScene scene = single_site_scene();
    CloudModel negative;
    negative.radius = -0.1;
    EXPECT_THROW(cloud_fidelity_bound(scene, hybrid_x(1), negative, {}), parameter_error);
    negative.radius = 0.0;
    negative.thermal_displacement = -0.1;
    EXPECT_THROW(cloud_fidelity_bound(scene, hybrid_x(1), negative, {}), parameter_error);
}

}  // namespace
}  // namespace pmgate
