// Tests for program synthesis: Thue-Morse patterns, the Z / X designs,
// quantization checks and JSON round trips.

#include "pmgate/sequence.hpp"

#include <gtest/gtest.h>

using namespace pmgate;

namespace {
constexpr double pi = std::numbers::pi;

std::vector<double> segment_phis(const GateProgram& p) {
    std::vector<double> out;
    for (const auto& s : p.segments)
        if (s.kind == SegmentKind::PM) out.push_back(s.phi);
    return out;
}
}  // namespace

TEST(ThueMorse, PublishedPatterns) {
    EXPECT_EQ(thue_morse_bits(1), (std::vector<int>{0, 1}));
    EXPECT_EQ(thue_morse_bits(2), (std::vector<int>{0, 1, 1, 0}));
    EXPECT_EQ(thue_morse_bits(3), (std::vector<int>{0, 1, 1, 0, 1, 0, 0, 1}));
    EXPECT_EQ(thue_morse_bits(4),
              (std::vector<int>{0, 1, 1, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0}));
}

TEST(ThueMorse, RecursionUpToOrderEight) {
    // pattern(n+1) = pattern(n) ++ complement(pattern(n))
    for (int order = 1; order < 8; ++order) {
        const auto a = thue_morse_bits(order);
        const auto b = thue_morse_bits(order + 1);
        ASSERT_EQ(b.size(), 2 * a.size());
        for (std::size_t j = 0; j < a.size(); ++j) {
            EXPECT_EQ(b[j], a[j]);
            EXPECT_EQ(b[j + a.size()], 1 - a[j]);
        }
    }
}

TEST(ThueMorse, PhaseMapping) {
    const auto z = thue_morse_phases(2);
    EXPECT_EQ(z, (std::vector<double>{0.0, pi, pi, 0.0}));
    const auto x = thue_morse_phases(3, 0.5 * pi, 1.5 * pi);
    EXPECT_EQ(x, (std::vector<double>{0.5 * pi, 1.5 * pi, 1.5 * pi, 0.5 * pi, 1.5 * pi, 0.5 * pi,
                                      0.5 * pi, 1.5 * pi}));
}

TEST(ThueMorse, RejectsBadOrder) {
    EXPECT_THROW(thue_morse_bits(0), parameter_error);
    EXPECT_THROW(thue_morse_bits(21), parameter_error);
}

TEST(BuildZGate, CanonicalParameters) {
    // phi = pi, k = 8: eps_m = omega_m/16, T = 16 pi / omega_m, phases [0, pi].
    const double wm = 1.0;
    const GateProgram p = build_z_gate(pi, wm, 8, 1);
    ASSERT_EQ(p.segments.size(), 2u);
    EXPECT_EQ(segment_phis(p), (std::vector<double>{0.0, pi}));
    const ModulationTone& tone = p.segments[0].tones.at(0);
    EXPECT_NEAR(tone.eps_m, wm / 16.0, 1e-15);
    EXPECT_NEAR(tone.omega_m, wm, 1e-15);
    EXPECT_EQ(tone.phi_m, 0.0);
    EXPECT_NEAR(p.total_duration(), 16.0 * pi / wm, 1e-12);
    EXPECT_EQ(p.target.kind, GateTarget::Kind::Z);
    EXPECT_NEAR(p.target.angle, pi, 1e-15);
    EXPECT_NEAR(p.primary_omega_m(), wm, 1e-15);
}

TEST(BuildZGate, OrderTwoPattern) {
    const GateProgram p = build_z_gate(pi, 2.0, 8, 2);
    EXPECT_EQ(segment_phis(p), (std::vector<double>{0.0, pi, pi, 0.0}));
    // Equal segment durations summing to the total.
    for (const auto& s : p.segments) EXPECT_NEAR(s.duration, p.total_duration() / 4.0, 1e-12);
}

TEST(BuildZGate, ArgumentValidation) {
    EXPECT_THROW(build_z_gate(0.0, 1.0, 8, 1), parameter_error);
    EXPECT_THROW(build_z_gate(pi, -1.0, 8, 1), parameter_error);
    EXPECT_THROW(build_z_gate(pi, 1.0, 0, 1), parameter_error);
    EXPECT_THROW(build_z_gate(pi, 1.0, 8, 0), parameter_error);
    EXPECT_THROW(build_z_gate(pi, 1.0, 8, 17), parameter_error);
}

TEST(BuildXGatePm, PhasesFollowThueMorseOnBothAngles) {
    const GateProgram p = build_x_gate_pm(pi, 1.0, 8, 3);
    const std::vector<double> want{0.5 * pi, 1.5 * pi, 1.5 * pi, 0.5 * pi,
                                   1.5 * pi, 0.5 * pi, 0.5 * pi, 1.5 * pi};
    EXPECT_EQ(segment_phis(p), want);
    for (std::size_t j = 0; j < p.segments.size(); ++j)
        EXPECT_EQ(p.segments[j].tones.at(0).phi_m, want[j]);
    EXPECT_EQ(p.target.kind, GateTarget::Kind::X);
}

TEST(BuildXGateHybrid, BareSandwich) {
    const GateProgram p = build_x_gate_hybrid(pi, 1.0, 8, 1);
    ASSERT_EQ(p.segments.size(), 4u);  // bare + 2 PM + bare
    EXPECT_EQ(p.segments.front().kind, SegmentKind::BARE);
    EXPECT_EQ(p.segments.back().kind, SegmentKind::BARE);
    EXPECT_EQ(p.segments.front().bare_axis, BareAxis::Y);
    EXPECT_NEAR(p.segments.front().bare_angle, -0.5 * pi, 1e-15);
    EXPECT_NEAR(p.segments.back().bare_angle, 0.5 * pi, 1e-15);
    EXPECT_EQ(p.segments.front().duration, 0.0);
    // The inner block is the Z design.
    EXPECT_EQ(p.segments[1].phi, 0.0);
    EXPECT_NEAR(p.segments[2].phi, pi, 1e-15);
    EXPECT_EQ(p.target.kind, GateTarget::Kind::X);
    // Ideal bare pulses contribute no duration.
    EXPECT_NEAR(p.total_duration(), p.pm_duration(), 1e-15);
}

TEST(Quantization, WellFormedDesignPasses) {
    const QuantizationReport rep = validate_quantization(build_z_gate(pi, 3.0, 8, 2));
    EXPECT_TRUE(rep.ok);
    ASSERT_EQ(rep.tones.size(), 1u);
    EXPECT_NEAR(rep.tones[0].cycles, 8.0, 1e-12);
    EXPECT_LT(rep.tones[0].cycle_residual, 1e-12);
    EXPECT_TRUE(rep.angle_checked);
    EXPECT_LT(rep.angle_residual, 1e-12);
    EXPECT_FALSE(rep.tones[0].rwa_advisory);
}

TEST(Quantization, ShortenedProgramFails) {
    // Hand-built program with T = 0.9 phi/eps_m: angle residual 0.1 phi and a
    // non-integer cycle count.
    const double wm = 1.0, phi = pi;
    const double eps = wm * phi / (two_pi * 8.0);
    GateProgram p;
    p.target = {GateTarget::Kind::Z, phi};
    DriveSegment s;
    s.kind = SegmentKind::PM;
    s.phi = 0.0;
    s.duration = 0.9 * phi / eps;
    s.tones = {{eps, wm, 0.0}};
    p.segments = {s};
    const QuantizationReport rep = validate_quantization(p);
    EXPECT_FALSE(rep.ok);
    EXPECT_NEAR(rep.angle_residual, 0.1 * phi, 1e-12);
    EXPECT_GT(rep.max_cycle_residual(), 0.01);
}

TEST(Quantization, RwaAdvisoryOnAggressiveModulation) {
    // k = 1 at phi = pi gives eps_m = omega_m/2 > omega_m/8.
    const QuantizationReport rep = validate_quantization(build_z_gate(pi, 1.0, 1, 1));
    ASSERT_EQ(rep.tones.size(), 1u);
    EXPECT_TRUE(rep.tones[0].rwa_advisory);
    EXPECT_TRUE(rep.ok);  // advisory does not fail the check
}

TEST(SegmentValidation, Rules) {
    DriveSegment s;
    s.kind = SegmentKind::PM;
    s.duration = 1.0;
    EXPECT_THROW(validate_segment(s), parameter_error);  // no tones
    s.tones = {{0.1, 1.0, 0.0}};
    EXPECT_NO_THROW(validate_segment(s));
    s.duration = 0.0;
    EXPECT_THROW(validate_segment(s), parameter_error);  // PM needs positive duration
    DriveSegment b;
    b.kind = SegmentKind::BARE;
    b.duration = 0.0;
    EXPECT_NO_THROW(validate_segment(b));  // ideal instantaneous pulse
    b.duration = -1.0;
    EXPECT_THROW(validate_segment(b), parameter_error);
}

TEST(ProgramJson, RoundTripExact) {
    for (const GateProgram& p :
         {build_z_gate(pi, 2.0, 8, 2), build_x_gate_pm(0.5 * pi, 3.0, 4, 3),
          build_x_gate_hybrid(pi, 1.0, 8, 1)}) {
        const nlohmann::ordered_json j = serialize_program(p);
        const GateProgram back = deserialize_program(nlohmann::json::parse(j.dump()));
        EXPECT_EQ(p, back);
    }
}

TEST(ProgramJson, SchemaVersionRequired) {
    nlohmann::json j = serialize_program(build_z_gate(pi, 1.0, 8, 1));
    j.erase("schema_version");
    EXPECT_THROW(deserialize_program(j), parameter_error);
    j["schema_version"] = 99;
    EXPECT_THROW(deserialize_program(j), parameter_error);
}

TEST(ProgramJson, UnknownKeysRejected) {
    nlohmann::json j = serialize_program(build_z_gate(pi, 1.0, 8, 1));
    j["extra"] = 1;
    EXPECT_THROW(deserialize_program(j), parameter_error);
    nlohmann::json j2 = serialize_program(build_z_gate(pi, 1.0, 8, 1));
    j2["segments"][0]["surprise"] = true;
    EXPECT_THROW(deserialize_program(j2), parameter_error);
}

TEST(ProgramJson, MalformedContentRejected) {
    nlohmann::json j = serialize_program(build_z_gate(pi, 1.0, 8, 1));
    j["segments"][0]["duration"] = -1.0;
    EXPECT_THROW(deserialize_program(j), parameter_error);
    nlohmann::json j2 = serialize_program(build_z_gate(pi, 1.0, 8, 1));
    j2["target"]["kind"] = "W";
    EXPECT_THROW(deserialize_program(j2), parameter_error);
    nlohmann::json j3 = serialize_program(build_x_gate_hybrid(pi, 1.0, 8, 1));
    j3["segments"][0]["axis"] = "q";
    EXPECT_THROW(deserialize_program(j3), parameter_error);
}
