#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cavecheck/diagnostics.hpp"
#include "support/canonical.hpp"

using namespace cavecheck;
using namespace cavecheck::diagnostics;
namespace canon = cavecheck::testing;

namespace {

const RigConfig& cave() {
  static const RigConfig rig = RigConfig::default_cave();
  return rig;
}

FaultSet latency(double s) {
  FaultSet f;
  f.latency_s = s;
  return f;
}

FaultSet offset(const Vec3& v) {
  FaultSet f;
  f.tracker_offset = v;
  return f;
}

void expect_status_consistent(const Finding& f) {
  if (f.status != Status::Inconclusive)
    EXPECT_LT(f.uncertainty, f.threshold) << f.test_name << " " << f.subject;
}

}  // namespace

TEST(Helpers, PrimaryScreenAndAdjacency) {
  EXPECT_EQ(primary_screen(cave()), std::optional<std::size_t>(0));
  const auto pairs = adjacent_pairs(cave());
  EXPECT_EQ(pairs.size(), 5u);  // front-left, front-right, front-floor, left-floor, right-floor
  EXPECT_FALSE(shared_edge(cave(), 1, 2));
  const auto e = shared_edge(cave(), 0, 1);
  ASSERT_TRUE(e);
  EXPECT_NEAR(std::abs((e->first - e->second).y()), 3.0, 1e-12);
}

TEST(Suite, NoFaultsAllPass) {
  const auto report = run_suite(cave(), FaultSet{});
  EXPECT_FALSE(report.findings.empty());
  for (const auto& f : report.findings) {
    EXPECT_EQ(f.status, Status::Pass) << f.test_name << " " << f.subject;
    expect_status_consistent(f);
  }
}

TEST(Suite, FollowsTestOrder) {
  const auto report = run_suite(cave(), FaultSet{});
  const std::vector<std::string> order{"test_parallax_orientation", "test_shrink", "test_horizon",
                                       "test_line_bend", "test_stereo_phase", "locate_projection_plane",
                                       "estimate_latency_phase", "test_wand_attachment", "test_edge_match",
                                       "test_fixed_marker", "estimate_jitter"};
  std::size_t pos = 0;
  for (const auto& f : report.findings) {
    while (pos < order.size() && order[pos] != f.test_name) ++pos;
    ASSERT_LT(pos, order.size()) << f.test_name << " out of order";
  }
}

TEST(Suite, Deterministic) {
  FaultSet f;
  f.jitter_sigma = 0.002;
  f.latency_s = 0.05;
  const auto a = run_suite(cave(), f);
  const auto b = run_suite(cave(), f);
  ASSERT_EQ(a.findings.size(), b.findings.size());
  for (std::size_t k = 0; k < a.findings.size(); ++k) {
    EXPECT_EQ(a.findings[k].status, b.findings[k].status);
    ASSERT_EQ(a.findings[k].estimates.size(), b.findings[k].estimates.size());
    for (std::size_t e = 0; e < a.findings[k].estimates.size(); ++e)
      EXPECT_EQ(a.findings[k].estimates[e].value, b.findings[k].estimates[e].value);
  }
  EXPECT_EQ(a.rig_digest, b.rig_digest);
  EXPECT_EQ(a.faults_digest, b.faults_digest);
}

class IsolationMatrix : public ::testing::TestWithParam<canon::Expectation> {};

TEST_P(IsolationMatrix, DesignatedTestFailsOthersExplained) {
  const canon::Expectation& want = GetParam();
  FaultSet faults;
  for (const auto& c : canon::canonical_faults())
    if (c.name == want.fault) faults = c.faults;
  const auto report = run_suite(cave(), faults);
  bool found = false;
  for (const auto& f : report.findings) {
    expect_status_consistent(f);
    if (f.test_name == want.test && f.subject == want.subject) {
      found = true;
      EXPECT_EQ(f.status, Status::Fail);
      EXPECT_NEAR(f.scalar(want.estimate), want.expected, want.tolerance);
      continue;
    }
    if (f.status == Status::Fail)
      EXPECT_TRUE(want.also_failing.contains(canon::finding_key(f.test_name, f.subject)))
          << "unexpected failure " << f.test_name << "@" << f.subject;
  }
  EXPECT_TRUE(found);
}

INSTANTIATE_TEST_SUITE_P(CanonicalFaults, IsolationMatrix, ::testing::ValuesIn(canon::isolation_matrix()),
                         [](const auto& info) { return info.param.fault; });

TEST(ParallaxOrientation, NoFaults) {
  const Finding f = test_parallax_orientation(cave(), FaultSet{});
  EXPECT_EQ(f.status, Status::Pass);
  EXPECT_NEAR(f.scalar("min_direction_cosine"), 1.0, 1e-9);
  EXPECT_LT(f.scalar("parallax_ratio_error"), 1e-9);
}

TEST(ParallaxOrientation, YawedTrackerAngle) {
  for (double deg : {-5.0, 10.0, 20.0}) {
    FaultSet f;
    f.distortion = canon::yaw_grid(deg);
    const Finding r = test_parallax_orientation(cave(), f);
    EXPECT_EQ(r.status, Status::Fail);
    EXPECT_NEAR(r.scalar("rotation_angle"), std::abs(deg), 0.5) << deg;
  }
}

TEST(Shrink, NoFaultsMatchesClosedForm) {
  const Finding f = test_shrink(cave(), FaultSet{});
  EXPECT_EQ(f.status, Status::Pass);
  EXPECT_LT(f.scalar("max_relative_error"), 1e-9);
}

TEST(Shrink, InvertedDepthAxisFails) {
  FaultSet f;
  // Reported z = -z: offset field -2z along z.
  f.distortion = calib::DistortionGrid::sample(Vec3(-3, -1, -3), Vec3(3, 4, 3), {2, 2, 2},
                                               [](const Vec3& p) { return Vec3(0, 0, -2 * p.z()); });
  const Finding r = test_shrink(cave(), f);
  EXPECT_NE(r.status, Status::Pass);
  if (r.status == Status::Fail) EXPECT_GT(r.scalar("monotonicity_violations"), 0.0);
}

TEST(Shrink, OnPlaneObjectConstant) {
  DiagnosticOptions o;
  o.shrink_depth_m = 0.0;
  const Finding f = test_shrink(cave(), FaultSet{}, o);
  EXPECT_EQ(f.status, Status::Pass);
  EXPECT_FALSE(f.notes.empty());
}

TEST(StereoPhase, ControlProbeFlat) {
  for (const auto& f : test_stereo_phase(cave(), FaultSet{})) {
    EXPECT_EQ(f.status, Status::Pass) << f.subject;
    EXPECT_LT(std::abs(f.scalar("disparity_control")), 1e-9);
    EXPECT_LT(f.scalar("disparity_behind"), 0.0);
    EXPECT_GT(f.scalar("disparity_front"), 0.0);
  }
}

TEST(StereoPhase, OneSwappedScreen) {
  FaultSet f;
  f.screens["left"].eye_swap = true;
  const auto findings = test_stereo_phase(cave(), f);
  ASSERT_EQ(findings.size(), 4u);
  for (const auto& r : findings) EXPECT_EQ(r.status, r.subject == "left" ? Status::Fail : Status::Pass) << r.subject;
}

TEST(LocatePlane, NoFaults) {
  for (std::size_t s = 0; s < cave().screens.size(); ++s) {
    const Finding f = locate_projection_plane(cave(), FaultSet{}, s);
    EXPECT_EQ(f.status, Status::Pass);
    EXPECT_LE(std::abs(f.scalar("plane_offset")), 0.001);
  }
}

TEST(LocatePlane, PlaneShift) {
  FaultSet f;
  f.screens["front"].plane_shift = 0.10;
  const Finding r = locate_projection_plane(cave(), f, 0);
  EXPECT_EQ(r.status, Status::Fail);
  EXPECT_NEAR(r.scalar("plane_offset"), 0.10, 0.001);
  EXPECT_NEAR(r.scalar("flat_offset"), 0.10, 0.001);
}

TEST(LocatePlane, TrackerOffsetAlongNormalIsAmbiguous) {
  // The reported eye reaches the plane 0.05 m early; the magnitude is
  // recovered and the zero-disparity check attributes it to tracking.
  const Finding r = locate_projection_plane(cave(), offset(Vec3(0, 0, -0.05)), 0);
  EXPECT_EQ(r.status, Status::Fail);
  EXPECT_NEAR(std::abs(r.scalar("plane_offset")), 0.05, 0.001);
  EXPECT_NEAR(r.scalar("flat_offset"), 0.0, 0.001);
  EXPECT_FALSE(r.notes.empty());
}

TEST(LineBend, NoFaults) {
  const Finding f = test_line_bend(cave(), FaultSet{}, {0, 1});
  EXPECT_EQ(f.status, Status::Pass);
  EXPECT_LT(f.scalar("bend_angle"), 1e-7);
}

TEST(LineBend, RecoversOffset) {
  const Finding f = test_line_bend(cave(), offset(Vec3(0.1, 0, 0)), {0, 1});
  EXPECT_EQ(f.status, Status::Fail);
  EXPECT_GT(f.scalar("bend_angle"), 0.1);
  EXPECT_LT((f.vector3("viewing_offset") - Vec3(0.1, 0, 0)).norm(), 1e-3);
}

TEST(LineBend, OffsetAlongEdgeUnobservableForOneSegment) {
  // Shared front/left edge runs along y.
  const Finding f = test_line_bend(cave(), offset(Vec3(0, 0.1, 0)), {0, 1});
  EXPECT_LT((f.vector3("viewing_offset") - Vec3(0, 0.1, 0)).norm(), 1e-3);
  ASSERT_NE(f.find("single_segment_unobservable_a"), nullptr);
  EXPECT_FALSE(f.notes.empty());
}

TEST(LineBend, NonAdjacentInconclusive) {
  EXPECT_EQ(test_line_bend(cave(), FaultSet{}, {1, 2}).status, Status::Inconclusive);
}

TEST(Horizon, NoFaultsLevel) {
  const Finding f = test_horizon(cave(), FaultSet{});
  EXPECT_EQ(f.status, Status::Pass);
  EXPECT_NEAR(f.scalar("vertical_offset"), 0.0, 1e-9);
  EXPECT_NEAR(f.scalar("vertical_scale"), 1.0, 1e-9);
  EXPECT_NEAR(f.scalar("inter_eye_dv"), 0.0, 1e-12);
}

TEST(Horizon, VerticalOffset) {
  const Finding f = test_horizon(cave(), offset(Vec3(0, 0.2, 0)));
  EXPECT_EQ(f.status, Status::Fail);
  EXPECT_NEAR(f.scalar("vertical_offset"), 0.2, 1e-3);
}

TEST(Latency, PhaseAndCrossCorrelationAgree) {
  const double frame = 1.0 / 60.0;
  for (double L : {0.025, 0.050, 0.100, 0.200}) {
    const Finding f = estimate_latency_phase(cave(), latency(L));
    EXPECT_EQ(f.status, Status::Fail) << L;
    EXPECT_NEAR(f.scalar("latency"), L, 0.05 * L) << L;
    EXPECT_NEAR(f.scalar("xcorr_latency"), f.scalar("latency"), frame) << L;
    EXPECT_NEAR(f.scalar("opposition_frequency"), 1.0 / (2 * L), 1.0 / (2 * L) * 0.05) << L;
  }
}

TEST(Latency, TableValues) {
  EXPECT_NEAR(estimate_latency_phase(cave(), latency(0.100)).scalar("latency"), 0.100, 0.005);
  EXPECT_NEAR(estimate_latency_phase(cave(), latency(0.050)).scalar("latency"), 0.050, 0.003);
}

TEST(Latency, ZeroLatencyNoOpposition) {
  const Finding f = estimate_latency_phase(cave(), FaultSet{});
  EXPECT_EQ(f.status, Status::Pass);
  EXPECT_NEAR(f.scalar("xcorr_latency"), 0.0, 1.0 / 60.0);
  EXPECT_TRUE(std::isnan(f.scalar("opposition_frequency")) || f.find("opposition_frequency") == nullptr);
}

TEST(Latency, FittedPhaseLagOracle) {
  std::vector<double> t, y;
  const double f = 2.0, lag = 0.7;
  for (int k = 0; k < 300; ++k) {
    t.push_back(k / 60.0);
    y.push_back(0.3 * std::sin(2 * std::numbers::pi * f * t.back() - lag));
  }
  EXPECT_NEAR(fitted_phase_lag(t, y, f), lag, 1e-9);
}

TEST(Latency, CrossCorrelationOracle) {
  std::vector<double> a, b;
  for (int k = 0; k < 400; ++k) {
    a.push_back(std::sin(0.05 * k) + 0.3 * std::sin(0.17 * k));
    b.push_back(std::sin(0.05 * (k - 7)) + 0.3 * std::sin(0.17 * (k - 7)));
  }
  EXPECT_NEAR(cross_correlation_lag(a, b, 30), 7.0, 0.05);
}

TEST(WandAttachment, ZeroFaults) {
  const Finding f = test_wand_attachment(cave(), FaultSet{});
  EXPECT_EQ(f.status, Status::Pass);
  EXPECT_LT(f.scalar("max_distance"), 1e-9);
}

TEST(WandAttachment, LatencyLag) {
  const Finding f = test_wand_attachment(cave(), latency(0.1));
  EXPECT_EQ(f.status, Status::Fail);
  EXPECT_NEAR(f.scalar("along_track_lag"), 0.05, 0.005);
}

TEST(WandAttachment, JitterSeparatesBiasFromNoise) {
  FaultSet f;
  f.jitter_sigma = 0.002;
  const Finding r = test_wand_attachment(cave(), f);
  EXPECT_LT(std::abs(r.scalar("along_track_lag")), 0.001);
  EXPECT_LT(r.vector3("mean_offset").norm(), 0.001);
  EXPECT_GT(r.scalar("scatter"), 0.0005);
  EXPECT_LT(r.scalar("scatter"), 0.005);
}

TEST(Jitter, Levels) {
  EXPECT_LT(estimate_jitter(cave(), FaultSet{}).scalar("sigma"), 1e-12);
  for (double s : {0.002, 0.01}) {
    FaultSet f;
    f.jitter_sigma = s;
    const Finding r = estimate_jitter(cave(), f);
    EXPECT_EQ(r.status, Status::Fail);
    EXPECT_NEAR(r.scalar("sigma"), s, 0.15 * s);
  }
}

TEST(FixedMarker, Examples) {
  EXPECT_LT(test_fixed_marker(cave(), FaultSet{}).scalar("tracking_error_magnitude"), 1e-9);
  const Finding f = test_fixed_marker(cave(), offset(Vec3(0.05, 0, 0)));
  EXPECT_EQ(f.status, Status::Fail);
  EXPECT_NEAR(f.scalar("tracking_error_magnitude"), 0.05, 1e-6);
  FaultSet bulge;
  bulge.distortion = canon::bulge_grid();
  EXPECT_NEAR(test_fixed_marker(cave(), bulge).scalar("tracking_error_magnitude"), 0.08, 0.005);
}

TEST(EdgeMatch, IdentityAndTranslation) {
  EXPECT_LT(test_edge_match(cave(), FaultSet{}, {0, 2}).scalar("max_gap"), 1e-9);
  FaultSet f;
  f.screens["right"].projector_affine(0, 2) = 0.002;
  EXPECT_NEAR(test_edge_match(cave(), f, {0, 2}).scalar("max_gap"), 0.002, 1e-6);
}

TEST(EdgeMatch, ScaleErrorGrowsTowardCorner) {
  // 0.5% vertical scale about the screen center on the right projector.
  FaultSet f;
  Affine2& a = f.screens["right"].projector_affine;
  a(1, 1) = 1.005;
  a(1, 2) = -0.005 * 1.5;
  const Finding r = test_edge_match(cave(), f, {0, 2});
  EXPECT_NEAR(r.scalar("max_gap"), 0.005 * 1.5, 1e-6);
  const Vec3 worst = r.vector3("worst_point");
  EXPECT_NEAR(std::abs(worst.y() - 1.5), 1.5, 1e-9);
}

TEST(Findings, UncertaintyBelowThresholdUnderJitter) {
  FaultSet f;
  f.jitter_sigma = 0.002;
  for (const auto& finding : run_suite(cave(), f).findings) expect_status_consistent(finding);
}
