#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cavecheck/rig.hpp"

using namespace cavecheck;

namespace {

Pose at(const Vec3& p) {
  Pose pose;
  pose.position = p;
  return pose;
}

Scene probe_scene() {
  Scene s;
  s.probes = {{"behind", Vec3(0.2, 1.4, -3.0)}, {"on_front", Vec3(-0.4, 1.1, -1.5)},
              {"near", Vec3(0.1, 1.6, -0.8)}, {"floor_side", Vec3(0.3, -0.5, -0.2)}};
  s.segments = {{"seg", Vec3(-0.5, 1.0, -2.0), Vec3(0.5, 1.2, -2.5)}};
  s.wand_marker = true;
  return s;
}

Trajectory moving() {
  Pose head = at(Vec3(-0.3, 1.5, 0.2));
  return Trajectory::head_linear(head, Vec3(0.5, 0.0, -0.1), at(Vec3(0.1, 1.2, -0.7)), 2.0);
}

const LabeledPoint* find(const std::vector<LabeledPoint>& pts, const std::string& label) {
  for (const auto& p : pts)
    if (p.label == label) return &p;
  return nullptr;
}

}  // namespace

TEST(RigConfig, DefaultCaveValidates) {
  const RigConfig rig = RigConfig::default_cave();
  EXPECT_EQ(rig.screens.size(), 4u);
  EXPECT_NO_THROW(rig.validate());
  EXPECT_EQ(rig.screen_index("floor"), std::optional<std::size_t>(3));
}

TEST(RigConfig, RejectsBadValues) {
  RigConfig rig = RigConfig::default_cave();
  rig.ipd = 0.0;
  EXPECT_THROW(rig.validate(), ConfigError);
  rig = RigConfig::default_cave();
  rig.frame_rate_hz = -1.0;
  EXPECT_THROW(rig.validate(), ConfigError);
  rig = RigConfig::default_cave();
  rig.screens.clear();
  EXPECT_THROW(rig.validate(), ConfigError);
  rig = RigConfig::default_cave();
  std::swap(rig.screens[0].lower_left, rig.screens[0].lower_right);
  rig.screens[0].upper_left = rig.screens[0].lower_left + Vec3(0, 3, 0);
  EXPECT_THROW(rig.validate(), ConfigError);
}

TEST(FaultSet, ValidatesRanges) {
  const RigConfig rig = RigConfig::default_cave();
  FaultSet f;
  f.jitter_sigma = -0.1;
  EXPECT_THROW(f.validate(rig), ConfigError);
  f = FaultSet{};
  f.latency_s = -0.1;
  EXPECT_THROW(f.validate(rig), ConfigError);
  f = FaultSet{};
  f.screens["front"].ghost_leak = 1.0;
  EXPECT_THROW(f.validate(rig), ConfigError);
  f = FaultSet{};
  f.screens["front"].genlock_break_row = 1024;
  EXPECT_THROW(f.validate(rig), ConfigError);
  f = FaultSet{};
  f.screens["ceiling"].eye_swap = true;
  EXPECT_THROW(f.validate(rig), ConfigError);
}

TEST(ReportPose, ZeroFaultsIsIdentity) {
  GaussianStream rng(1);
  const auto history = [](double t) { return at(Vec3(t, 1.5, 0)); };
  const Pose p = report_pose(history, 0.7, FaultSet{}, rng);
  EXPECT_EQ(p.position, Vec3(0.7, 1.5, 0));
}

TEST(ReportPose, LatencyLagsMovingHead) {
  GaussianStream rng(1);
  FaultSet f;
  f.latency_s = 0.1;
  const auto history = [](double t) { return at(Vec3(0.5 * t, 1.5, 0)); };
  const Pose p = report_pose(history, 1.0, f, rng);
  EXPECT_NEAR(history(1.0).position.x() - p.position.x(), 0.05, 1e-15);
  EXPECT_EQ(report_pose(history, 0.05, f, rng).position, history(0.0).position);
}

TEST(ReportPose, ConstantOffset) {
  GaussianStream rng(1);
  FaultSet f;
  f.tracker_offset = Vec3(0.05, 0, 0);
  const Pose p = report_pose([](double) { return at(Vec3(0, 1.5, 0)); }, 0.0, f, rng);
  EXPECT_EQ(p.position, Vec3(0.05, 1.5, 0));
}

TEST(ReportPose, CompositionOrder) {
  // Distortion is sampled at the delayed true position, before the offset.
  GaussianStream rng(1);
  FaultSet f;
  f.latency_s = 0.2;
  f.tracker_offset = Vec3(0, 0.1, 0);
  f.distortion = calib::DistortionGrid::sample(Vec3(-2, -2, -2), Vec3(2, 2, 2), {2, 2, 2},
                                               [](const Vec3& p) { return Vec3(0.1 * p.x(), 0, 0); });
  const auto history = [](double t) { return at(Vec3(t, 0, 0)); };
  const Pose p = report_pose(history, 1.0, f, rng);
  const double x = 0.8;
  EXPECT_NEAR(p.position.x(), x + 0.1 * x, 1e-12);
  EXPECT_NEAR(p.position.y(), 0.1, 1e-15);
}

TEST(ReportPose, LatencyExactForTickMultiples) {
  FaultSet f;
  const auto history = [](double t) {
    Pose p;
    p.position = Vec3(std::sin(3 * t), 1.5 + 0.2 * std::cos(t), t * t);
    p.orientation = Quat(Eigen::AngleAxisd(0.4 * t, Vec3::UnitY()));
    return p;
  };
  GaussianStream rng(1);
  for (int k = 1; k <= 12; ++k) {
    f.latency_s = k / 60.0;
    const double t = 1.0 + k / 60.0;
    const Pose p = report_pose(history, t, f, rng);
    const Pose truth = history(t - f.latency_s);
    EXPECT_EQ(p.position, truth.position);
    EXPECT_EQ(p.orientation.coeffs(), truth.orientation.coeffs());
  }
}

TEST(Simulate, FencepostCount) {
  const RigConfig rig = RigConfig::default_cave();
  const auto frames = simulate(rig, FaultSet{}, probe_scene(), moving(), 1.0, 1);
  ASSERT_EQ(frames.size(), 61u);
  EXPECT_DOUBLE_EQ(frames.back().time, 1.0);
}

TEST(Simulate, DeterministicWithSeed) {
  const RigConfig rig = RigConfig::default_cave();
  FaultSet f;
  f.jitter_sigma = 0.003;
  f.latency_s = 0.05;
  const auto a = simulate(rig, f, probe_scene(), moving(), 1.0, 42);
  const auto b = simulate(rig, f, probe_scene(), moving(), 1.0, 42);
  const auto c = simulate(rig, f, probe_scene(), moving(), 1.0, 43);
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].reported.head.position, b[k].reported.head.position);
    for (std::size_t s = 0; s < a[k].screens.size(); ++s)
      for (std::size_t n = 0; n < a[k].screens[s].left.size(); ++n)
        EXPECT_EQ(a[k].screens[s].left[n].point.u, b[k].screens[s].left[n].point.u);
    differs |= a[k].reported.head.position != c[k].reported.head.position;
  }
  EXPECT_TRUE(differs);
}

TEST(Simulate, JitterStandardDeviation) {
  const RigConfig rig = RigConfig::default_cave();
  FaultSet f;
  f.jitter_sigma = 0.002;
  const Pose head = at(Vec3(0, 1.5, 0));
  const auto frames = simulate(rig, f, Scene{}, Trajectory::stationary(head, at(Vec3(0, 1.2, -0.7)), 10.0), 599.0 / 60.0, 9);
  ASSERT_EQ(frames.size(), 600u);
  for (int axis = 0; axis < 3; ++axis) {
    double sum = 0.0, sq = 0.0;
    for (const auto& fr : frames) sum += fr.reported.head.position[axis];
    const double mean = sum / frames.size();
    for (const auto& fr : frames) sq += std::pow(fr.reported.head.position[axis] - mean, 2);
    EXPECT_NEAR(std::sqrt(sq / (frames.size() - 1)), 0.002, 0.15 * 0.002);
  }
}

TEST(Simulate, SensorStreamsIndependent) {
  // Adding wand motion must not change head jitter draws.
  const RigConfig rig = RigConfig::default_cave();
  FaultSet f;
  f.jitter_sigma = 0.002;
  const Pose head = at(Vec3(0, 1.5, 0));
  const auto a = simulate(rig, f, Scene{}, Trajectory::stationary(head, at(Vec3(0, 1.2, -0.7)), 1.0), 1.0, 5);
  const auto b = simulate(rig, f, Scene{},
                          Trajectory::wand_wag(head, Vec3(0, 1.2, -0.7), Vec3::UnitX(), 0.3, 2.0, 1.0), 1.0, 5);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].reported.head.position, b[k].reported.head.position);
}

TEST(RenderFrame, ZeroFaultTransparency) {
  const RigConfig rig = RigConfig::default_cave();
  const Scene scene = probe_scene();
  const auto frames = simulate(rig, FaultSet{}, scene, moving(), 1.0, 1);
  for (const auto& fr : frames) {
    const EyePair eyes = derive_eyes(fr.truth.head, rig.ipd, rig.glasses_offset);
    for (std::size_t s = 0; s < rig.screens.size(); ++s) {
      const auto& view = fr.screens[s];
      for (const auto& probe : scene.probes) {
        const LabeledPoint* l = find(view.left, probe.label);
        if (!l) continue;
        const ScreenPoint want = project_point(eyes.left, rig.screens[s], probe.position);
        EXPECT_NEAR(l->point.u, want.u, 1e-12);
        EXPECT_NEAR(l->point.v, want.v, 1e-12);
      }
    }
  }
}

TEST(RenderFrame, OnPlaneProbeHasNoDisparity) {
  const RigConfig rig = RigConfig::default_cave();
  Scene scene;
  scene.probes = {{"on", Vec3(0.3, 1.0, -1.5)}};
  TrackerNoise noise(1);
  const auto fr = render_frame(0.0, rig, FaultSet{}, scene, moving(), noise);
  const auto* l = find(fr.screens[0].left, "on");
  const auto* r = find(fr.screens[0].right, "on");
  ASSERT_TRUE(l && r);
  EXPECT_NEAR(l->point.u, r->point.u, 1e-12);
  EXPECT_NEAR(l->point.v, r->point.v, 1e-12);
}

TEST(RenderFrame, EyeSwapFlipsDisparityOnOneScreen) {
  const RigConfig rig = RigConfig::default_cave();
  Scene scene;
  scene.probes = {{"front_probe", Vec3(0, 1.5, -3.0)}, {"right_probe", Vec3(3.0, 1.5, 0.0)}};
  FaultSet f;
  f.screens["right"].eye_swap = true;
  // du on a screen needs the eyes separated along its right axis, so face it.
  auto du = [&](double yaw, std::size_t s, const std::string& label) {
    Pose head = at(Vec3(0, 1.5, 0));
    head.orientation = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitY()));
    TrackerNoise noise(1);
    const auto fr = render_frame(0.0, rig, f, scene, Trajectory::stationary(head, at(Vec3(0, 1.2, -0.7)), 1.0), noise);
    return find(fr.screens[s].left, label)->point.u - find(fr.screens[s].right, label)->point.u;
  };
  EXPECT_LT(du(0.0, 0, "front_probe"), 0.0);
  EXPECT_GT(du(-std::numbers::pi / 2, 2, "right_probe"), 0.0);
}

TEST(RenderFrame, PlaneShiftCreatesDisparity) {
  const RigConfig rig = RigConfig::default_cave();
  Scene scene;
  scene.probes = {{"on", Vec3(0.3, 1.0, -1.5)}};
  FaultSet f;
  f.screens["front"].plane_shift = 0.1;
  TrackerNoise noise(1);
  const auto fr = render_frame(0.0, rig, f, scene, moving(), noise);
  const auto* l = find(fr.screens[0].left, "on");
  const auto* r = find(fr.screens[0].right, "on");
  ASSERT_TRUE(l && r);
  EXPECT_GT(std::abs(l->point.u - r->point.u), 1e-3);
}

TEST(RenderFrame, ParityFollowsFieldClock) {
  // Fields alternate at twice the per-eye rate; samples at k / rate all land
  // on left fields.
  const RigConfig rig = RigConfig::default_cave();
  for (const auto& fr : simulate(rig, FaultSet{}, probe_scene(), moving(), 0.5, 1)) EXPECT_EQ(fr.parity, 0);
  for (int k = 0; k < 20; ++k) {
    TrackerNoise noise(1);
    EXPECT_EQ(render_frame(k / 120.0, rig, FaultSet{}, probe_scene(), moving(), noise).parity, k % 2) << k;
  }
}

TEST(RenderFrame, ExplosionFlaggedNotThrown) {
  const RigConfig rig = RigConfig::default_cave();
  TrackerNoise noise(1);
  const auto traj = Trajectory::stationary(at(Vec3(0, 1.5, -1.6)), at(Vec3(0, 1.2, -0.7)), 1.0);
  DisplayedFrame fr;
  ASSERT_NO_THROW(fr = render_frame(0.0, rig, FaultSet{}, probe_scene(), traj, noise));
  EXPECT_TRUE(fr.screens[0].exploded);
}

TEST(RenderFrame, PointsClippedToOneScreen) {
  const RigConfig rig = RigConfig::default_cave();
  Scene scene;
  scene.probes = {{"mid", Vec3(0.0, 1.5, -3.0)}, {"left_wall", Vec3(-3.0, 1.5, 0.0)}};
  TrackerNoise noise(1);
  const auto fr = render_frame(0.0, rig, FaultSet{}, scene,
                               Trajectory::stationary(at(Vec3(0, 1.5, 0)), at(Vec3(0, 1.2, -0.7)), 1.0), noise);
  for (const std::string label : {"mid", "left_wall"}) {
    int count = 0;
    for (const auto& v : fr.screens) count += find(v.left, label) != nullptr;
    EXPECT_EQ(count, 1) << label;
  }
}

TEST(Scene, RejectsDuplicateLabels) {
  Scene s;
  s.probes = {{"a", Vec3::Zero()}, {"a", Vec3::Ones()}};
  EXPECT_THROW(s.validate(), ConfigError);
}
