#pragma once

// Simulated projection VR system: rig description, tracker model with
// injectable faults, and the frame-sequential stereo display pipeline.
//
// Position faults compose in a fixed order:
//   latency -> distortion grid -> constant offset -> jitter
// followed by the software-side correction grid, if the rig has one.
// Orientation only sees latency. Screen faults act in screen space after
// projection (plane_shift changes which plane the software projects onto,
// projector_affine moves the result), and eye_swap is applied last.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cavecheck/geom.hpp"
#include "cavecheck/grid.hpp"
#include "cavecheck/random.hpp"

namespace cavecheck {

/// 2x3 affine map on screen (u, v) coordinates in meters.
using Affine2 = Eigen::Matrix<double, 2, 3>;

inline Affine2 identity_affine() {
  Affine2 a;
  a << 1, 0, 0, 0, 1, 0;
  return a;
}

struct RigConfig {
  std::vector<ScreenRect> screens;
  Vec3 interior_point{0.0, 1.5, 0.0};
  double ipd = 0.065;
  Vec3 glasses_offset = Vec3::Zero();
  double frame_rate_hz = 60.0;
  std::string unit = "m";
  /// Software-side tracker correction, indexed by reported position.
  std::optional<calib::DistortionGrid> tracker_correction;

  /// Throws ConfigError if any invariant is broken, including a screen whose
  /// normal does not face the interior point.
  void validate() const;

  std::optional<std::size_t> screen_index(const std::string& name) const;

  /// Four 3 m screens (front, left, right, floor) at 1024x1024 pixels
  /// around a floor-centered origin.
  static RigConfig default_cave(double side = 3.0, int pixels = 1024);
};

struct ScreenFault {
  bool eye_swap = false;
  std::optional<int> genlock_break_row;
  Affine2 projector_affine = identity_affine();
  std::array<double, 3> color_gain{1.0, 1.0, 1.0};
  double ghost_leak = 0.0;
  double plane_shift = 0.0;  // m along the screen normal

  bool is_default() const;
};

struct FaultSet {
  Vec3 tracker_offset = Vec3::Zero();
  std::optional<calib::DistortionGrid> distortion;
  double jitter_sigma = 0.0;
  double latency_s = 0.0;
  std::map<std::string, ScreenFault> screens;

  /// Fault for a screen; defaults when none was injected.
  const ScreenFault& screen(const std::string& name) const;
  bool is_default() const;
  void validate(const RigConfig& rig) const;
};

struct Probe {
  std::string label;
  Vec3 position;
};

struct Segment {
  std::string label;
  Vec3 a;
  Vec3 b;
};

struct Scene {
  std::vector<Probe> probes;
  std::vector<Segment> segments;
  bool wand_marker = false;
  bool ground_plane = false;

  void validate() const;
};

struct TrackedPoses {
  Pose head;
  Pose wand;
};

/// Analytic head and wand motion on [0, duration].
struct Trajectory {
  std::string kind;
  double duration = 0.0;
  std::function<TrackedPoses(double)> at;

  static Trajectory stationary(const Pose& head, const Pose& wand,
                               double duration);
  /// Head static; wand oscillates along `axis` as amplitude * sin(2 pi f t).
  static Trajectory wand_wag(const Pose& head, const Vec3& wand_center,
                             const Vec3& axis, double amplitude,
                             double frequency_hz, double duration);
  /// Head static; wand on a circle in the plane spanned by axis_u, axis_v.
  static Trajectory wand_circle(const Pose& head, const Vec3& center,
                                const Vec3& axis_u, const Vec3& axis_v,
                                double radius, double speed, double duration);
  /// Head moves at constant velocity; wand static.
  static Trajectory head_linear(const Pose& head_start, const Vec3& velocity,
                                const Pose& wand, double duration);
};

enum class Sensor { Head, Wand };
enum class EyeSide { Left, Right };

/// Per-sensor jitter streams. Each sensor owns its own seeded stream.
class TrackerNoise {
 public:
  explicit TrackerNoise(std::uint64_t seed);
  GaussianStream& stream(Sensor sensor);

 private:
  GaussianStream head_;
  GaussianStream wand_;
};

/// What the tracker reports for one sensor at time t. `history` is the true
/// pose as a function of time; t - latency is clamped to 0.
Pose report_pose(const std::function<Pose(double)>& history, double t,
                 const FaultSet& faults, GaussianStream& rng);

/// Reported pose followed by the rig's software correction, if any.
Pose tracked_pose(const RigConfig& rig, const FaultSet& faults,
                  const std::function<Pose(double)>& history, double t,
                  GaussianStream& rng);

/// Where the software believes screen i is.
ScreenRect believed_screen(const RigConfig& rig, const FaultSet& faults,
                           std::size_t i);

/// Screen point at which screen i displays world point p when the software
/// renders from `render_eye`. Throws GeometryError when the believed
/// frustum is degenerate or p has no image.
ScreenPoint display_point(const RigConfig& rig, const FaultSet& faults,
                          std::size_t i, const Vec3& render_eye, const Vec3& p);

/// Physical 3D location of a displayed screen point.
Vec3 displayed_world_point(const RigConfig& rig, std::size_t i,
                           const ScreenPoint& sp);

/// Which rendered eye image a viewing eye actually sees on a screen.
const Vec3& rendered_eye_seen_by(const ScreenFault& fault, EyeSide viewer,
                                 const EyePair& rendered);

struct LabeledPoint {
  std::string label;
  ScreenPoint point;
};

struct ScreenView {
  std::string screen;
  bool exploded = false;
  std::vector<LabeledPoint> left;
  std::vector<LabeledPoint> right;
};

struct DisplayedFrame {
  double time = 0.0;
  int index = 0;
  int parity = 0;  // 0 = left field, 1 = right field
  TrackedPoses truth;
  TrackedPoses reported;
  std::vector<ScreenView> screens;
};

/// Fraction of width/height beyond the screen edge that is still kept.
inline constexpr double kClipMargin = 0.10;

DisplayedFrame render_frame(double t, const RigConfig& rig,
                            const FaultSet& faults, const Scene& scene,
                            const Trajectory& trajectory, TrackerNoise& noise,
                            int index = 0);

/// Frames at t = k / frame_rate for k = 0..floor(duration * rate).
std::vector<DisplayedFrame> simulate(const RigConfig& rig,
                                     const FaultSet& faults, const Scene& scene,
                                     const Trajectory& trajectory,
                                     double duration, std::uint64_t seed);

}  // namespace cavecheck
