#include "cavecheck/rig.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace cavecheck {

namespace {

Pose head_of(const TrackedPoses& p) { return p.head; }
Pose wand_of(const TrackedPoses& p) { return p.wand; }

// Distance of a screen point outside its rectangle, in meters; 0 inside.
double outside_distance(const ScreenPoint& sp, double w, double h) {
  const double du = std::max({0.0, -sp.u, sp.u - w});
  const double dv = std::max({0.0, -sp.v, sp.v - h});
  return std::hypot(du, dv);
}

bool within_margin(const ScreenPoint& sp, double w, double h) {
  return sp.u >= -kClipMargin * w && sp.u <= (1.0 + kClipMargin) * w &&
         sp.v >= -kClipMargin * h && sp.v <= (1.0 + kClipMargin) * h;
}

}  // namespace

void RigConfig::validate() const {
  if (screens.empty()) throw ConfigError("rig: at least one screen required");
  if (!(frame_rate_hz > 0.0) || !std::isfinite(frame_rate_hz)) {
    throw ConfigError("rig: frame_rate_hz must be positive");
  }
  if (!(ipd > 0.0) || !std::isfinite(ipd)) {
    throw ConfigError("rig: ipd must be positive");
  }
  require_finite(interior_point, "rig interior_point");
  require_finite(glasses_offset, "rig glasses_offset");
  std::set<std::string> names;
  for (const auto& s : screens) {
    if (!names.insert(s.name).second) {
      throw ConfigError("rig: duplicate screen name '" + s.name + "'");
    }
    const ScreenBasis b = screen_basis(s);
    if (plane_distance(b, interior_point) <= 0.0) {
      throw ConfigError("screen '" + s.name +
                        "': normal (right x up) must face the interior point; "
                        "reorder the corners");
    }
  }
  if (tracker_correction) tracker_correction->validate();
}

std::optional<std::size_t> RigConfig::screen_index(const std::string& name) const {
  for (std::size_t i = 0; i < screens.size(); ++i) {
    if (screens[i].name == name) return i;
  }
  return std::nullopt;
}

RigConfig RigConfig::default_cave(double side, int pixels) {
  const double h = 0.5 * side;
  RigConfig rig;
  rig.interior_point = Vec3(0.0, 1.5, 0.0);
  rig.screens = {
      {"front", Vec3(-h, 0, -h), Vec3(h, 0, -h), Vec3(-h, side, -h), pixels, pixels},
      {"left", Vec3(-h, 0, h), Vec3(-h, 0, -h), Vec3(-h, side, h), pixels, pixels},
      {"right", Vec3(h, 0, -h), Vec3(h, 0, h), Vec3(h, side, -h), pixels, pixels},
      {"floor", Vec3(-h, 0, h), Vec3(h, 0, h), Vec3(-h, 0, -h), pixels, pixels},
  };
  return rig;
}

bool ScreenFault::is_default() const {
  return !eye_swap && !genlock_break_row && projector_affine == identity_affine() &&
         color_gain == std::array<double, 3>{1.0, 1.0, 1.0} && ghost_leak == 0.0 &&
         plane_shift == 0.0;
}

const ScreenFault& FaultSet::screen(const std::string& name) const {
  static const ScreenFault kNone{};
  const auto it = screens.find(name);
  return it == screens.end() ? kNone : it->second;
}

bool FaultSet::is_default() const {
  return tracker_offset.isZero(0.0) && !distortion && jitter_sigma == 0.0 &&
         latency_s == 0.0 &&
         std::all_of(screens.begin(), screens.end(),
                     [](const auto& kv) { return kv.second.is_default(); });
}

void FaultSet::validate(const RigConfig& rig) const {
  require_finite(tracker_offset, "faults tracker_offset");
  if (!(jitter_sigma >= 0.0) || !std::isfinite(jitter_sigma)) {
    throw ConfigError("faults: jitter_sigma must be >= 0");
  }
  if (!(latency_s >= 0.0) || !std::isfinite(latency_s)) {
    throw ConfigError("faults: latency_s must be >= 0");
  }
  if (distortion) distortion->validate();
  for (const auto& [name, f] : screens) {
    const auto idx = rig.screen_index(name);
    if (!idx) throw ConfigError("faults: unknown screen '" + name + "'");
    const ScreenRect& s = rig.screens[*idx];
    if (f.genlock_break_row &&
        (*f.genlock_break_row < 0 || *f.genlock_break_row >= s.pixels_h)) {
      throw ConfigError("faults: screen '" + name +
                        "' genlock_break_row outside [0, pixels_h)");
    }
    if (!(f.ghost_leak >= 0.0 && f.ghost_leak < 1.0)) {
      throw ConfigError("faults: screen '" + name + "' ghost_leak outside [0, 1)");
    }
    if (!f.projector_affine.allFinite()) {
      throw ConfigError("faults: screen '" + name + "' projector_affine not finite");
    }
    for (double g : f.color_gain) {
      if (!(g >= 0.0) || !std::isfinite(g)) {
        throw ConfigError("faults: screen '" + name + "' color_gain must be >= 0");
      }
    }
    if (!std::isfinite(f.plane_shift)) {
      throw ConfigError("faults: screen '" + name + "' plane_shift not finite");
    }
  }
}

void Scene::validate() const {
  std::set<std::string> labels;
  for (const auto& p : probes) {
    require_finite(p.position, "probe position");
    if (!labels.insert(p.label).second) {
      throw ConfigError("scene: duplicate label '" + p.label + "'");
    }
  }
  for (const auto& s : segments) {
    require_finite(s.a, "segment endpoint");
    require_finite(s.b, "segment endpoint");
    if (!labels.insert(s.label).second) {
      throw ConfigError("scene: duplicate label '" + s.label + "'");
    }
  }
}

Trajectory Trajectory::stationary(const Pose& head, const Pose& wand,
                                  double duration) {
  return Trajectory{"stationary", duration,
                    [=](double) { return TrackedPoses{head, wand}; }};
}

Trajectory Trajectory::wand_wag(const Pose& head, const Vec3& wand_center,
                                const Vec3& axis, double amplitude,
                                double frequency_hz, double duration) {
  const Vec3 dir = axis.normalized();
  return Trajectory{"wand_wag", duration, [=](double t) {
                      Pose wand;
                      wand.position =
                          wand_center +
                          amplitude * std::sin(2.0 * std::numbers::pi * frequency_hz * t) * dir;
                      return TrackedPoses{head, wand};
                    }};
}

Trajectory Trajectory::wand_circle(const Pose& head, const Vec3& center,
                                   const Vec3& axis_u, const Vec3& axis_v,
                                   double radius, double speed, double duration) {
  const Vec3 eu = axis_u.normalized();
  const Vec3 ev = (axis_v - axis_v.dot(eu) * eu).normalized();
  const double omega = speed / radius;
  return Trajectory{"wand_circle", duration, [=](double t) {
                      Pose wand;
                      wand.position = center + radius * (std::cos(omega * t) * eu +
                                                         std::sin(omega * t) * ev);
                      return TrackedPoses{head, wand};
                    }};
}

Trajectory Trajectory::head_linear(const Pose& head_start, const Vec3& velocity,
                                   const Pose& wand, double duration) {
  return Trajectory{"head_linear", duration, [=](double t) {
                      Pose head = head_start;
                      head.position += velocity * t;
                      return TrackedPoses{head, wand};
                    }};
}

TrackerNoise::TrackerNoise(std::uint64_t seed)
    : head_(stream_seed(seed, "head")), wand_(stream_seed(seed, "wand")) {}

GaussianStream& TrackerNoise::stream(Sensor sensor) {
  return sensor == Sensor::Head ? head_ : wand_;
}

Pose report_pose(const std::function<Pose(double)>& history, double t,
                 const FaultSet& faults, GaussianStream& rng) {
  Pose pose = history(std::max(0.0, t - faults.latency_s));
  if (faults.distortion) {
    pose.position += calib::trilinear_sample(*faults.distortion, pose.position);
  }
  pose.position += faults.tracker_offset;
  // Drawn unconditionally so the stream position does not depend on sigma.
  const Vec3 noise = rng.next_vec3(faults.jitter_sigma);
  if (faults.jitter_sigma > 0.0) pose.position += noise;
  return pose;
}

Pose tracked_pose(const RigConfig& rig, const FaultSet& faults,
                  const std::function<Pose(double)>& history, double t,
                  GaussianStream& rng) {
  Pose pose = report_pose(history, t, faults, rng);
  if (rig.tracker_correction) {
    pose.position = calib::correct(*rig.tracker_correction, pose.position);
  }
  return pose;
}

ScreenRect believed_screen(const RigConfig& rig, const FaultSet& faults,
                           std::size_t i) {
  const ScreenRect& s = rig.screens.at(i);
  return shifted_along_normal(s, faults.screen(s.name).plane_shift);
}

ScreenPoint display_point(const RigConfig& rig, const FaultSet& faults,
                          std::size_t i, const Vec3& render_eye, const Vec3& p) {
  const ScreenRect& physical = rig.screens.at(i);
  const ScreenFault& fault = faults.screen(physical.name);
  const ScreenPoint believed =
      project_point(render_eye, believed_screen(rig, faults, i), p);
  const Eigen::Vector2d uv =
      fault.projector_affine * Eigen::Vector3d(believed.u, believed.v, 1.0);
  return to_screen_point(physical, screen_basis(physical), uv.x(), uv.y());
}

Vec3 displayed_world_point(const RigConfig& rig, std::size_t i,
                           const ScreenPoint& sp) {
  return screen_to_world(rig.screens.at(i), sp);
}

const Vec3& rendered_eye_seen_by(const ScreenFault& fault, EyeSide viewer,
                                 const EyePair& rendered) {
  const bool left = (viewer == EyeSide::Left) != fault.eye_swap;
  return left ? rendered.left : rendered.right;
}

DisplayedFrame render_frame(double t, const RigConfig& rig,
                            const FaultSet& faults, const Scene& scene,
                            const Trajectory& trajectory, TrackerNoise& noise,
                            int index) {
  DisplayedFrame frame;
  frame.time = t;
  frame.index = index;
  frame.parity =
      static_cast<int>(std::floor(t * 2.0 * rig.frame_rate_hz + 1e-9)) % 2;
  frame.truth = trajectory.at(t);

  const auto head_history = [&](double s) { return head_of(trajectory.at(s)); };
  const auto wand_history = [&](double s) { return wand_of(trajectory.at(s)); };
  frame.reported.head =
      tracked_pose(rig, faults, head_history, t, noise.stream(Sensor::Head));
  frame.reported.wand =
      tracked_pose(rig, faults, wand_history, t, noise.stream(Sensor::Wand));

  const EyePair rendered =
      derive_eyes(frame.reported.head, rig.ipd, rig.glasses_offset);

  std::vector<std::pair<std::string, Vec3>> items;
  for (const auto& p : scene.probes) items.emplace_back(p.label, p.position);
  for (const auto& s : scene.segments) {
    items.emplace_back(s.label + ".a", s.a);
    items.emplace_back(s.label + ".b", s.b);
  }
  if (scene.wand_marker) items.emplace_back("wand", frame.reported.wand.position);

  const std::size_t n = rig.screens.size();
  frame.screens.resize(n);
  std::vector<ScreenBasis> bases(n);
  for (std::size_t i = 0; i < n; ++i) {
    frame.screens[i].screen = rig.screens[i].name;
    bases[i] = screen_basis(rig.screens[i]);
    const ScreenBasis believed = screen_basis(believed_screen(rig, faults, i));
    frame.screens[i].exploded =
        plane_distance(believed, rendered.left) <= kDegenerateDistance ||
        plane_distance(believed, rendered.right) <= kDegenerateDistance;
  }

  for (EyeSide viewer : {EyeSide::Left, EyeSide::Right}) {
    for (const auto& [label, position] : items) {
      std::optional<std::size_t> best;
      ScreenPoint best_point;
      double best_outside = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (frame.screens[i].exploded) continue;
        const ScreenFault& fault = faults.screen(rig.screens[i].name);
        const Vec3& eye = rendered_eye_seen_by(fault, viewer, rendered);
        ScreenPoint sp;
        try {
          sp = display_point(rig, faults, i, eye, position);
        } catch (const GeometryError&) {
          continue;
        }
        if (!within_margin(sp, bases[i].width, bases[i].height)) continue;
        const double outside = outside_distance(sp, bases[i].width, bases[i].height);
        if (!best || outside < best_outside) {
          best = i;
          best_point = sp;
          best_outside = outside;
        }
      }
      if (!best) continue;
      auto& list = viewer == EyeSide::Left ? frame.screens[*best].left
                                           : frame.screens[*best].right;
      list.push_back(LabeledPoint{label, best_point});
    }
  }
  return frame;
}

std::vector<DisplayedFrame> simulate(const RigConfig& rig,
                                     const FaultSet& faults, const Scene& scene,
                                     const Trajectory& trajectory,
                                     double duration, std::uint64_t seed) {
  if (!(duration > 0.0)) throw ConfigError("simulate: duration must be positive");
  rig.validate();
  faults.validate(rig);
  scene.validate();
  TrackerNoise noise(seed);
  const auto last =
      static_cast<int>(std::floor(duration * rig.frame_rate_hz + 1e-9));
  std::vector<DisplayedFrame> frames;
  frames.reserve(static_cast<std::size_t>(last) + 1);
  for (int k = 0; k <= last; ++k) {
    frames.push_back(render_frame(k / rig.frame_rate_hz, rig, faults, scene,
                                  trajectory, noise, k));
  }
  return frames;
}

}  // namespace cavecheck
