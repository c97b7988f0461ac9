#include "cavecheck/diagnostics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>

#include "cavecheck/calib.hpp"
#include "cavecheck/io.hpp"

namespace cavecheck::diagnostics {

const char* to_string(Status s) {
  switch (s) {
    case Status::Pass: return "pass";
    case Status::Fail: return "fail";
    case Status::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

const Estimate* Finding::find(const std::string& name) const {
  for (const auto& e : estimates) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

double Finding::scalar(const std::string& name) const {
  const Estimate* e = find(name);
  if (e == nullptr || e->value.empty()) return std::numeric_limits<double>::quiet_NaN();
  return e->value.front();
}

Vec3 Finding::vector3(const std::string& name) const {
  const Estimate* e = find(name);
  if (e == nullptr || e->value.size() != 3) {
    return Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  }
  return Vec3(e->value[0], e->value[1], e->value[2]);
}

bool DiagnosticReport::any(Status s) const {
  return std::any_of(findings.begin(), findings.end(),
                     [s](const Finding& f) { return f.status == s; });
}

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = 180.0 / std::numbers::pi;

Estimate scalar_estimate(std::string name, double v, std::string unit) {
  return Estimate{std::move(name), {v}, std::move(unit)};
}

Estimate vector_estimate(std::string name, const Vec3& v, std::string unit) {
  return Estimate{std::move(name), {v.x(), v.y(), v.z()}, std::move(unit)};
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

std::string fmt(const Vec3& v) {
  return "(" + fmt(v.x()) + ", " + fmt(v.y()) + ", " + fmt(v.z()) + ")";
}

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  return a <= -kPi ? a + 2.0 * kPi : a;
}

Finding make_finding(std::string test, std::string subject, double threshold,
                     std::string unit) {
  Finding f;
  f.test_name = std::move(test);
  f.subject = std::move(subject);
  f.threshold = threshold;
  f.threshold_unit = std::move(unit);
  return f;
}

Finding inconclusive(Finding f, const std::string& why) {
  f.status = Status::Inconclusive;
  f.notes.push_back(why);
  return f;
}

Vec3 screen_center(const ScreenBasis& b) {
  return b.origin + 0.5 * b.width * b.right + 0.5 * b.height * b.up;
}

struct Samples {
  Eigen::VectorXd mean;
  Eigen::VectorXd stderr_;  // standard error of the mean
  Eigen::VectorXd stddev;
  int count = 0;
};

// Drives the tracker for one test. Every test owns its own noise streams
// so that results do not depend on which other tests ran before it.
class Bench {
 public:
  Bench(const RigConfig& rig, const FaultSet& faults, std::uint64_t seed,
        const std::string& test)
      : rig_(rig), faults_(faults), noise_(stream_seed(seed, test)) {}

  const RigConfig& rig() const { return rig_; }
  const FaultSet& faults() const { return faults_; }
  TrackerNoise& noise() { return noise_; }

  /// Head pose whose glasses center sits at `center`.
  Pose head_at(const Vec3& center, const Quat& q) const {
    Pose p;
    p.orientation = q;
    p.position = center - (q * rig_.glasses_offset);
    return p;
  }

  EyePair truth(const Pose& head) const {
    return derive_eyes(head, rig_.ipd, rig_.glasses_offset);
  }

  /// Rendered eyes for one frame of a static head.
  EyePair rendered(const Pose& head) {
    const double t = frame_++ / rig_.frame_rate_hz;
    const Pose reported = tracked_pose(
        rig_, faults_, [&](double) { return head; }, t, noise_.stream(Sensor::Head));
    return derive_eyes(reported, rig_.ipd, rig_.glasses_offset);
  }

  /// Frames needed for a static measurement; one when the tracker is
  /// noiseless.
  int static_frames(const DiagnosticOptions& opts) const {
    return faults_.jitter_sigma > 0.0 ? std::max(2, opts.static_frames) : 1;
  }

  /// Mean and spread of `measure` over `n` frames of a static head.
  Samples sample(const Pose& head, int n,
                 const std::function<Eigen::VectorXd(const EyePair&)>& measure) {
    std::vector<Eigen::VectorXd> values;
    values.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) values.push_back(measure(rendered(head)));
    Samples s;
    s.count = n;
    s.mean = Eigen::VectorXd::Zero(values.front().size());
    for (const auto& v : values) s.mean += v;
    s.mean /= n;
    s.stddev = Eigen::VectorXd::Zero(s.mean.size());
    if (n > 1) {
      for (const auto& v : values) s.stddev += (v - s.mean).cwiseAbs2();
      s.stddev = (s.stddev / (n - 1)).cwiseSqrt();
    }
    s.stderr_ = s.stddev / std::sqrt(static_cast<double>(n));
    return s;
  }

  /// Mean rendered eyes over a static measurement, plus the largest
  /// per-axis standard error.
  std::pair<EyePair, double> mean_rendered(const Pose& head, int n) {
    const Samples s = sample(head, n, [](const EyePair& e) {
      Eigen::VectorXd v(6);
      v << e.left, e.right;
      return v;
    });
    return {EyePair{s.mean.head<3>(), s.mean.tail<3>()}, s.stderr_.maxCoeff()};
  }

  const ScreenFault& fault(std::size_t i) const {
    return faults_.screen(rig_.screens[i].name);
  }

  /// Where `viewer` sees world point p on screen i.
  ScreenPoint seen(std::size_t i, EyeSide viewer, const EyePair& rendered_eyes,
                   const Vec3& p) const {
    return display_point(rig_, faults_, i,
                         rendered_eye_seen_by(fault(i), viewer, rendered_eyes), p);
  }

  Vec3 seen_world(std::size_t i, EyeSide viewer, const EyePair& rendered_eyes,
                  const Vec3& p) const {
    return displayed_world_point(rig_, i, seen(i, viewer, rendered_eyes, p));
  }

 private:
  const RigConfig& rig_;
  const FaultSet& faults_;
  TrackerNoise noise_;
  int frame_ = 0;
};

// Reference probes behind a screen used to recover the eye a screen was
// rendered for: each displayed image lies on the line from that eye
// through its probe.
std::vector<Vec3> eye_probes(const ScreenBasis& b) {
  const double s = std::min(b.width, b.height) / 3.0;
  const Vec3 c = screen_center(b);
  return {c + s * (-0.4 * b.right - 0.3 * b.up) - 1.0 * s * b.normal,
          c + s * (0.5 * b.right + 0.4 * b.up) - 4.0 * s * b.normal,
          c + s * (0.3 * b.right - 0.5 * b.up) - 2.0 * s * b.normal};
}

Vec3 reconstruct_eye(const Bench& bench, std::size_t screen, EyeSide viewer,
                     const EyePair& rendered_eyes, const std::vector<Vec3>& probes) {
  std::vector<Line3> lines;
  for (const Vec3& q : probes) {
    const Vec3 w = bench.seen_world(screen, viewer, rendered_eyes, q);
    lines.push_back(Line3{w, (q - w).normalized()});
  }
  return nearest_point_to_lines(lines);
}

Vec3 triangulate(const Vec3& eye_a, const Vec3& image_a, const Vec3& eye_b,
                 const Vec3& image_b) {
  const std::vector<Line3> lines{{eye_a, (image_a - eye_a).normalized()},
                                 {eye_b, (image_b - eye_b).normalized()}};
  return nearest_point_to_lines(lines);
}

// Default viewing position for a screen: on its center axis, as far out as
// the rig's interior point.
Vec3 viewing_position(const RigConfig& rig, const ScreenBasis& b) {
  return screen_center(b) + plane_distance(b, rig.interior_point) * b.normal;
}

}  // namespace

std::optional<std::size_t> primary_screen(const RigConfig& rig) {
  for (std::size_t i = 0; i < rig.screens.size(); ++i) {
    if (std::abs(screen_basis(rig.screens[i]).normal.y()) < 0.5) return i;
  }
  return std::nullopt;
}

std::optional<std::pair<Vec3, Vec3>> shared_edge(const RigConfig& rig,
                                                 std::size_t i, std::size_t j) {
  auto corners = [](const ScreenRect& s) {
    return std::array<Vec3, 4>{s.lower_left, s.lower_right, s.upper_left,
                               s.lower_right + (s.upper_left - s.lower_left)};
  };
  const auto a = corners(rig.screens[i]);
  const auto b = corners(rig.screens[j]);
  std::vector<Vec3> shared;
  for (const Vec3& p : a) {
    for (const Vec3& q : b) {
      if ((p - q).norm() <= 1e-9 * std::max(1.0, p.norm())) {
        shared.push_back(p);
        break;
      }
    }
  }
  if (shared.size() != 2) return std::nullopt;
  return std::make_pair(shared[0], shared[1]);
}

std::vector<std::pair<std::size_t, std::size_t>> adjacent_pairs(const RigConfig& rig) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < rig.screens.size(); ++i)
    for (std::size_t j = i + 1; j < rig.screens.size(); ++j)
      if (shared_edge(rig, i, j)) out.emplace_back(i, j);
  return out;
}

Quat facing(const ScreenRect& s) {
  const ScreenBasis b = screen_basis(s);
  Eigen::Matrix3d m;
  m.col(0) = b.right;
  m.col(1) = b.up;
  m.col(2) = b.normal;
  return Quat(m).normalized();
}

Finding test_parallax_orientation(const RigConfig& rig, const FaultSet& faults,
                                  const DiagnosticOptions& opts) {
  Finding f = make_finding("test_parallax_orientation", "",
                           opts.orientation_threshold_deg, "deg");
  const auto primary = primary_screen(rig);
  if (!primary) return inconclusive(std::move(f), "rig has no vertical screen");
  const std::size_t i = *primary;
  f.subject = rig.screens[i].name;
  const ScreenBasis b = screen_basis(rig.screens[i]);

  // A second screen at an angle to the first supplies the motion component
  // along the primary normal.
  std::optional<std::size_t> other;
  double best_sin = 0.5;
  for (std::size_t k = 0; k < rig.screens.size(); ++k) {
    const double s = screen_basis(rig.screens[k]).normal.cross(b.normal).norm();
    if (s > best_sin) {
      best_sin = s;
      other = k;
    }
  }
  if (!other) return inconclusive(std::move(f), "no screen at an angle to " + f.subject);
  const ScreenBasis b2 = screen_basis(rig.screens[*other]);
  Bench bench(rig, faults, opts.seed, f.test_name);

  const Vec3 base = viewing_position(rig, b);
  const double a = plane_distance(b, base);
  const double depth = 3.0;
  const double far = 1e6;
  const Vec3 near_probe = screen_center(b) - depth * b.normal;
  // Images of very distant points follow the rendered eye one to one,
  // however the software places the screen plane.
  const Vec3 far_probe = base - far * b.normal;
  const Vec3 far_probe2 = base - far * b2.normal;
  const Quat q = facing(rig.screens[i]);
  const double step = 0.1;
  const std::vector<Vec3> deltas{Vec3::Zero(), step * b.right, -step * b.right,
                                 step * b.up, -step * b.up};

  // Per position: near image (u, v), far image (u, v), far image on the
  // second screen (u, v).
  std::vector<Samples> at;
  try {
    for (const Vec3& d : deltas) {
      at.push_back(bench.sample(
          bench.head_at(base + d, q), bench.static_frames(opts),
          [&](const EyePair& e) {
            const ScreenPoint pn = bench.seen(i, EyeSide::Left, e, near_probe);
            const ScreenPoint pf = bench.seen(i, EyeSide::Left, e, far_probe);
            const ScreenPoint p2 = bench.seen(*other, EyeSide::Left, e, far_probe2);
            Eigen::VectorXd v(6);
            v << pn.u, pn.v, pf.u, pf.v, p2.u, p2.v;
            return v;
          }));
    }
  } catch (const GeometryError& e) {
    return inconclusive(std::move(f), std::string("probe not displayable: ") + e.what());
  }

  // Apparent eye motion from the four far-image components.
  Eigen::Matrix<double, 4, 3> axes;
  axes.row(0) = b.right.transpose();
  axes.row(1) = b.up.transpose();
  axes.row(2) = b2.right.transpose();
  axes.row(3) = b2.up.transpose();
  const double far_scale = far / (far + a);
  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  double ratio_error = 0.0;
  double min_cos = 1.0;
  const double expected_ratio = depth / (a + depth);
  for (std::size_t k = 1; k < deltas.size(); ++k) {
    const Eigen::VectorXd d = at[k].mean - at[0].mean;
    const Eigen::Vector4d image_motion(d(2), d(3), d(4), d(5));
    const Vec3 apparent = axes.colPivHouseholderQr().solve(image_motion / far_scale);
    H += deltas[k] * apparent.transpose();
    const Eigen::Vector2d image = d.head<2>();
    const Eigen::Vector2d commanded(deltas[k].dot(b.right), deltas[k].dot(b.up));
    ratio_error = std::max(ratio_error,
                           std::abs(image.norm() / step / expected_ratio - 1.0));
    if (image.norm() > 0.0) {
      min_cos = std::min(min_cos, image.dot(commanded) / (image.norm() * step));
    }
  }
  // Kabsch: rotation taking commanded motion onto apparent motion.
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  D(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Eigen::Matrix3d R = svd.matrixV() * D * svd.matrixU().transpose();
  const Eigen::AngleAxisd aa(R);
  const double angle_deg = std::abs(aa.angle()) * kDeg;

  double image_err = 0.0;
  for (const auto& s : at) image_err = std::max(image_err, s.stderr_.tail<4>().maxCoeff());
  f.uncertainty = 3.0 * std::sqrt(2.0) * image_err / best_sin / step * kDeg;

  f.estimates.push_back(scalar_estimate("rotation_angle", angle_deg, "deg"));
  f.estimates.push_back(vector_estimate("rotation_axis", aa.axis(), ""));
  f.estimates.push_back(scalar_estimate("parallax_ratio_error", ratio_error, ""));
  f.estimates.push_back(scalar_estimate("expected_parallax_ratio", expected_ratio, ""));
  f.estimates.push_back(scalar_estimate("min_direction_cosine", min_cos, ""));
  f.evidence.push_back("glasses moved +/-" + fmt(step) + " m along the screen axes from " +
                       fmt(base));
  f.evidence.push_back("probe " + fmt(depth) + " m behind " + f.subject +
                       "; distant probes beyond " + f.subject + " and " +
                       rig.screens[*other].name);

  if (f.uncertainty >= f.threshold) {
    return inconclusive(std::move(f), "tracker noise too large for the orientation fit");
  }
  f.status = Status::Pass;
  if (angle_deg > opts.orientation_threshold_deg) {
    f.status = Status::Fail;
    f.notes.push_back("tracker frame rotated by " + fmt(angle_deg) + " deg about " +
                      fmt(Vec3(aa.axis())));
  }
  if (ratio_error > opts.parallax_ratio_tolerance) {
    f.status = Status::Fail;
    f.notes.push_back("image motion does not scale as depth/(distance+depth)");
  }
  return f;
}

Finding test_shrink(const RigConfig& rig, const FaultSet& faults,
                    const DiagnosticOptions& opts) {
  Finding f = make_finding("test_shrink", "", 0.5, "violations");
  const auto primary = primary_screen(rig);
  if (!primary) return inconclusive(std::move(f), "rig has no vertical screen");
  if (opts.shrink_steps < 2) throw ConfigError("test_shrink: need at least two steps");
  const std::size_t i = *primary;
  f.subject = rig.screens[i].name;
  const ScreenBasis b = screen_basis(rig.screens[i]);
  Bench bench(rig, faults, opts.seed, f.test_name);

  const double depth = opts.shrink_depth_m;
  const double width = 1.0;
  const Vec3 center = screen_center(b) - depth * b.normal;
  const Vec3 end_a = center - 0.5 * width * b.right;
  const Vec3 end_b = center + 0.5 * width * b.right;
  const Quat q = facing(rig.screens[i]);

  std::vector<double> distance, measured, expected, noise;
  for (int k = 0; k < opts.shrink_steps; ++k) {
    const double a = opts.shrink_start_m +
                     (opts.shrink_end_m - opts.shrink_start_m) * k / (opts.shrink_steps - 1);
    Samples s;
    try {
      s = bench.sample(bench.head_at(screen_center(b) + a * b.normal, q),
                       bench.static_frames(opts), [&](const EyePair& e) {
                         const double ua = bench.seen(i, EyeSide::Left, e, end_a).u;
                         const double ub = bench.seen(i, EyeSide::Left, e, end_b).u;
                         return Eigen::VectorXd::Constant(1, std::abs(ub - ua));
                       });
    } catch (const GeometryError&) {
      f.estimates.push_back(scalar_estimate("exploded_at_distance", a, "m"));
      return inconclusive(std::move(f), "image exploded during the approach at " +
                                            fmt(a) + " m");
    }
    distance.push_back(a);
    measured.push_back(s.mean(0));
    noise.push_back(s.stderr_(0));
    expected.push_back(width * a / (a + depth));
  }

  int violations = 0;
  double max_rel = 0.0;
  for (std::size_t k = 0; k < measured.size(); ++k) {
    max_rel = std::max(max_rel, std::abs(measured[k] / expected[k] - 1.0));
    if (k == 0) continue;
    const double want = expected[k] - expected[k - 1];
    const double got = measured[k] - measured[k - 1];
    const double tol = 1e-12 + 3.0 * (noise[k] + noise[k - 1]);
    if (std::abs(want) <= 1e-12) {
      if (std::abs(got) > tol + 1e-9) ++violations;
    } else if (got * (want > 0 ? 1.0 : -1.0) < -tol) {
      ++violations;
    }
  }
  f.estimates.push_back(Estimate{"distance", distance, "m"});
  f.estimates.push_back(Estimate{"projected_extent", measured, "m"});
  f.estimates.push_back(Estimate{"expected_extent", expected, "m"});
  f.estimates.push_back(scalar_estimate("max_relative_error", max_rel, ""));
  f.estimates.push_back(scalar_estimate("monotonicity_violations", violations, ""));
  f.evidence.push_back("segment of " + fmt(width) + " m at " + fmt(depth) +
                       " m behind the screen, approach from " + fmt(opts.shrink_start_m) +
                       " to " + fmt(opts.shrink_end_m) + " m");
  if (std::abs(depth) <= 1e-12) f.notes.push_back("segment on the screen plane: size is constant");
  f.status = violations > 0 ? Status::Fail : Status::Pass;
  if (violations > 0) f.notes.push_back("image size moved against the approach");
  return f;
}

std::vector<Finding> test_stereo_phase(const RigConfig& rig, const FaultSet& faults,
                                       const DiagnosticOptions& opts) {
  std::vector<Finding> out;
  Bench bench(rig, faults, opts.seed, "test_stereo_phase");
  for (std::size_t i = 0; i < rig.screens.size(); ++i) {
    // Disparity signs are trusted once the noise is well under the smaller
    // expected disparity (ipd / 2 for the rear probe).
    Finding f = make_finding("test_stereo_phase", rig.screens[i].name, 0.25 * rig.ipd, "m");
    const ScreenBasis b = screen_basis(rig.screens[i]);
    const Vec3 base = viewing_position(rig, b);
    const double a = plane_distance(b, base);
    const Vec3 c = screen_center(b);
    const Vec3 front = c + 0.5 * a * b.normal;
    const Vec3 behind = c - a * b.normal;
    const Vec3 control = c + 0.25 * b.width * b.right;
    Samples s;
    try {
      s = bench.sample(bench.head_at(base, facing(rig.screens[i])),
                       bench.static_frames(opts), [&](const EyePair& e) {
                         auto du = [&](const Vec3& p) {
                           return bench.seen(i, EyeSide::Left, e, p).u -
                                  bench.seen(i, EyeSide::Right, e, p).u;
                         };
                         return Eigen::Vector3d(du(front), du(behind), du(control));
                       });
    } catch (const GeometryError& e) {
      out.push_back(inconclusive(std::move(f), std::string("probe not displayable: ") + e.what()));
      continue;
    }
    f.estimates.push_back(scalar_estimate("disparity_front", s.mean(0), "m"));
    f.estimates.push_back(scalar_estimate("disparity_behind", s.mean(1), "m"));
    f.estimates.push_back(scalar_estimate("disparity_control", s.mean(2), "m"));
    f.evidence.push_back("probes at " + fmt(0.5 * a) + " m in front of and " + fmt(a) +
                         " m behind the screen, viewed from " + fmt(base));
    f.uncertainty = 3.0 * std::max(s.stderr_(0), s.stderr_(1));
    if (f.uncertainty >= f.threshold || std::abs(s.mean(0)) <= f.uncertainty ||
        std::abs(s.mean(1)) <= f.uncertainty) {
      out.push_back(inconclusive(std::move(f), "disparity below the noise level"));
      continue;
    }
    const bool front_ok = s.mean(0) > 0.0;
    const bool behind_ok = s.mean(1) < 0.0;
    f.estimates.push_back(scalar_estimate("eyes_reversed", !front_ok && !behind_ok, ""));
    if (front_ok && behind_ok) {
      f.status = Status::Pass;
    } else if (!front_ok && !behind_ok) {
      f.status = Status::Fail;
      f.notes.push_back("left and right eye views are reversed on " + rig.screens[i].name);
    } else {
      f.status = Status::Fail;
      f.notes.push_back("disparity signs disagree between front and rear probes");
    }
    out.push_back(std::move(f));
  }
  return out;
}

Finding locate_projection_plane(const RigConfig& rig, const FaultSet& faults,
                                std::size_t screen, const DiagnosticOptions& opts) {
  if (screen >= rig.screens.size()) throw ConfigError("locate_projection_plane: screen out of range");
  const ScreenRect& rect = rig.screens[screen];
  Finding f = make_finding("locate_projection_plane", rect.name, opts.plane_threshold_m, "m");
  const ScreenBasis b = screen_basis(rect);
  const ScreenRect believed = believed_screen(rig, faults, screen);
  Bench bench(rig, faults, opts.seed, f.test_name + "/" + rect.name);
  const Quat q = facing(rect);
  const Vec3 c = screen_center(b);
  const double step = 0.0005;
  const double range = 0.5;
  const int n = static_cast<int>(std::lround(2.0 * range / step));

  // Walk the glasses through the screen; the software frustum explodes
  // where the rendered eye crosses the believed plane.
  std::vector<double> fit_a, fit_inv;
  double reference = 0.0;
  std::optional<double> exploded_at;
  for (int k = 0; k <= n; ++k) {
    const double a = range - k * step;
    const EyePair e = bench.rendered(bench.head_at(c + a * b.normal, q));
    const Vec3& eye = rendered_eye_seen_by(bench.fault(screen), EyeSide::Left, e);
    double tan_width = std::numeric_limits<double>::infinity();
    try {
      const FrustumParams fp = offaxis_frustum(eye, believed, 0.1, 100.0);
      tan_width = (fp.right - fp.left) / fp.near;
    } catch (const GeometryError&) {
    }
    if (k == 0) {
      if (!std::isfinite(tan_width)) {
        return inconclusive(std::move(f), "frustum already degenerate at the start of the walk");
      }
      reference = tan_width;
    }
    if (!std::isfinite(tan_width) || tan_width > 100.0 * reference) {
      exploded_at = a;
      break;
    }
    fit_a.push_back(a);
    fit_inv.push_back(b.width / tan_width);
  }
  if (!exploded_at || fit_a.size() < 2) {
    return inconclusive(std::move(f), "no frustum explosion within +/-" + fmt(range) + " m");
  }
  // width / tan_width is the rendered eye's distance to the believed plane,
  // linear in the physical distance; its root is the believed plane.
  Eigen::MatrixXd A(fit_a.size(), 2);
  Eigen::VectorXd y(fit_a.size());
  for (std::size_t k = 0; k < fit_a.size(); ++k) {
    A(k, 0) = fit_a[k];
    A(k, 1) = 1.0;
    y(k) = fit_inv[k];
  }
  const Eigen::Vector2d line = A.colPivHouseholderQr().solve(y);
  const double plane_offset = -line(1) / line(0);

  // Second method: slide a probe through the screen with the eyes fixed.
  // Zero disparity marks the plane the software projects onto, whatever the
  // tracker reports.
  std::optional<double> flat_offset;
  const Vec3 base = c + plane_distance(b, rig.interior_point) * b.normal;
  const EyePair eyes = bench.mean_rendered(bench.head_at(base, q), bench.static_frames(opts)).first;
  double prev_depth = 0.0, prev_du = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double d = -range + k * step;
    const Vec3 p = c + d * b.normal;
    double du = 0.0;
    try {
      du = bench.seen(screen, EyeSide::Left, eyes, p).u - bench.seen(screen, EyeSide::Right, eyes, p).u;
    } catch (const GeometryError&) {
      continue;
    }
    if (du == 0.0) {
      flat_offset = d;
      break;
    }
    if (k > 0 && (du > 0.0) != (prev_du > 0.0)) {
      flat_offset = prev_depth + (d - prev_depth) * prev_du / (prev_du - du);
      break;
    }
    prev_depth = d;
    prev_du = du;
  }

  f.estimates.push_back(scalar_estimate("plane_offset", plane_offset, "m"));
  f.estimates.push_back(scalar_estimate("explosion_position", *exploded_at, "m"));
  if (flat_offset) f.estimates.push_back(scalar_estimate("flat_offset", *flat_offset, "m"));
  f.evidence.push_back("glasses walked from +" + fmt(range) + " to -" + fmt(range) +
                       " m along the normal in " + fmt(step) + " m steps");
  f.uncertainty = step;
  f.status = Status::Pass;
  if (std::abs(plane_offset) > f.threshold) {
    f.status = Status::Fail;
    f.notes.push_back("frustum exploded " + fmt(plane_offset) + " m from the physical screen");
  }
  if (flat_offset && std::abs(*flat_offset) > f.threshold) {
    f.status = Status::Fail;
    f.notes.push_back("zero disparity " + fmt(*flat_offset) +
                      " m from the screen: software screen plane misplaced");
  } else if (flat_offset && std::abs(plane_offset) > f.threshold) {
    f.notes.push_back("zero disparity lies on the screen: error is in the tracked position");
  }
  if (!flat_offset) f.notes.push_back("no zero-disparity crossing found");
  return f;
}

namespace {

// Downhill simplex over R^3.
Vec3 nelder_mead(const std::function<double(const Vec3&)>& fn, const Vec3& start,
                 double scale, int max_iterations, double tolerance) {
  std::array<Vec3, 4> x{start, start, start, start};
  for (int k = 0; k < 3; ++k) x[k + 1](k) += scale;
  std::array<double, 4> fx{};
  for (int k = 0; k < 4; ++k) fx[k] = fn(x[k]);
  for (int iter = 0; iter < max_iterations; ++iter) {
    std::array<int, 4> order{0, 1, 2, 3};
    std::sort(order.begin(), order.end(), [&](int a, int b) { return fx[a] < fx[b]; });
    std::array<Vec3, 4> xs;
    std::array<double, 4> fs;
    for (int k = 0; k < 4; ++k) {
      xs[k] = x[order[k]];
      fs[k] = fx[order[k]];
    }
    x = xs;
    fx = fs;
    double size = 0.0;
    for (int k = 1; k < 4; ++k) size = std::max(size, (x[k] - x[0]).norm());
    if (size < tolerance) break;

    const Vec3 centroid = (x[0] + x[1] + x[2]) / 3.0;
    const Vec3 reflected = centroid + (centroid - x[3]);
    const double fr = fn(reflected);
    if (fr < fx[0]) {
      const Vec3 expanded = centroid + 2.0 * (centroid - x[3]);
      const double fe = fn(expanded);
      if (fe < fr) {
        x[3] = expanded;
        fx[3] = fe;
      } else {
        x[3] = reflected;
        fx[3] = fr;
      }
    } else if (fr < fx[2]) {
      x[3] = reflected;
      fx[3] = fr;
    } else {
      const bool outside = fr < fx[3];
      const Vec3 contracted =
          outside ? centroid + 0.5 * (reflected - centroid) : centroid + 0.5 * (x[3] - centroid);
      const double fc = fn(contracted);
      if (fc < std::min(fr, fx[3])) {
        x[3] = contracted;
        fx[3] = fc;
      } else {
        for (int k = 1; k < 4; ++k) {
          x[k] = x[0] + 0.5 * (x[k] - x[0]);
          fx[k] = fn(x[k]);
        }
      }
    }
  }
  const auto best = std::min_element(fx.begin(), fx.end()) - fx.begin();
  return x[static_cast<std::size_t>(best)];
}

// Angle between the planes through `eye` and each of two image lines.
double bend_angle(const Vec3& eye, const Vec3& a0, const Vec3& a1, const Vec3& b0,
                  const Vec3& b1) {
  const Vec3 n1 = (a0 - eye).cross(a1 - eye);
  const Vec3 n2 = (b0 - eye).cross(b1 - eye);
  return std::atan2(n1.cross(n2).norm(), std::abs(n1.dot(n2)));
}

}  // namespace

Finding test_line_bend(const RigConfig& rig, const FaultSet& faults,
                       std::pair<std::size_t, std::size_t> screens,
                       const DiagnosticOptions& opts) {
  const auto [i, j] = screens;
  if (i >= rig.screens.size() || j >= rig.screens.size() || i == j) {
    throw ConfigError("test_line_bend: invalid screen pair");
  }
  Finding f = make_finding("test_line_bend",
                           rig.screens[i].name + "|" + rig.screens[j].name,
                           opts.bend_threshold_deg, "deg");
  const auto edge = shared_edge(rig, i, j);
  if (!edge) return inconclusive(std::move(f), "screens do not share an edge");
  const ScreenBasis bi = screen_basis(rig.screens[i]);
  const ScreenBasis bj = screen_basis(rig.screens[j]);
  Bench bench(rig, faults, opts.seed, f.test_name + "/" + f.subject);

  const Pose head = bench.head_at(rig.interior_point, facing(rig.screens[i]));
  const EyePair truth = bench.truth(head);
  const auto [rendered, eye_err] = bench.mean_rendered(head, bench.static_frames(opts));

  // Segments cross the shared edge: one half lies behind screen i only and
  // is seen through it, the other half behind screen j.
  const Vec3 along = (edge->second - edge->first).normalized();
  const Vec3 across = (bj.normal - bi.normal).normalized();
  struct Seg {
    Vec3 point;
    Vec3 dir;
  };
  std::vector<Seg> segs;
  const std::array<double, 3> at{0.45, 0.6, 0.3};
  const std::array<double, 3> tilt{0.3, -0.4, 0.0};
  for (int k = 0; k < 3; ++k) {
    segs.push_back({edge->first + at[k] * (edge->second - edge->first),
                    (across + tilt[k] * along).normalized()});
  }

  // Displayed image lines per segment and viewer: two points on each screen.
  struct Images {
    std::array<Vec3, 2> on_i;
    std::array<Vec3, 2> on_j;
  };
  std::vector<std::pair<EyeSide, Images>> lines;
  try {
    for (const Seg& s : segs) {
      for (EyeSide viewer : {EyeSide::Left, EyeSide::Right}) {
        Images im;
        im.on_i = {bench.seen_world(i, viewer, rendered, s.point + 0.3 * s.dir),
                   bench.seen_world(i, viewer, rendered, s.point + 0.8 * s.dir)};
        im.on_j = {bench.seen_world(j, viewer, rendered, s.point - 0.3 * s.dir),
                   bench.seen_world(j, viewer, rendered, s.point - 0.8 * s.dir)};
        lines.emplace_back(viewer, im);
      }
    }
  } catch (const GeometryError& e) {
    return inconclusive(std::move(f), std::string("segment not displayable: ") + e.what());
  }

  auto bend_from = [&](std::size_t idx, const Vec3& offset) {
    const auto& [viewer, im] = lines[idx];
    const Vec3 eye = (viewer == EyeSide::Left ? truth.left : truth.right) + offset;
    return bend_angle(eye, im.on_i[0], im.on_i[1], im.on_j[0], im.on_j[1]);
  };
  double bend_max = 0.0;
  for (std::size_t k = 0; k < lines.size(); ++k) bend_max = std::max(bend_max, bend_from(k, Vec3::Zero()));
  const double bend_primary = std::max(bend_from(0, Vec3::Zero()), bend_from(1, Vec3::Zero()));

  // Viewing offset that straightens every segment for both eyes.
  auto objective = [&](const Vec3& offset) {
    double sum = 0.0;
    for (std::size_t k = 0; k < lines.size(); ++k) sum += std::pow(bend_from(k, offset), 2);
    return sum;
  };
  Vec3 best = Vec3::Zero();
  double best_cost = objective(best);
  std::vector<Vec3> starts{Vec3::Zero()};
  for (int m = 0; m < 8; ++m) {
    starts.emplace_back(m & 1 ? 0.2 : -0.2, m & 2 ? 0.2 : -0.2, m & 4 ? 0.2 : -0.2);
  }
  for (const Vec3& s : starts) {
    const Vec3 x = nelder_mead(objective, s, 0.05, 200, 1e-7);
    const double c = objective(x);
    if (c < best_cost) {
      best_cost = c;
      best = x;
    }
  }
  for (int polish = 0; polish < 5; ++polish) {
    const Vec3 x = nelder_mead(objective, best, 1e-3, 200, 1e-9);
    const double c = objective(x);
    if (!(c < best_cost)) break;
    best_cost = c;
    best = x;
  }

  // A single segment only constrains the eye to the plane containing it.
  const Vec3 null_a = (segs[0].point - rendered.left).normalized();
  const Vec3 null_b = (segs[0].dir - segs[0].dir.dot(null_a) * null_a).normalized();

  f.estimates.push_back(scalar_estimate("bend_angle", bend_max * kDeg, "deg"));
  f.estimates.push_back(scalar_estimate("single_segment_bend", bend_primary * kDeg, "deg"));
  f.estimates.push_back(vector_estimate("viewing_offset", best, "m"));
  f.estimates.push_back(scalar_estimate("viewing_offset_magnitude", best.norm(), "m"));
  f.estimates.push_back(vector_estimate("single_segment_unobservable_a", null_a, ""));
  f.estimates.push_back(vector_estimate("single_segment_unobservable_b", null_b, ""));
  f.evidence.push_back(std::to_string(segs.size()) + " segments across the shared edge, viewed from " +
                       fmt(rig.interior_point));
  f.notes.push_back("one segment leaves the offset unobservable within the plane spanned by " +
                    fmt(null_a) + " and " + fmt(null_b));
  const double distance = (segs[0].point - rig.interior_point).norm();
  f.uncertainty = 3.0 * eye_err / distance * kDeg;
  if (f.uncertainty >= f.threshold) {
    return inconclusive(std::move(f), "tracker noise too large for the bend measurement");
  }
  f.status = bend_max * kDeg > f.threshold ? Status::Fail : Status::Pass;
  if (f.status == Status::Fail) {
    f.notes.push_back("lines bend at the edge; viewing offset " + fmt(best) + " straightens them");
  }
  return f;
}

Finding test_horizon(const RigConfig& rig, const FaultSet& faults,
                     const DiagnosticOptions& opts) {
  Finding f = make_finding("test_horizon", "", opts.horizon_tolerance_m, "m");
  const auto primary = primary_screen(rig);
  if (!primary) return inconclusive(std::move(f), "rig has no vertical screen");
  const std::size_t i = *primary;
  f.subject = rig.screens[i].name;
  const ScreenBasis b = screen_basis(rig.screens[i]);
  Bench bench(rig, faults, opts.seed, f.test_name);
  const Quat q = facing(rig.screens[i]);
  const Vec3 base = viewing_position(rig, b);

  std::vector<double> heights, horizon, dv;
  double noise = 0.0;
  try {
    for (int k = 0; k <= 6; ++k) {
      Vec3 center = base;
      center.y() = 1.2 + 0.1 * k;
      Vec3 ground = center - 1e12 * b.normal;
      ground.y() = 0.0;
      const Pose head = bench.head_at(center, q);
      const Samples s = bench.sample(head, bench.static_frames(opts), [&](const EyePair& e) {
        return Eigen::Vector2d(bench.seen_world(i, EyeSide::Left, e, ground).y(),
                               bench.seen_world(i, EyeSide::Right, e, ground).y());
      });
      const EyePair truth = bench.truth(head);
      heights.push_back(0.5 * (truth.left.y() + truth.right.y()));
      horizon.push_back(0.5 * (s.mean(0) + s.mean(1)));
      dv.push_back(s.mean(0) - s.mean(1));
      noise = std::max(noise, s.stderr_.maxCoeff());
    }
  } catch (const GeometryError& e) {
    return inconclusive(std::move(f), std::string("ground plane not displayable: ") + e.what());
  }
  // horizon = scale * eye_height + offset
  const double n = static_cast<double>(heights.size());
  double mh = 0.0, mz = 0.0;
  for (std::size_t k = 0; k < heights.size(); ++k) {
    mh += heights[k] / n;
    mz += horizon[k] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < heights.size(); ++k) {
    sxy += (heights[k] - mh) * (horizon[k] - mz);
    sxx += (heights[k] - mh) * (heights[k] - mh);
  }
  const double scale = sxy / sxx;
  double offset = 0.0, max_dv = 0.0;
  for (std::size_t k = 0; k < heights.size(); ++k) {
    offset += (horizon[k] - heights[k]) / n;
    max_dv = std::max(max_dv, std::abs(dv[k]));
  }
  f.estimates.push_back(scalar_estimate("vertical_offset", offset, "m"));
  f.estimates.push_back(scalar_estimate("vertical_scale", scale, ""));
  f.estimates.push_back(scalar_estimate("inter_eye_dv", max_dv, "m"));
  f.estimates.push_back(Estimate{"eye_height", heights, "m"});
  f.estimates.push_back(Estimate{"horizon_height", horizon, "m"});
  f.evidence.push_back("ground plane horizon observed at eye heights 1.2 to 1.8 m");
  f.uncertainty = 3.0 * noise;
  if (f.uncertainty >= f.threshold) {
    return inconclusive(std::move(f), "tracker noise too large for the horizon check");
  }
  f.status = Status::Pass;
  if (std::abs(offset) > f.threshold) {
    f.status = Status::Fail;
    f.notes.push_back("horizon sits " + fmt(offset) + " m from eye height");
  }
  if (std::abs(scale - 1.0) > opts.horizon_scale_tolerance) {
    f.status = Status::Fail;
    f.notes.push_back("horizon does not follow eye height (scale " + fmt(scale) + ")");
  }
  if (max_dv > f.threshold) {
    f.status = Status::Fail;
    f.notes.push_back("horizon differs between the eyes by " + fmt(max_dv) + " m");
  }
  return f;
}

double fitted_phase_lag(const std::vector<double>& times,
                        const std::vector<double>& values, double frequency_hz) {
  if (times.size() != values.size() || times.size() < 3) {
    throw ConfigError("fitted_phase_lag: need at least three samples");
  }
  const double w = 2.0 * kPi * frequency_hz;
  Eigen::MatrixXd A(times.size(), 3);
  Eigen::VectorXd y(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    A(k, 0) = 1.0;
    A(k, 1) = std::sin(w * times[k]);
    A(k, 2) = std::cos(w * times[k]);
    y(k) = values[k];
  }
  const Eigen::Vector3d c = A.colPivHouseholderQr().solve(y);
  // A sin(w (t - L)) = A cos(wL) sin(wt) - A sin(wL) cos(wt)
  return wrap_angle(std::atan2(-c(2), c(1)));
}

double cross_correlation_lag(const std::vector<double>& reference,
                             const std::vector<double>& response, int max_lag) {
  const int n = static_cast<int>(std::min(reference.size(), response.size()));
  max_lag = std::min(max_lag, n - 2);
  if (max_lag < 0) throw ConfigError("cross_correlation_lag: series too short");
  std::vector<double> corr(static_cast<std::size_t>(max_lag) + 1);
  for (int lag = 0; lag <= max_lag; ++lag) {
    const int m = n - lag;
    double ma = 0.0, mb = 0.0;
    for (int k = 0; k < m; ++k) {
      ma += reference[k];
      mb += response[k + lag];
    }
    ma /= m;
    mb /= m;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (int k = 0; k < m; ++k) {
      const double da = reference[k] - ma;
      const double db = response[k + lag] - mb;
      sab += da * db;
      saa += da * da;
      sbb += db * db;
    }
    corr[lag] = saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
  }
  const int peak = static_cast<int>(std::max_element(corr.begin(), corr.end()) - corr.begin());
  if (peak == 0 || peak == max_lag) return peak;
  const double l = corr[peak - 1], c = corr[peak], r = corr[peak + 1];
  const double denom = l - 2.0 * c + r;
  return denom < 0.0 ? peak + 0.5 * (l - r) / denom : peak;
}

namespace {

// Wand and head histories for the latency and attachment checks.
struct MotionRig {
  std::size_t screen;
  ScreenBasis basis;
  Pose head;
  Vec3 wand_center;
};

std::optional<MotionRig> motion_setup(const Bench& bench) {
  const auto primary = primary_screen(bench.rig());
  if (!primary) return std::nullopt;
  MotionRig m;
  m.screen = *primary;
  m.basis = screen_basis(bench.rig().screens[m.screen]);
  const Vec3 c = screen_center(m.basis);
  m.head = bench.head_at(viewing_position(bench.rig(), m.basis), facing(bench.rig().screens[m.screen]));
  m.wand_center = c + 0.8 * m.basis.normal - 0.3 * m.basis.up;
  return m;
}

// Displayed horizontal image position of the wand marker, one value per
// frame at t0 + k / rate.
std::vector<double> marker_track(Bench& bench, const MotionRig& m,
                                 const std::function<Vec3(double)>& wand, double t0,
                                 int frames, std::vector<double>* times) {
  const RigConfig& rig = bench.rig();
  const FaultSet& faults = bench.faults();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(frames));
  for (int k = 0; k < frames; ++k) {
    const double t = t0 + k / rig.frame_rate_hz;
    const Pose head = tracked_pose(rig, faults, [&](double) { return m.head; }, t,
                                   bench.noise().stream(Sensor::Head));
    const Pose reported_wand = tracked_pose(
        rig, faults,
        [&](double s) {
          Pose p;
          p.position = wand(s);
          return p;
        },
        t, bench.noise().stream(Sensor::Wand));
    const EyePair eyes = derive_eyes(head, rig.ipd, rig.glasses_offset);
    out.push_back(bench.seen(m.screen, EyeSide::Left, eyes, reported_wand.position).u);
    if (times) times->push_back(t);
  }
  return out;
}

}  // namespace

Finding estimate_latency_phase(const RigConfig& rig, const FaultSet& faults,
                               const DiagnosticOptions& opts) {
  Finding f = make_finding("estimate_latency_phase", "", opts.latency_threshold_s, "s");
  Bench bench(rig, faults, opts.seed, f.test_name);
  const auto m = motion_setup(bench);
  if (!m) return inconclusive(std::move(f), "rig has no vertical screen");
  f.subject = rig.screens[m->screen].name;
  const double t0 = 2.0;
  const Vec3 axis = m->basis.right;
  const double amp = opts.wag_amplitude_m;

  auto lag_at = [&](double hz) {
    const double duration = std::max(3.0 / hz, 1.0);
    const int frames = static_cast<int>(std::ceil(duration * rig.frame_rate_hz));
    std::vector<double> times;
    const auto u = marker_track(
        bench, *m, [&](double s) { return m->wand_center + amp * std::sin(2.0 * kPi * hz * s) * axis; },
        t0, frames, &times);
    return fitted_phase_lag(times, u, hz);
  };

  std::optional<double> latency;
  double f_star = 0.0, phase_at_star = 0.0;
  try {
    // Sweep up in frequency, unwrapping the lag, until it reaches half a cycle.
    double prev_f = opts.min_wag_hz;
    double prev_wrapped = lag_at(prev_f);
    double prev_unwrapped = prev_wrapped;
    for (double hz = opts.min_wag_hz + opts.wag_sweep_step_hz; hz <= opts.max_wag_hz + 1e-9;
         hz += opts.wag_sweep_step_hz) {
      const double wrapped = lag_at(hz);
      const double unwrapped = prev_unwrapped + wrap_angle(wrapped - prev_wrapped);
      if (unwrapped >= kPi) {
        double lo = prev_f, hi = hz;
        double lo_wrapped = prev_wrapped, lo_unwrapped = prev_unwrapped;
        while (hi - lo > opts.bisection_width_hz) {
          const double mid = 0.5 * (lo + hi);
          const double w = lag_at(mid);
          const double uw = lo_unwrapped + wrap_angle(w - lo_wrapped);
          if (uw >= kPi) {
            hi = mid;
          } else {
            lo = mid;
            lo_wrapped = w;
            lo_unwrapped = uw;
          }
        }
        f_star = 0.5 * (lo + hi);
        phase_at_star = lag_at(f_star);
        if (std::abs(wrap_angle(phase_at_star - kPi)) <= opts.phase_tolerance_rad) {
          latency = 1.0 / (2.0 * f_star);
        } else {
          f.notes.push_back("phase at the opposition frequency is " + fmt(phase_at_star) + " rad");
        }
        break;
      }
      prev_f = hz;
      prev_wrapped = wrapped;
      prev_unwrapped = unwrapped;
    }
  } catch (const GeometryError& e) {
    return inconclusive(std::move(f), std::string("wand not displayable: ") + e.what());
  }

  // Cross-correlation against an aperiodic wand motion.
  auto multisine = [&](double s) {
    return amp * (0.5 * std::sin(2.0 * kPi * 0.37 * s) + 0.3 * std::sin(2.0 * kPi * 1.13 * s + 1.0) +
                  0.2 * std::sin(2.0 * kPi * 2.9 * s + 2.0));
  };
  const int frames = static_cast<int>(20.0 * rig.frame_rate_hz);
  std::vector<double> times;
  const auto response = marker_track(
      bench, *m, [&](double s) { return m->wand_center + multisine(s) * axis; }, t0 + 0.5, frames, &times);
  std::vector<double> reference;
  for (double t : times) reference.push_back(multisine(t));
  const double xcorr =
      cross_correlation_lag(reference, response, static_cast<int>(2.0 * rig.frame_rate_hz)) /
      rig.frame_rate_hz;

  f.estimates.push_back(scalar_estimate("xcorr_latency", xcorr, "s"));
  f.evidence.push_back("wand wagged " + fmt(amp) + " m along the screen, " + fmt(opts.min_wag_hz) +
                       " to " + fmt(opts.max_wag_hz) + " Hz");
  if (latency) {
    f.estimates.insert(f.estimates.begin(), scalar_estimate("latency", *latency, "s"));
    f.estimates.push_back(scalar_estimate("opposition_frequency", f_star, "Hz"));
    f.estimates.push_back(scalar_estimate("phase_at_opposition", phase_at_star, "rad"));
    f.uncertainty = *latency * 0.5 * opts.bisection_width_hz / f_star;
    f.status = *latency > f.threshold ? Status::Fail : Status::Pass;
    if (f.status == Status::Fail) {
      f.notes.push_back("marker moves opposite the wand at " + fmt(f_star) + " Hz");
    }
    return f;
  }
  f.estimates.insert(f.estimates.begin(), scalar_estimate("latency", xcorr, "s"));
  f.uncertainty = 0.5 / rig.frame_rate_hz;
  if (xcorr < f.threshold) {
    f.status = Status::Pass;
    f.notes.push_back("no phase opposition up to " + fmt(opts.max_wag_hz) +
                      " Hz; latency below the wag detection floor");
    return f;
  }
  return inconclusive(std::move(f), "no phase opposition found although the cross-correlation lag is " +
                                        fmt(xcorr) + " s");
}

Finding test_wand_attachment(const RigConfig& rig, const FaultSet& faults,
                             const DiagnosticOptions& opts) {
  Finding f = make_finding("test_wand_attachment", "", opts.attachment_threshold_m, "m");
  Bench bench(rig, faults, opts.seed, f.test_name);
  const auto m = motion_setup(bench);
  if (!m) return inconclusive(std::move(f), "rig has no vertical screen");
  f.subject = rig.screens[m->screen].name;
  const double radius = 0.3, speed = 0.5, t0 = 2.0;
  const double w = speed / radius;
  const Vec3 eu = m->basis.right, ev = m->basis.up;
  auto wand = [&](double s) {
    return Vec3(m->wand_center + radius * (std::cos(w * s) * eu + std::sin(w * s) * ev));
  };
  const EyePair truth = bench.truth(m->head);
  const int frames = static_cast<int>(10.0 * rig.frame_rate_hz);

  Vec3 mean_err = Vec3::Zero();
  double max_dist = 0.0, along = 0.0;
  std::vector<Vec3> errors;
  try {
    for (int k = 0; k < frames; ++k) {
      const double t = t0 + k / rig.frame_rate_hz;
      const Pose head = tracked_pose(rig, faults, [&](double) { return m->head; }, t,
                                     bench.noise().stream(Sensor::Head));
      const Pose reported = tracked_pose(
          rig, faults,
          [&](double s) {
            Pose p;
            p.position = wand(s);
            return p;
          },
          t, bench.noise().stream(Sensor::Wand));
      const EyePair eyes = derive_eyes(head, rig.ipd, rig.glasses_offset);
      const Vec3 wl = bench.seen_world(m->screen, EyeSide::Left, eyes, reported.position);
      const Vec3 wr = bench.seen_world(m->screen, EyeSide::Right, eyes, reported.position);
      const Vec3 err = triangulate(truth.left, wl, truth.right, wr) - wand(t);
      const Vec3 tangent = -std::sin(w * t) * eu + std::cos(w * t) * ev;
      errors.push_back(err);
      mean_err += err / frames;
      max_dist = std::max(max_dist, err.norm());
      along += -err.dot(tangent) / frames;
    }
  } catch (const GeometryError& e) {
    return inconclusive(std::move(f), std::string("wand not displayable: ") + e.what());
  }
  double scatter = 0.0;
  for (const Vec3& e : errors) scatter += (e - mean_err).squaredNorm() / (3.0 * frames);
  scatter = std::sqrt(scatter);

  f.estimates.push_back(scalar_estimate("max_distance", max_dist, "m"));
  f.estimates.push_back(scalar_estimate("along_track_lag", along, "m"));
  f.estimates.push_back(vector_estimate("mean_offset", mean_err, "m"));
  f.estimates.push_back(scalar_estimate("scatter", scatter, "m"));
  f.evidence.push_back("wand circled at " + fmt(speed) + " m/s, radius " + fmt(radius) +
                       " m; marker triangulated from both eyes");
  f.uncertainty = 3.0 * scatter / std::sqrt(static_cast<double>(frames));
  if (f.uncertainty >= f.threshold) {
    return inconclusive(std::move(f), "tracker noise too large for the attachment check");
  }
  const double bias = std::max(std::abs(along), mean_err.norm());
  f.status = bias > f.threshold ? Status::Fail : Status::Pass;
  if (std::abs(along) > f.threshold) f.notes.push_back("virtual marker trails the wand by " + fmt(along) + " m");
  if (mean_err.norm() > f.threshold) f.notes.push_back("virtual marker offset from the wand by " + fmt(mean_err));
  return f;
}

Finding estimate_jitter(const RigConfig& rig, const FaultSet& faults,
                        const DiagnosticOptions& opts) {
  Finding f = make_finding("estimate_jitter", "", opts.jitter_threshold_m, "m");
  const auto primary = primary_screen(rig);
  if (!primary) return inconclusive(std::move(f), "rig has no vertical screen");
  const std::size_t i = *primary;
  f.subject = rig.screens[i].name;
  const ScreenBasis b = screen_basis(rig.screens[i]);
  Bench bench(rig, faults, opts.seed, f.test_name);
  const auto probes = eye_probes(b);
  const int frames = static_cast<int>(10.0 * rig.frame_rate_hz) + 1;
  Samples s;
  try {
    s = bench.sample(bench.head_at(viewing_position(rig, b), facing(rig.screens[i])), frames,
                     [&](const EyePair& e) {
                       return Eigen::VectorXd(reconstruct_eye(bench, i, EyeSide::Left, e, probes));
                     });
  } catch (const GeometryError& e) {
    return inconclusive(std::move(f), std::string("probe not displayable: ") + e.what());
  }
  const Vec3 sigma = s.stddev.head<3>();
  f.estimates.push_back(scalar_estimate("sigma", std::sqrt(sigma.squaredNorm() / 3.0), "m"));
  f.estimates.push_back(vector_estimate("sigma_per_axis", sigma, "m"));
  f.evidence.push_back(std::to_string(frames) + " frames of a stationary head; eye recovered from " +
                       std::to_string(probes.size()) + " probes");
  f.uncertainty = sigma.maxCoeff() / std::sqrt(2.0 * (frames - 1));
  f.status = sigma.maxCoeff() > f.threshold ? Status::Fail : Status::Pass;
  if (f.status == Status::Fail) f.notes.push_back("tracked position jitters by " + fmt(sigma.maxCoeff()) + " m");
  return f;
}

Finding test_fixed_marker(const RigConfig& rig, const FaultSet& faults,
                          const DiagnosticOptions& opts) {
  Finding f = make_finding("test_fixed_marker", "", opts.marker_threshold_m, "m");
  const auto primary = primary_screen(rig);
  if (!primary) return inconclusive(std::move(f), "rig has no vertical screen");
  const std::size_t i = *primary;
  f.subject = rig.screens[i].name;
  const ScreenRect& rect = rig.screens[i];
  const ScreenBasis b = screen_basis(rect);
  Bench bench(rig, faults, opts.seed, f.test_name);

  const Vec3 marker(rig.interior_point.x(), 1.524, rig.interior_point.z());
  const Pose head = bench.head_at(marker + 0.75 * b.normal, facing(rect));
  const EyePair truth = bench.truth(head);
  Samples s;
  try {
    s = bench.sample(head, bench.static_frames(opts), [&](const EyePair& e) {
      Eigen::VectorXd v(12);
      v << bench.seen_world(i, EyeSide::Left, e, marker), bench.seen_world(i, EyeSide::Right, e, marker),
          e.left, e.right;
      return v;
    });
  } catch (const GeometryError& e) {
    return inconclusive(std::move(f), std::string("marker not displayable: ") + e.what());
  }
  const Vec3 wl = s.mean.head<3>(), wr = s.mean.segment<3>(3);
  const Vec3 apparent = triangulate(truth.left, wl, truth.right, wr) - marker;

  // Offset that makes both displayed images line up with the physical
  // marker from the eyes: the tracking error at this viewpoint.
  auto image = [&](const Vec3& w) {
    const ScreenPoint p = project_point(truth.left, rect, w);
    return to_screen_point(rect, b, p.u, p.v);
  };
  const std::vector<calib::Observation> obs{{truth.left, i, image(wl), "marker"},
                                            {truth.right, i, image(wr), "marker"}};
  const std::vector<calib::Target> targets{{"marker", marker}};
  Vec3 error;
  try {
    error = -calib::line_of_sight_solve(obs, targets, rig).offset;
  } catch (const calib::UnobservableError& e) {
    return inconclusive(std::move(f), e.what());
  }
  f.estimates.push_back(vector_estimate("tracking_error", error, "m"));
  f.estimates.push_back(scalar_estimate("tracking_error_magnitude", error.norm(), "m"));
  f.estimates.push_back(vector_estimate("apparent_displacement", apparent, "m"));
  f.evidence.push_back("marker at " + fmt(marker) + " viewed from " + fmt(marker + 0.75 * b.normal));
  f.uncertainty = 3.0 * s.stderr_.tail<6>().maxCoeff();
  if (f.uncertainty >= f.threshold) {
    return inconclusive(std::move(f), "tracker noise too large for the marker check");
  }
  f.status = error.norm() > f.threshold ? Status::Fail : Status::Pass;
  if (f.status == Status::Fail) {
    f.notes.push_back("virtual marker drifts off the physical marker; tracking error " + fmt(error));
  }
  return f;
}

Finding test_edge_match(const RigConfig& rig, const FaultSet& faults,
                        std::pair<std::size_t, std::size_t> screens,
                        const DiagnosticOptions& opts) {
  const auto [i, j] = screens;
  if (i >= rig.screens.size() || j >= rig.screens.size() || i == j) {
    throw ConfigError("test_edge_match: invalid screen pair");
  }
  Finding f = make_finding("test_edge_match", rig.screens[i].name + "|" + rig.screens[j].name,
                           opts.edge_threshold_m, "m");
  const auto edge = shared_edge(rig, i, j);
  if (!edge) return inconclusive(std::move(f), "screens do not share an edge");
  Bench bench(rig, faults, opts.seed, f.test_name + "/" + f.subject);
  const Pose head = bench.head_at(rig.interior_point, Quat::Identity());
  const auto [eyes, eye_err] = bench.mean_rendered(head, bench.static_frames(opts));
  (void)eye_err;
  double max_gap = 0.0;
  Vec3 worst = edge->first;
  const int probes = 31;
  try {
    for (int k = 0; k < probes; ++k) {
      const Vec3 p = edge->first + (edge->second - edge->first) * (double(k) / (probes - 1));
      const double gap = (bench.seen_world(i, EyeSide::Left, eyes, p) -
                          bench.seen_world(j, EyeSide::Left, eyes, p)).norm();
      if (gap > max_gap) {
        max_gap = gap;
        worst = p;
      }
    }
  } catch (const GeometryError& e) {
    return inconclusive(std::move(f), std::string("edge not displayable: ") + e.what());
  }
  f.estimates.push_back(scalar_estimate("max_gap", max_gap, "m"));
  f.estimates.push_back(vector_estimate("worst_point", worst, "m"));
  f.evidence.push_back(std::to_string(probes) + " probes along the shared edge");
  f.status = max_gap > f.threshold ? Status::Fail : Status::Pass;
  if (f.status == Status::Fail) f.notes.push_back("images fail to meet at the edge by " + fmt(max_gap) + " m");
  return f;
}

DiagnosticReport run_suite(const RigConfig& rig, const FaultSet& faults,
                           const DiagnosticOptions& opts) {
  rig.validate();
  faults.validate(rig);
  DiagnosticReport report;
  report.rig_digest = io::rig_digest(rig);
  report.faults_digest = io::faults_digest(faults);
  report.seed = opts.seed;
  auto& out = report.findings;
  out.push_back(test_parallax_orientation(rig, faults, opts));
  out.push_back(test_shrink(rig, faults, opts));
  out.push_back(test_horizon(rig, faults, opts));
  const auto pairs = adjacent_pairs(rig);
  if (const auto p = primary_screen(rig)) {
    for (const auto& [a, b] : pairs) {
      const std::size_t other = a == *p ? b : (b == *p ? a : rig.screens.size());
      if (other == rig.screens.size()) continue;
      if (std::abs(screen_basis(rig.screens[other]).normal.y()) >= 0.5) continue;
      out.push_back(test_line_bend(rig, faults, {*p, other}, opts));
      break;
    }
  }
  for (auto& f : test_stereo_phase(rig, faults, opts)) out.push_back(std::move(f));
  for (std::size_t i = 0; i < rig.screens.size(); ++i) {
    out.push_back(locate_projection_plane(rig, faults, i, opts));
  }
  out.push_back(estimate_latency_phase(rig, faults, opts));
  out.push_back(test_wand_attachment(rig, faults, opts));
  for (const auto& pair : pairs) out.push_back(test_edge_match(rig, faults, pair, opts));
  out.push_back(test_fixed_marker(rig, faults, opts));
  out.push_back(estimate_jitter(rig, faults, opts));
  return report;
}

}  // namespace cavecheck::diagnostics
