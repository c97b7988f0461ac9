#include "cavecheck/geom.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace cavecheck {

void require_finite(const Vec3& v, const char* what) {
  if (!v.allFinite()) {
    throw ConfigError(std::string(what) + ": non-finite component");
  }
}

void validate(const Pose& pose) {
  require_finite(pose.position, "pose position");
  if (std::abs(pose.orientation.norm() - 1.0) > 1e-9) {
    throw ConfigError("pose orientation is not a unit quaternion");
  }
}

ScreenBasis screen_basis(const ScreenRect& s) {
  require_finite(s.lower_left, "screen lower_left");
  require_finite(s.lower_right, "screen lower_right");
  require_finite(s.upper_left, "screen upper_left");
  const Vec3 across = s.lower_right - s.lower_left;
  const Vec3 along = s.upper_left - s.lower_left;
  const double w = across.norm();
  const double h = along.norm();
  if (w <= 0.0 || h <= 0.0) {
    throw ConfigError("screen '" + s.name + "': degenerate corners");
  }
  if (std::abs(across.dot(along)) > 1e-9 * w * h) {
    throw ConfigError("screen '" + s.name + "': edges are not perpendicular");
  }
  if (s.pixels_w <= 0 || s.pixels_h <= 0) {
    throw ConfigError("screen '" + s.name + "': pixel counts must be positive");
  }
  ScreenBasis b;
  b.right = across / w;
  b.up = along / h;
  b.normal = b.right.cross(b.up).normalized();
  b.width = w;
  b.height = h;
  b.origin = s.lower_left;
  return b;
}

double plane_distance(const ScreenBasis& basis, const Vec3& p) {
  return (p - basis.origin).dot(basis.normal);
}

ScreenRect shifted_along_normal(const ScreenRect& s, double offset) {
  if (offset == 0.0) return s;
  const Vec3 n = screen_basis(s).normal * offset;
  ScreenRect out = s;
  out.lower_left += n;
  out.lower_right += n;
  out.upper_left += n;
  return out;
}

ScreenPoint to_screen_point(const ScreenRect& s, const ScreenBasis& basis,
                            double u, double v) {
  return ScreenPoint{u, v, u / basis.width * s.pixels_w,
                     v / basis.height * s.pixels_h};
}

Vec3 screen_to_world(const ScreenRect& s, const ScreenPoint& sp) {
  const ScreenBasis b = screen_basis(s);
  return b.origin + sp.u * b.right + sp.v * b.up;
}

EyePair derive_eyes(const Pose& head, double ipd, const Vec3& glasses_offset) {
  if (!(ipd > 0.0)) throw ConfigError("ipd must be positive");
  const Vec3 half(0.5 * ipd, 0.0, 0.0);
  const auto rotation = head.orientation.normalized().toRotationMatrix();
  return EyePair{head.position + rotation * (glasses_offset - half),
                 head.position + rotation * (glasses_offset + half)};
}

ScreenPoint project_point(const Vec3& eye, const ScreenRect& s, const Vec3& p) {
  const ScreenBasis b = screen_basis(s);
  const double a = plane_distance(b, eye);
  if (a <= kDegenerateDistance) {
    throw GeometryError(GeometryError::Kind::DegenerateFrustum,
                        "eye on or behind plane of screen '" + s.name + "'");
  }
  const Vec3 d = p - eye;
  const double denom = d.dot(b.normal);
  // The ray has to head toward the plane.
  if (!(denom < -1e-15 * d.norm())) {
    throw GeometryError(GeometryError::Kind::NoImage,
                        "point has no image on screen '" + s.name + "'");
  }
  const Vec3 hit = eye + (-a / denom) * d;
  const Vec3 rel = hit - b.origin;
  return to_screen_point(s, b, rel.dot(b.right), rel.dot(b.up));
}

FrustumParams offaxis_frustum(const Vec3& eye, const ScreenRect& s, double near,
                              double far) {
  if (!(near > 0.0) || !(far > near)) {
    throw ConfigError("frustum requires 0 < near < far");
  }
  const ScreenBasis b = screen_basis(s);
  const double a = plane_distance(b, eye);
  if (a <= kDegenerateDistance) {
    throw GeometryError(GeometryError::Kind::DegenerateFrustum,
                        "eye on or behind plane of screen '" + s.name + "'");
  }
  const double scale = near / a;
  FrustumParams f;
  f.left = b.right.dot(s.lower_left - eye) * scale;
  f.right = b.right.dot(s.lower_right - eye) * scale;
  f.bottom = b.up.dot(s.lower_left - eye) * scale;
  f.top = b.up.dot(s.upper_left - eye) * scale;
  f.near = near;
  f.far = far;
  f.eye = eye;
  f.view = b;
  return f;
}

double frustum_horizontal_angle(const FrustumParams& f) {
  return std::atan2(f.right, f.near) - std::atan2(f.left, f.near);
}

ImageOffset disparity(const Vec3& eye_left, const Vec3& eye_right,
                      const ScreenRect& s, const Vec3& p) {
  const ScreenPoint l = project_point(eye_left, s, p);
  const ScreenPoint r = project_point(eye_right, s, p);
  return ImageOffset{l.u - r.u, l.v - r.v};
}

ImageOffset parallax_shift(const Vec3& eye, const Vec3& delta,
                           const ScreenRect& s, const Vec3& p) {
  const ScreenBasis b = screen_basis(s);
  if (std::abs(delta.dot(b.normal)) > 1e-9 * std::max(1.0, delta.norm())) {
    throw ConfigError("parallax_shift: delta must be parallel to the screen");
  }
  const ScreenPoint before = project_point(eye, s, p);
  const ScreenPoint after = project_point(eye + delta, s, p);
  return ImageOffset{after.u - before.u, after.v - before.v};
}

double projected_extent(const Vec3& eye, const ScreenRect& s,
                        const Vec3& p_center, double world_width) {
  const ScreenBasis b = screen_basis(s);
  const Vec3 half = 0.5 * world_width * b.right;
  const ScreenPoint lo = project_point(eye, s, p_center - half);
  const ScreenPoint hi = project_point(eye, s, p_center + half);
  return std::hypot(hi.u - lo.u, hi.v - lo.v);
}

Vec3 nearest_point_to_lines(std::span<const Line3> lines) {
  if (lines.size() < 2) {
    throw GeometryError(GeometryError::Kind::NoImage,
                        "need at least two lines to intersect");
  }
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  Vec3 rhs = Vec3::Zero();
  for (const auto& line : lines) {
    const Vec3 d = line.direction.normalized();
    const Eigen::Matrix3d P = Eigen::Matrix3d::Identity() - d * d.transpose();
    A += P;
    rhs += P * line.point;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(A);
  if (eig.eigenvalues()(0) < 1e-12 * eig.eigenvalues()(2)) {
    throw GeometryError(GeometryError::Kind::NoImage,
                        "lines are parallel; intersection undefined");
  }
  return A.ldlt().solve(rhs);
}

}  // namespace cavecheck
