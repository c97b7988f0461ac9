#pragma once

// Viewer-centered stereo projection onto planar screens.
//
// All lengths are meters. World frame is right-handed, +y up, origin at the
// center of the floor. A screen is described by three corners; its normal
// (right x up) must face the rig interior, where the eyes live.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <span>
#include <stdexcept>
#include <string>

namespace cavecheck {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

/// Invalid rig, fault or pattern configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GeometryError : public std::runtime_error {
 public:
  enum class Kind {
    DegenerateFrustum,  // eye on or behind the screen plane
    NoImage,            // point not in front of the eye
  };

  GeometryError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Minimum eye-to-plane distance for a valid frustum.
inline constexpr double kDegenerateDistance = 1e-9;

struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
};

/// Throws ConfigError on non-finite position or a non-unit quaternion.
void validate(const Pose& pose);
void require_finite(const Vec3& v, const char* what);

struct ScreenRect {
  std::string name;
  Vec3 lower_left = Vec3::Zero();
  Vec3 lower_right = Vec3::Zero();
  Vec3 upper_left = Vec3::Zero();
  int pixels_w = 1;
  int pixels_h = 1;
};

struct ScreenBasis {
  Vec3 right;
  Vec3 up;
  Vec3 normal;
  double width = 0.0;
  double height = 0.0;
  Vec3 origin;  // lower-left corner
};

struct FrustumParams {
  double left = 0.0;
  double right = 0.0;
  double bottom = 0.0;
  double top = 0.0;
  double near = 0.0;
  double far = 0.0;
  Vec3 eye;
  ScreenBasis view;
};

/// Position on a screen. (u, v) in meters from the lower-left corner,
/// (px, py) continuous pixel coordinates with the same origin.
struct ScreenPoint {
  double u = 0.0;
  double v = 0.0;
  double px = 0.0;
  double py = 0.0;
};

/// Signed image displacement in screen coordinates.
struct ImageOffset {
  double du = 0.0;
  double dv = 0.0;
};

struct EyePair {
  Vec3 left;
  Vec3 right;
};

struct Line3 {
  Vec3 point;
  Vec3 direction;
};

ScreenBasis screen_basis(const ScreenRect& s);

/// Distance of `p` from the screen plane, positive on the interior side.
double plane_distance(const ScreenBasis& basis, const Vec3& p);

/// The same rectangle translated by `offset` along its normal.
ScreenRect shifted_along_normal(const ScreenRect& s, double offset);

ScreenPoint to_screen_point(const ScreenRect& s, const ScreenBasis& basis,
                            double u, double v);
Vec3 screen_to_world(const ScreenRect& s, const ScreenPoint& sp);

/// Eye positions for a head pose. Eyes sit at glasses_offset -/+ ipd/2 along
/// the head x axis, in head coordinates.
EyePair derive_eyes(const Pose& head, double ipd, const Vec3& glasses_offset);

/// Intersection of the line eye->p with the screen plane. The result may lie
/// outside the screen rectangle.
ScreenPoint project_point(const Vec3& eye, const ScreenRect& s, const Vec3& p);

/// Generalized off-axis frustum through the screen rectangle.
FrustumParams offaxis_frustum(const Vec3& eye, const ScreenRect& s,
                              double near, double far);

/// Full horizontal opening angle of a frustum, radians.
double frustum_horizontal_angle(const FrustumParams& f);

/// image_left - image_right.
ImageOffset disparity(const Vec3& eye_left, const Vec3& eye_right,
                      const ScreenRect& s, const Vec3& p);

/// Image motion of `p` when the eye moves by `delta` parallel to the screen.
ImageOffset parallax_shift(const Vec3& eye, const Vec3& delta,
                           const ScreenRect& s, const Vec3& p);

/// On-screen width of a segment of length `world_width` centered on
/// `p_center` and parallel to the screen's right axis.
double projected_extent(const Vec3& eye, const ScreenRect& s,
                        const Vec3& p_center, double world_width);

/// Least-squares point closest to a set of lines (at least two, not all
/// parallel).
Vec3 nearest_point_to_lines(std::span<const Line3> lines);

}  // namespace cavecheck
