#pragma once

// Regular 3D lattice of tracker position-error vectors. Used both to model
// static tracker distortion (as a fault) and to correct it (as a
// calibration product).

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "cavecheck/geom.hpp"

namespace cavecheck::calib {

struct DistortionGrid {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();
  std::array<int, 3> dims{2, 2, 2};
  std::vector<Vec3> offsets;  // x fastest, then y, then z

  std::size_t node_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) * (j + static_cast<std::size_t>(dims[1]) * k);
  }
  Vec3 node_position(int i, int j, int k) const;
  Vec3 spacing() const;

  /// Throws ConfigError on bad bounds, dimensions, size or non-finite data.
  void validate() const;

  static DistortionGrid zero(const Vec3& min, const Vec3& max,
                             std::array<int, 3> dims);
  /// Grid whose nodes sample `field`.
  static DistortionGrid sample(const Vec3& min, const Vec3& max,
                               std::array<int, 3> dims,
                               const std::function<Vec3(const Vec3&)>& field);
};

/// Trilinear blend of the 8 nodes around p. Points outside the bounds are
/// clamped onto the boundary first.
Vec3 trilinear_sample(const DistortionGrid& grid, const Vec3& p);

/// reported - trilinear_sample(grid, reported).
Vec3 correct(const DistortionGrid& grid, const Vec3& reported);

/// A calibration station: where it was measured (in reported coordinates)
/// and the tracker offset solved there.
struct Station {
  Vec3 position;
  Vec3 offset;
};

/// Inverse-distance-weighted (power 2) scatter interpolation of station
/// offsets onto grid nodes. A node that coincides with a station takes its
/// offset exactly.
DistortionGrid build_correction_grid(std::span<const Station> stations,
                                     const Vec3& min, const Vec3& max,
                                     std::array<int, 3> dims);

}  // namespace cavecheck::calib
