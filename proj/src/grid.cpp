#include "cavecheck/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cavecheck::calib {

Vec3 DistortionGrid::spacing() const {
  return (max - min).cwiseQuotient(
      Vec3(dims[0] - 1, dims[1] - 1, dims[2] - 1));
}

Vec3 DistortionGrid::node_position(int i, int j, int k) const {
  return min + spacing().cwiseProduct(Vec3(i, j, k));
}

void DistortionGrid::validate() const {
  require_finite(min, "grid min");
  require_finite(max, "grid max");
  for (int a = 0; a < 3; ++a) {
    if (!(min[a] < max[a])) {
      throw ConfigError("grid bounds: min must be < max on every axis");
    }
    if (dims[a] < 2) {
      throw ConfigError("grid dims: need at least 2 nodes per axis");
    }
  }
  if (offsets.size() != node_count()) {
    throw ConfigError("grid offsets: expected " + std::to_string(node_count()) +
                      " nodes, got " + std::to_string(offsets.size()));
  }
  for (const auto& o : offsets) require_finite(o, "grid offset");
}

DistortionGrid DistortionGrid::zero(const Vec3& min, const Vec3& max,
                                    std::array<int, 3> dims) {
  DistortionGrid g;
  g.min = min;
  g.max = max;
  g.dims = dims;
  g.offsets.assign(g.node_count(), Vec3::Zero());
  g.validate();
  return g;
}

DistortionGrid DistortionGrid::sample(
    const Vec3& min, const Vec3& max, std::array<int, 3> dims,
    const std::function<Vec3(const Vec3&)>& field) {
  DistortionGrid g = zero(min, max, dims);
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i)
        g.offsets[g.index(i, j, k)] = field(g.node_position(i, j, k));
  return g;
}

Vec3 trilinear_sample(const DistortionGrid& grid, const Vec3& p) {
  const Vec3 step = grid.spacing();
  std::array<int, 3> cell{};
  std::array<double, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    const double clamped = std::clamp(p[a], grid.min[a], grid.max[a]);
    const double t = (clamped - grid.min[a]) / step[a];
    const int c = std::clamp(static_cast<int>(std::floor(t)), 0, grid.dims[a] - 2);
    cell[a] = c;
    frac[a] = std::clamp(t - c, 0.0, 1.0);
  }
  Vec3 out = Vec3::Zero();
  for (int dz = 0; dz < 2; ++dz) {
    const double wz = dz ? frac[2] : 1.0 - frac[2];
    for (int dy = 0; dy < 2; ++dy) {
      const double wy = dy ? frac[1] : 1.0 - frac[1];
      for (int dx = 0; dx < 2; ++dx) {
        const double wx = dx ? frac[0] : 1.0 - frac[0];
        const double w = wx * wy * wz;
        if (w == 0.0) continue;
        out += w * grid.offsets[grid.index(cell[0] + dx, cell[1] + dy, cell[2] + dz)];
      }
    }
  }
  return out;
}

Vec3 correct(const DistortionGrid& grid, const Vec3& reported) {
  return reported - trilinear_sample(grid, reported);
}

DistortionGrid build_correction_grid(std::span<const Station> stations,
                                     const Vec3& min, const Vec3& max,
                                     std::array<int, 3> dims) {
  if (stations.empty()) {
    throw ConfigError("build_correction_grid: no stations");
  }
  for (const auto& s : stations) {
    require_finite(s.position, "station position");
    require_finite(s.offset, "station offset");
  }
  DistortionGrid g = DistortionGrid::zero(min, max, dims);
  const double coincident = 1e-12 * (max - min).norm();
  for (int k = 0; k < dims[2]; ++k) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        const Vec3 node = g.node_position(i, j, k);
        Vec3 sum = Vec3::Zero();
        double weight = 0.0;
        bool exact = false;
        for (const auto& s : stations) {
          const double d2 = (s.position - node).squaredNorm();
          if (d2 <= coincident * coincident) {
            sum = s.offset;
            exact = true;
            break;
          }
          sum += s.offset / d2;
          weight += 1.0 / d2;
        }
        g.offsets[g.index(i, j, k)] = exact ? sum : Vec3(sum / weight);
      }
    }
  }
  return g;
}

}  // namespace cavecheck::calib
