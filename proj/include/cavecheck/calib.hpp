#pragma once

// Line-of-sight tracker calibration. Virtual markers are drawn at the known
// positions of physical targets; viewed from the true eye they only line up
// with the targets when the tracker error is accounted for. Solving for the
// offset that makes every sight line pass through its target recovers the
// local tracker error.

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavecheck/geom.hpp"
#include "cavecheck/grid.hpp"
#include "cavecheck/rig.hpp"

namespace cavecheck::calib {

struct Target {
  std::string label;
  Vec3 position;
};

struct Observation {
  Vec3 reported_eye;
  std::size_t screen = 0;
  ScreenPoint marker_image;
  std::string target_label;
};

/// Station geometry cannot constrain the offset along `null_direction`.
class UnobservableError : public std::runtime_error {
 public:
  UnobservableError(const Vec3& null_direction, const std::string& what)
      : std::runtime_error(what), null_direction_(null_direction) {}
  const Vec3& null_direction() const { return null_direction_; }

 private:
  Vec3 null_direction_;
};

struct SolverOptions {
  double tolerance = 1e-7;  // m, on the step length
  int max_iterations = 100;
};

struct LineOfSightResult {
  Vec3 offset = Vec3::Zero();   // reported - true
  double residual_rms = 0.0;    // m, point-to-line distance
  int iterations = 0;
  std::vector<double> objective;  // sum of squares after each accepted step
};

/// Throws ConfigError on unknown targets or fewer than two observations and
/// UnobservableError when every sight line is parallel.
LineOfSightResult line_of_sight_solve(std::span<const Observation> observations,
                                      std::span<const Target> targets,
                                      const RigConfig& rig,
                                      const SolverOptions& options = {});

/// Perpendicular residual from target to the sight line through
/// (reported_eye - offset) and the marker image, and its 3x3 Jacobian with
/// respect to the offset.
struct SightResidual {
  Vec3 r;
  Eigen::Matrix3d jacobian;
};
SightResidual sight_residual(const Vec3& reported_eye, const Vec3& image_point,
                             const Vec3& target, const Vec3& offset);

/// Forward model of one observation: the user's eye is physically at
/// `true_eye`; the tracker reports it through `faults`; the recorded marker
/// image is where the marker covers `target` as seen from the true eye, on
/// the first screen where that lands inside the rectangle. Returns nothing
/// when no screen shows the marker.
std::optional<Observation> observe(const RigConfig& rig, const FaultSet& faults,
                                   const Vec3& true_eye, const Target& target,
                                   GaussianStream& rng);

struct CalibrationPlan {
  std::vector<Target> targets;
  std::vector<Vec3> stations;            // nominal viewing positions
  std::vector<Vec3> viewpoint_offsets;   // around each station
  Vec3 grid_min;
  Vec3 grid_max;
  std::array<int, 3> grid_dims{3, 3, 3};
  std::uint64_t seed = 1;
};

struct StationSolution {
  Vec3 nominal;
  Station station;  // position is the mean reported viewpoint
  LineOfSightResult solve;
  std::size_t observations = 0;
};

struct CalibrationResult {
  std::vector<StationSolution> stations;
  DistortionGrid grid;
};

/// Collect observations at every station, solve each one, and interpolate
/// the station offsets onto a correction grid.
CalibrationResult calibrate(const RigConfig& rig, const FaultSet& faults,
                            const CalibrationPlan& plan,
                            const SolverOptions& options = {});

/// A 3x3x3 station lattice around the rig's interior point, five targets
/// in front of the vertical screens, five viewpoints per station and a
/// 5x5x5 grid over the lattice.
CalibrationPlan default_plan(const RigConfig& rig);

/// Stations on an n x n x n lattice spanning [min, max].
std::vector<Vec3> station_lattice(const Vec3& min, const Vec3& max,
                                  std::array<int, 3> dims);

/// Center plus count - 1 points on a ring of `radius` in the xy plane with
/// alternating depth, as used for default viewpoint sets.
std::vector<Vec3> default_viewpoints(int count, double radius);

}  // namespace cavecheck::calib
