#include "cavecheck/calib.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <numbers>

namespace cavecheck::calib {

SightResidual sight_residual(const Vec3& reported_eye, const Vec3& image_point,
                             const Vec3& target, const Vec3& offset) {
  const Vec3 eye = reported_eye - offset;
  const Vec3 w = image_point - eye;
  const double len = w.norm();
  const Vec3 u = w / len;
  const Vec3 q = target - image_point;
  const double qu = q.dot(u);
  SightResidual out;
  out.r = q - qu * u;
  // r depends on the offset through u only: dr/du = -(qu I + u q^T),
  // du/dw = (I - u u^T)/|w|, dw/d(offset) = I.
  const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
  out.jacobian = -(qu * I + u * q.transpose()) * (I - u * u.transpose()) / len;
  return out;
}

namespace {

struct Ray {
  Vec3 reported_eye;
  Vec3 image;
  Vec3 target;
};

double objective(const std::vector<Ray>& rays, const Vec3& offset) {
  double sum = 0.0;
  for (const auto& ray : rays) {
    sum += sight_residual(ray.reported_eye, ray.image, ray.target, offset).r.squaredNorm();
  }
  return sum;
}

}  // namespace

LineOfSightResult line_of_sight_solve(std::span<const Observation> observations,
                                      std::span<const Target> targets,
                                      const RigConfig& rig,
                                      const SolverOptions& options) {
  if (observations.size() < 2) {
    throw ConfigError("line_of_sight_solve: need at least two observations");
  }
  std::map<std::string, Vec3> by_label;
  for (const auto& t : targets) by_label[t.label] = t.position;

  std::vector<Ray> rays;
  rays.reserve(observations.size());
  for (const auto& obs : observations) {
    const auto it = by_label.find(obs.target_label);
    if (it == by_label.end()) {
      throw ConfigError("line_of_sight_solve: unknown target '" + obs.target_label + "'");
    }
    if (obs.screen >= rig.screens.size()) {
      throw ConfigError("line_of_sight_solve: observation screen out of range");
    }
    rays.push_back(Ray{obs.reported_eye,
                       displayed_world_point(rig, obs.screen, obs.marker_image),
                       it->second});
  }

  LineOfSightResult result;
  Vec3 offset = Vec3::Zero();
  double cost = objective(rays, offset);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
    Vec3 g = Vec3::Zero();
    for (const auto& ray : rays) {
      const SightResidual sr = sight_residual(ray.reported_eye, ray.image, ray.target, offset);
      H += sr.jacobian.transpose() * sr.jacobian;
      g += sr.jacobian.transpose() * sr.r;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(H);
    const double top = eig.eigenvalues()(2);
    if (!(top > 0.0) || eig.eigenvalues()(0) < 1e-10 * top) {
      const Vec3 null = eig.eigenvectors().col(0);
      throw UnobservableError(
          null, "line_of_sight_solve: offset unobservable along (" +
                    std::to_string(null.x()) + ", " + std::to_string(null.y()) +
                    ", " + std::to_string(null.z()) + ")");
    }
    Vec3 step = -H.ldlt().solve(g);
    result.iterations = iter + 1;

    // Accept only decreasing steps; halve otherwise.
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      const double trial = objective(rays, offset + step);
      if (trial <= cost) {
        offset += step;
        cost = trial;
        result.objective.push_back(cost);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || step.norm() < options.tolerance) break;
  }
  result.offset = offset;
  result.residual_rms = std::sqrt(cost / static_cast<double>(rays.size()));
  return result;
}

std::optional<Observation> observe(const RigConfig& rig, const FaultSet& faults,
                                   const Vec3& true_eye, const Target& target,
                                   GaussianStream& rng) {
  Pose eye_pose;
  eye_pose.position = true_eye;
  const Pose reported =
      tracked_pose(rig, faults, [&](double) { return eye_pose; }, 0.0, rng);
  // The user moves the marker until it covers the target from where they
  // actually stand, so the recorded image lies on the true sight line.
  for (std::size_t i = 0; i < rig.screens.size(); ++i) {
    const ScreenBasis b = screen_basis(rig.screens[i]);
    ScreenPoint sp;
    try {
      sp = project_point(true_eye, rig.screens[i], target.position);
    } catch (const GeometryError&) {
      continue;
    }
    if (sp.u < 0.0 || sp.u > b.width || sp.v < 0.0 || sp.v > b.height) continue;
    return Observation{reported.position, i, sp, target.label};
  }
  return std::nullopt;
}

std::vector<Vec3> station_lattice(const Vec3& min, const Vec3& max,
                                  std::array<int, 3> dims) {
  std::vector<Vec3> out;
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i) {
        Vec3 t(dims[0] > 1 ? double(i) / (dims[0] - 1) : 0.5,
               dims[1] > 1 ? double(j) / (dims[1] - 1) : 0.5,
               dims[2] > 1 ? double(k) / (dims[2] - 1) : 0.5);
        out.push_back(min + (max - min).cwiseProduct(t));
      }
  return out;
}

std::vector<Vec3> default_viewpoints(int count, double radius) {
  std::vector<Vec3> out{Vec3::Zero()};
  const int ring = std::max(0, count - 1);
  for (int i = 0; i < ring; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / ring;
    const double depth = (i % 2 == 0 ? 0.5 : -0.5) * radius;
    out.emplace_back(radius * std::cos(angle), radius * std::sin(angle), depth);
  }
  return out;
}

CalibrationResult calibrate(const RigConfig& rig, const FaultSet& faults,
                            const CalibrationPlan& plan,
                            const SolverOptions& options) {
  if (plan.stations.empty()) throw ConfigError("calibrate: no stations");
  if (plan.targets.empty()) throw ConfigError("calibrate: no targets");
  GaussianStream rng(stream_seed(plan.seed, "head"));
  CalibrationResult result;
  std::vector<Station> stations;
  for (const Vec3& nominal : plan.stations) {
    std::vector<Observation> obs;
    Vec3 reported_sum = Vec3::Zero();
    int reported_count = 0;
    for (const Vec3& dv : plan.viewpoint_offsets) {
      for (const auto& target : plan.targets) {
        auto o = observe(rig, faults, nominal + dv, target, rng);
        if (!o) continue;
        reported_sum += o->reported_eye;
        ++reported_count;
        obs.push_back(std::move(*o));
      }
    }
    StationSolution sol;
    sol.nominal = nominal;
    sol.observations = obs.size();
    sol.solve = line_of_sight_solve(obs, plan.targets, rig, options);
    sol.station = Station{reported_sum / std::max(1, reported_count), sol.solve.offset};
    stations.push_back(sol.station);
    result.stations.push_back(std::move(sol));
  }
  result.grid = build_correction_grid(stations, plan.grid_min, plan.grid_max,
                                      plan.grid_dims);
  return result;
}

CalibrationPlan default_plan(const RigConfig& rig) {
  CalibrationPlan plan;
  const Vec3 c = rig.interior_point;
  plan.targets = {{"t0", c + Vec3(-0.6, -0.5, -1.2)},
                  {"t1", c + Vec3(0.6, 0.4, -1.2)},
                  {"t2", c + Vec3(0.0, -0.1, -1.4)},
                  {"t3", c + Vec3(-1.3, 0.1, -0.4)},
                  {"t4", c + Vec3(1.3, -0.3, 0.4)}};
  plan.grid_min = c + Vec3(-0.6, -0.3, 0.0);
  plan.grid_max = c + Vec3(0.6, 0.3, 1.2);
  plan.stations = station_lattice(plan.grid_min, plan.grid_max, {3, 3, 3});
  plan.viewpoint_offsets = default_viewpoints(5, 0.1);
  plan.grid_dims = {5, 5, 5};
  return plan;
}

}  // namespace cavecheck::calib
