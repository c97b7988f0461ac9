#pragma once

// Automated display-quality probes. Each test drives the glasses and wand
// through a simulated procedure, measures what the screens show, and
// returns a Finding with quantitative estimates.
//
// Tests that need a single reference screen use the first vertical screen
// of the rig (the "primary" screen). Static poses are sampled for
// `static_frames` frames and averaged when the tracker has jitter.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cavecheck/rig.hpp"

namespace cavecheck::diagnostics {

enum class Status { Pass, Fail, Inconclusive };

const char* to_string(Status s);

struct Estimate {
  std::string name;
  std::vector<double> value;  // scalar when size() == 1
  std::string unit;
};

struct Finding {
  std::string test_name;
  std::string subject;  // screen or screen pair, empty for rig-wide tests
  Status status = Status::Inconclusive;
  std::vector<Estimate> estimates;
  std::vector<std::string> evidence;
  std::vector<std::string> notes;
  double threshold = 0.0;
  std::string threshold_unit;
  double uncertainty = 0.0;  // same unit as threshold

  const Estimate* find(const std::string& name) const;
  /// First component of a named estimate; NaN if absent.
  double scalar(const std::string& name) const;
  Vec3 vector3(const std::string& name) const;
};

struct DiagnosticReport {
  std::string rig_digest;
  std::string faults_digest;
  std::uint64_t seed = 0;
  std::vector<Finding> findings;

  bool any(Status s) const;
};

struct DiagnosticOptions {
  std::uint64_t seed = 1;
  int static_frames = 120;

  double orientation_threshold_deg = 1.0;
  double parallax_ratio_tolerance = 0.05;
  double plane_threshold_m = 0.01;
  double bend_threshold_deg = 0.1;
  double horizon_tolerance_m = 0.01;
  double horizon_scale_tolerance = 0.01;
  double latency_threshold_s = 0.020;
  double attachment_threshold_m = 0.01;
  double jitter_threshold_m = 0.001;
  double marker_threshold_m = 0.01;
  double edge_threshold_m = 0.001;

  // Latency search.
  double wag_amplitude_m = 0.3;
  double min_wag_hz = 0.25;
  double max_wag_hz = 25.0;
  double wag_sweep_step_hz = 0.125;
  double bisection_width_hz = 0.01;
  double phase_tolerance_rad = 0.05;

  // Shrink approach.
  double shrink_depth_m = 3.0;  // probe distance behind the screen
  double shrink_start_m = 1.5;
  double shrink_end_m = 0.3;
  int shrink_steps = 13;
};

/// Index of the first screen whose normal is roughly horizontal.
std::optional<std::size_t> primary_screen(const RigConfig& rig);

/// Screens i and j share an edge; returns its endpoints.
std::optional<std::pair<Vec3, Vec3>> shared_edge(const RigConfig& rig,
                                                 std::size_t i, std::size_t j);

/// All screen pairs (i < j) that share an edge.
std::vector<std::pair<std::size_t, std::size_t>> adjacent_pairs(const RigConfig& rig);

/// Head orientation looking straight at a screen (head x along the screen's
/// right axis, head y along its up axis).
Quat facing(const ScreenRect& s);

Finding test_parallax_orientation(const RigConfig& rig, const FaultSet& faults,
                                  const DiagnosticOptions& opts = {});
Finding test_shrink(const RigConfig& rig, const FaultSet& faults,
                    const DiagnosticOptions& opts = {});
std::vector<Finding> test_stereo_phase(const RigConfig& rig, const FaultSet& faults,
                                       const DiagnosticOptions& opts = {});
Finding locate_projection_plane(const RigConfig& rig, const FaultSet& faults,
                                std::size_t screen,
                                const DiagnosticOptions& opts = {});
Finding test_line_bend(const RigConfig& rig, const FaultSet& faults,
                       std::pair<std::size_t, std::size_t> screens,
                       const DiagnosticOptions& opts = {});
Finding test_horizon(const RigConfig& rig, const FaultSet& faults,
                     const DiagnosticOptions& opts = {});
Finding estimate_latency_phase(const RigConfig& rig, const FaultSet& faults,
                               const DiagnosticOptions& opts = {});
Finding test_wand_attachment(const RigConfig& rig, const FaultSet& faults,
                             const DiagnosticOptions& opts = {});
Finding estimate_jitter(const RigConfig& rig, const FaultSet& faults,
                        const DiagnosticOptions& opts = {});
Finding test_fixed_marker(const RigConfig& rig, const FaultSet& faults,
                          const DiagnosticOptions& opts = {});
Finding test_edge_match(const RigConfig& rig, const FaultSet& faults,
                        std::pair<std::size_t, std::size_t> screens,
                        const DiagnosticOptions& opts = {});

/// Every test above, in the order the checks are usually performed:
/// tracker orientation, position offset, stereo phase, projection plane,
/// latency, edge matching, then the standalone tracker-confidence checks.
DiagnosticReport run_suite(const RigConfig& rig, const FaultSet& faults,
                           const DiagnosticOptions& opts = {});

/// Lag of a sinusoid fitted at `frequency_hz` relative to sin(2 pi f t),
/// wrapped to (-pi, pi]. Exposed for testing.
double fitted_phase_lag(const std::vector<double>& times,
                        const std::vector<double>& values, double frequency_hz);

/// Lag in samples that maximizes the normalized cross-correlation of
/// `response` against `reference`, refined by a parabola through the peak.
double cross_correlation_lag(const std::vector<double>& reference,
                             const std::vector<double>& response, int max_lag);

}  // namespace cavecheck::diagnostics
