#pragma once

// JSON input and output. Rig and fault files may declare "unit" as "m",
// "ft" or "in"; lengths are converted to meters on load. Errors name the
// offending field path (for example "screens[2].lower_left").

#include <json.hpp>

#include <string>
#include <string_view>
#include <vector>

#include "cavecheck/calib.hpp"
#include "cavecheck/diagnostics.hpp"
#include "cavecheck/rig.hpp"

namespace cavecheck::io {

using nlohmann::json;

inline constexpr int kReportSchemaVersion = 1;

/// Meters per unit; throws ConfigError for unknown units.
double unit_scale(std::string_view unit);

/// Parses text, reporting line and column on syntax errors.
json parse_json(std::string_view text, const std::string& source = "input");

RigConfig rig_from_json(const json& j);
json to_json(const RigConfig& rig);

FaultSet faults_from_json(const json& j, const RigConfig& rig);
json to_json(const FaultSet& faults);

Scene scene_from_json(const json& j);
json to_json(const Scene& scene);

/// {"kind": "stationary" | "wand_wag" | "wand_circle" | "head_linear",
///  "duration": s, "head": {"position", "orientation": [w, x, y, z]}, ...}
Trajectory trajectory_from_json(const json& j);

/// Targets, stations (explicit list or "lattice"), viewpoint offsets
/// (explicit list or "viewpoint_count" / "viewpoint_radius"), "grid" bounds
/// and dims. Missing parts fall back to calib::default_plan.
calib::CalibrationPlan plan_from_json(const json& j, const RigConfig& rig);

calib::DistortionGrid grid_from_json(const json& j, double scale = 1.0,
                                     const std::string& path = "grid");
json to_json(const calib::DistortionGrid& grid);

json to_json(const diagnostics::Finding& f);
json to_json(const diagnostics::DiagnosticReport& report);
json to_json(const DisplayedFrame& frame);
json to_json(const calib::CalibrationResult& result);

/// Empty when the report matches the schema; otherwise one message per
/// violation.
std::vector<std::string> validate_report(const json& report);

/// 16 hex digits of FNV-1a over the canonical JSON dump.
std::string digest(const json& j);
std::string rig_digest(const RigConfig& rig);
std::string faults_digest(const FaultSet& faults);

std::string read_file(const std::string& path);
/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace cavecheck::io
