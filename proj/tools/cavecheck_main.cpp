// cavecheck: pattern generation, diagnostics, calibration and simulation for
// projection VR rigs.
//
// Exit codes: 0 all pass, 1 any fail, 2 inconclusive only, 64 usage or
// configuration error.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "cavecheck/calib.hpp"
#include "cavecheck/diagnostics.hpp"
#include "cavecheck/io.hpp"
#include "cavecheck/pattern.hpp"
#include "cavecheck/rig.hpp"

namespace {

using namespace cavecheck;
using io::json;

constexpr const char* kVersion = "1.0.0";
constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitInconclusive = 2;
constexpr int kExitUsage = 64;

struct Options {
  std::string config;
  std::string faults;
  std::string stations;
  std::string trajectory;
  std::string scene;
  std::string out;
  std::string format;  // per-command default when empty
  std::uint64_t seed = 1;
  double spacing = 0.1524;
  double duration = -1.0;
};

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

RigConfig load_rig(const Options& o) {
  if (o.config.empty()) return RigConfig::default_cave();
  return io::rig_from_json(io::parse_json(io::read_file(o.config), o.config));
}

FaultSet load_faults(const Options& o, const RigConfig& rig) {
  if (o.faults.empty()) return FaultSet{};
  return io::faults_from_json(io::parse_json(io::read_file(o.faults), o.faults), rig);
}

json manifest(const std::string& command, const Options& o) {
  return {{"tool", "cavecheck"},
          {"version", kVersion},
          {"command", command},
          {"config", o.config},
          {"faults", o.faults},
          {"stations", o.stations},
          {"trajectory", o.trajectory},
          {"scene", o.scene},
          {"out", o.out},
          {"seed", o.seed},
          {"spacing", o.spacing},
          {"format", o.format}};
}

void emit(const Options& o, const std::string& text) {
  if (o.out.empty() || o.out == "-") {
    std::cout << text;
  } else {
    io::write_file_atomic(o.out, text);
  }
}

void emit_manifest(const std::string& command, const Options& o) {
  if (o.out.empty() || o.out == "-") return;
  io::write_file_atomic(o.out + ".manifest.json", manifest(command, o).dump(2) + "\n");
}

int cmd_pattern(const Options& o) {
  const RigConfig rig = load_rig(o);
  if (o.format != "ppm") throw ConfigError("--format: pattern output supports only ppm");
  if (o.out.empty()) throw ConfigError("--out: pattern needs an output directory");
  pattern::PatternSpec spec;
  spec.grid_spacing = o.spacing;
  spec.validate();
  std::filesystem::create_directories(o.out);
  json files = json::array();
  for (const auto& screen : rig.screens) {
    for (const auto& [eye, tag] : {std::pair{EyeSide::Left, "left"}, std::pair{EyeSide::Right, "right"}}) {
      const auto img = pattern::generate_pattern(screen, spec, eye);
      const std::string name = screen.name + "_" + tag + ".ppm";
      const std::string bytes = pattern::write_ppm(img);
      io::write_file_atomic((std::filesystem::path(o.out) / name).string(), bytes);
      files.push_back({{"file", name},
                       {"screen", screen.name},
                       {"eye", tag},
                       {"fnv1a64", hex64(fnv1a64(bytes))}});
    }
  }
  json m = manifest("pattern", o);
  m["files"] = files;
  io::write_file_atomic((std::filesystem::path(o.out) / "manifest.json").string(), m.dump(2) + "\n");
  std::cerr << files.size() << " pattern images written to " << o.out << "\n";
  return kExitPass;
}

std::string text_report(const diagnostics::DiagnosticReport& report) {
  std::ostringstream os;
  os << "seed " << report.seed << "  rig " << report.rig_digest << "  faults "
     << report.faults_digest << "\n";
  for (const auto& f : report.findings) {
    os << diagnostics::to_string(f.status) << "\t" << f.test_name;
    if (!f.subject.empty()) os << " [" << f.subject << "]";
    for (const auto& e : f.estimates) {
      if (e.value.size() > 3) continue;
      os << "  " << e.name << "=";
      for (std::size_t k = 0; k < e.value.size(); ++k) os << (k ? "," : "") << e.value[k];
      if (!e.unit.empty()) os << " " << e.unit;
    }
    os << "\n";
    for (const auto& n : f.notes) os << "\t  " << n << "\n";
  }
  return os.str();
}

int cmd_diagnose(const Options& o) {
  const RigConfig rig = load_rig(o);
  const FaultSet faults = load_faults(o, rig);
  diagnostics::DiagnosticOptions opts;
  opts.seed = o.seed;
  const auto report = diagnostics::run_suite(rig, faults, opts);
  if (o.format == "json") {
    json j = io::to_json(report);
    j["manifest"] = manifest("diagnose", o);
    emit(o, j.dump(2) + "\n");
  } else if (o.format == "text") {
    emit(o, text_report(report));
  } else {
    throw ConfigError("--format: expected json or text");
  }
  emit_manifest("diagnose", o);
  if (report.any(diagnostics::Status::Fail)) return kExitFail;
  if (report.any(diagnostics::Status::Inconclusive)) return kExitInconclusive;
  return kExitPass;
}

double marker_error(const RigConfig& rig, const FaultSet& faults, std::uint64_t seed) {
  diagnostics::DiagnosticOptions opts;
  opts.seed = seed;
  return diagnostics::test_fixed_marker(rig, faults, opts).scalar("tracking_error_magnitude");
}

int cmd_calibrate(const Options& o) {
  const RigConfig rig = load_rig(o);
  const FaultSet faults = load_faults(o, rig);
  calib::CalibrationPlan plan =
      o.stations.empty()
          ? calib::default_plan(rig)
          : io::plan_from_json(io::parse_json(io::read_file(o.stations), o.stations), rig);
  plan.seed = o.seed;
  calib::CalibrationResult result;
  try {
    result = calib::calibrate(rig, faults, plan);
  } catch (const calib::UnobservableError& e) {
    const Vec3& d = e.null_direction();
    std::cerr << "cavecheck: station geometry unobservable along (" << d.x() << ", " << d.y()
              << ", " << d.z() << ")\n";
    return kExitFail;
  }
  RigConfig corrected = rig;
  corrected.tracker_correction = result.grid;
  const double before = marker_error(rig, faults, o.seed);
  const double after = marker_error(corrected, faults, o.seed);

  json j = io::to_json(result);
  j["summary"] = {{"fixed_marker_error_before", before},
                  {"fixed_marker_error_after", after},
                  {"improvement", after > 0.0 ? json(before / after) : json(nullptr)}};
  j["manifest"] = manifest("calibrate", o);
  emit(o, j.dump(2) + "\n");
  emit_manifest("calibrate", o);
  std::cerr << "fixed marker error: before " << before << " m, after " << after << " m\n";
  return kExitPass;
}

int cmd_simulate(const Options& o) {
  const RigConfig rig = load_rig(o);
  const FaultSet faults = load_faults(o, rig);
  Scene scene;
  if (o.scene.empty()) {
    scene.probes.push_back({"probe", Vec3(0.0, 1.5, -3.0)});
    scene.wand_marker = true;
  } else {
    scene = io::scene_from_json(io::parse_json(io::read_file(o.scene), o.scene));
  }
  Trajectory trajectory;
  if (o.trajectory.empty()) {
    Pose head;
    head.position = Vec3(0.0, 1.5, 0.0);
    Pose wand;
    wand.position = Vec3(0.0, 1.2, -0.7);
    trajectory = Trajectory::stationary(head, wand, 1.0);
  } else {
    trajectory = io::trajectory_from_json(io::parse_json(io::read_file(o.trajectory), o.trajectory));
  }
  const double duration = o.duration >= 0.0 ? o.duration : trajectory.duration;
  if (o.format != "jsonl") throw ConfigError("--format: simulate output supports only jsonl");
  const auto frames = simulate(rig, faults, scene, trajectory, duration, o.seed);
  std::string text;
  for (const auto& f : frames) {
    json j = io::to_json(f);
    j["seed"] = o.seed;
    text += j.dump() + "\n";
  }
  emit(o, text);
  emit_manifest("simulate", o);
  return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Projection VR rig checks: test patterns, diagnostics, calibration, simulation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Rig JSON (default: 3 m four-screen cave)");
    sub->add_option("--seed", o.seed, "Random seed")->capture_default_str();
    sub->add_option("--out", o.out, "Output path ('-' or empty for stdout)");
  };

  auto* pattern_cmd = app.add_subcommand("pattern", "Write test pattern PPMs per screen and eye");
  common(pattern_cmd);
  pattern_cmd->add_option("--spacing", o.spacing, "Gridline spacing in meters")->capture_default_str();
  pattern_cmd->add_option("--format", o.format, "Image format (ppm)");

  auto* diagnose_cmd = app.add_subcommand("diagnose", "Run the diagnostic suite");
  common(diagnose_cmd);
  diagnose_cmd->add_option("--faults", o.faults, "Injected faults JSON");
  diagnose_cmd->add_option("--format", o.format, "json (default) or text");

  auto* calibrate_cmd = app.add_subcommand("calibrate", "Line-of-sight tracker calibration");
  common(calibrate_cmd);
  calibrate_cmd->add_option("--faults", o.faults, "Injected faults JSON");
  calibrate_cmd->add_option("--stations", o.stations, "Calibration plan JSON");
  calibrate_cmd->add_option("--format", o.format, "Output format (json)");

  auto* simulate_cmd = app.add_subcommand("simulate", "Dump displayed frames as JSON lines");
  common(simulate_cmd);
  simulate_cmd->add_option("--faults", o.faults, "Injected faults JSON");
  simulate_cmd->add_option("--trajectory", o.trajectory, "Trajectory JSON (default: 1 s stationary)");
  simulate_cmd->add_option("--scene", o.scene, "Scene JSON (default: one probe and the wand marker)");
  simulate_cmd->add_option("--duration", o.duration, "Override the trajectory duration (s)");
  simulate_cmd->add_option("--format", o.format, "Output format (jsonl)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (pattern_cmd->parsed()) {
      if (o.format.empty()) o.format = "ppm";
      return cmd_pattern(o);
    }
    if (diagnose_cmd->parsed()) {
      if (o.format.empty()) o.format = "json";
      return cmd_diagnose(o);
    }
    if (calibrate_cmd->parsed()) {
      if (o.format.empty()) o.format = "json";
      if (o.format != "json") throw ConfigError("--format: calibrate output supports only json");
      return cmd_calibrate(o);
    }
    if (o.format.empty()) o.format = "jsonl";
    return cmd_simulate(o);
  } catch (const ConfigError& e) {
    std::cerr << "cavecheck: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "cavecheck: " << e.what() << "\n";
    return kExitFail;
  }
}
