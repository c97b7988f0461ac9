#include "cavecheck/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace cavecheck::io {

double unit_scale(std::string_view unit) {
  if (unit == "m") return 1.0;
  if (unit == "ft") return 0.3048;
  if (unit == "in") return 0.0254;
  throw ConfigError("unknown unit '" + std::string(unit) + "' (expected m, ft or in)");
}

json parse_json(std::string_view text, const std::string& source) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t k = 0; k < end; ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                      ": invalid JSON");
  }
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(path, "expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) fail(path.empty() ? key : path + "." + key, "unknown field");
  }
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

const json& required(const json& j, const std::string& path, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) fail(join(path, key), "missing");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "not finite");
  return v;
}

Vec3 vec3(const json& j, const std::string& path, double scale) {
  if (!j.is_array() || j.size() != 3) fail(path, "expected [x, y, z]");
  Vec3 v;
  for (int k = 0; k < 3; ++k) v(k) = number(j[k], path + "[" + std::to_string(k) + "]") * scale;
  return v;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

double opt_number(const json& j, const std::string& path, const char* key, double fallback) {
  const auto it = j.find(key);
  return it == j.end() ? fallback : number(*it, join(path, key));
}

double file_scale(const json& j) {
  const auto it = j.find("unit");
  if (it == j.end()) return 1.0;
  if (!it->is_string()) fail("unit", "expected a string");
  return unit_scale(it->get<std::string>());
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

calib::DistortionGrid grid_from_json(const json& j, double scale, const std::string& path) {
  check_keys(j, path, {"min", "max", "dims", "offsets"});
  calib::DistortionGrid g;
  g.min = vec3(required(j, path, "min"), join(path, "min"), scale);
  g.max = vec3(required(j, path, "max"), join(path, "max"), scale);
  const json& dims = required(j, path, "dims");
  if (!dims.is_array() || dims.size() != 3) fail(join(path, "dims"), "expected [nx, ny, nz]");
  for (int k = 0; k < 3; ++k) {
    if (!dims[k].is_number_integer()) fail(join(path, "dims"), "expected integers");
    g.dims[k] = dims[k].get<int>();
  }
  const json& offsets = required(j, path, "offsets");
  if (!offsets.is_array()) fail(join(path, "offsets"), "expected an array");
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    g.offsets.push_back(vec3(offsets[k], join(path, "offsets") + "[" + std::to_string(k) + "]", scale));
  }
  try {
    g.validate();
  } catch (const ConfigError& e) {
    fail(path, e.what());
  }
  return g;
}

json to_json(const calib::DistortionGrid& g) {
  json offsets = json::array();
  for (const Vec3& v : g.offsets) offsets.push_back(vec_json(v));
  return {{"min", vec_json(g.min)},
          {"max", vec_json(g.max)},
          {"dims", {g.dims[0], g.dims[1], g.dims[2]}},
          {"offsets", offsets}};
}

RigConfig rig_from_json(const json& j) {
  check_keys(j, "", {"unit", "screens", "interior_point", "ipd", "glasses_offset",
                     "frame_rate_hz", "tracker_correction"});
  const double s = file_scale(j);
  RigConfig rig;
  rig.screens.clear();
  const json& screens = required(j, "", "screens");
  if (!screens.is_array()) fail("screens", "expected an array");
  for (std::size_t k = 0; k < screens.size(); ++k) {
    const std::string path = "screens[" + std::to_string(k) + "]";
    const json& sj = screens[k];
    check_keys(sj, path, {"name", "lower_left", "lower_right", "upper_left", "pixels"});
    ScreenRect r;
    const json& name = required(sj, path, "name");
    if (!name.is_string()) fail(path + ".name", "expected a string");
    r.name = name.get<std::string>();
    r.lower_left = vec3(required(sj, path, "lower_left"), path + ".lower_left", s);
    r.lower_right = vec3(required(sj, path, "lower_right"), path + ".lower_right", s);
    r.upper_left = vec3(required(sj, path, "upper_left"), path + ".upper_left", s);
    const json& px = required(sj, path, "pixels");
    if (!px.is_array() || px.size() != 2 || !px[0].is_number_integer() || !px[1].is_number_integer()) {
      fail(path + ".pixels", "expected [width, height]");
    }
    r.pixels_w = px[0].get<int>();
    r.pixels_h = px[1].get<int>();
    try {
      screen_basis(r);
    } catch (const ConfigError& e) {
      fail(path, e.what());
    }
    rig.screens.push_back(std::move(r));
  }
  if (j.contains("interior_point")) rig.interior_point = vec3(j["interior_point"], "interior_point", s);
  rig.ipd = opt_number(j, "", "ipd", rig.ipd / s) * s;
  if (j.contains("glasses_offset")) rig.glasses_offset = vec3(j["glasses_offset"], "glasses_offset", s);
  rig.frame_rate_hz = opt_number(j, "", "frame_rate_hz", rig.frame_rate_hz);
  if (j.contains("tracker_correction")) {
    rig.tracker_correction = grid_from_json(j["tracker_correction"], s, "tracker_correction");
  }
  rig.unit = "m";
  rig.validate();
  return rig;
}

json to_json(const RigConfig& rig) {
  json screens = json::array();
  for (const auto& r : rig.screens) {
    screens.push_back({{"name", r.name},
                       {"lower_left", vec_json(r.lower_left)},
                       {"lower_right", vec_json(r.lower_right)},
                       {"upper_left", vec_json(r.upper_left)},
                       {"pixels", {r.pixels_w, r.pixels_h}}});
  }
  json j = {{"unit", "m"},
            {"screens", screens},
            {"interior_point", vec_json(rig.interior_point)},
            {"ipd", rig.ipd},
            {"glasses_offset", vec_json(rig.glasses_offset)},
            {"frame_rate_hz", rig.frame_rate_hz}};
  if (rig.tracker_correction) j["tracker_correction"] = to_json(*rig.tracker_correction);
  return j;
}

FaultSet faults_from_json(const json& j, const RigConfig& rig) {
  check_keys(j, "", {"unit", "tracker_offset", "distortion", "jitter_sigma", "latency_s", "screens"});
  const double s = file_scale(j);
  FaultSet f;
  if (j.contains("tracker_offset")) f.tracker_offset = vec3(j["tracker_offset"], "tracker_offset", s);
  if (j.contains("distortion")) f.distortion = grid_from_json(j["distortion"], s, "distortion");
  f.jitter_sigma = opt_number(j, "", "jitter_sigma", 0.0) * s;
  f.latency_s = opt_number(j, "", "latency_s", 0.0);
  if (j.contains("screens")) {
    const json& screens = j["screens"];
    if (!screens.is_object()) fail("screens", "expected an object keyed by screen name");
    for (const auto& [name, sj] : screens.items()) {
      const std::string path = "screens." + name;
      check_keys(sj, path, {"eye_swap", "genlock_break_row", "projector_affine", "color_gain",
                            "ghost_leak", "plane_shift"});
      ScreenFault sf;
      if (sj.contains("eye_swap")) {
        if (!sj["eye_swap"].is_boolean()) fail(path + ".eye_swap", "expected a boolean");
        sf.eye_swap = sj["eye_swap"].get<bool>();
      }
      if (sj.contains("genlock_break_row") && !sj["genlock_break_row"].is_null()) {
        if (!sj["genlock_break_row"].is_number_integer()) fail(path + ".genlock_break_row", "expected an integer");
        sf.genlock_break_row = sj["genlock_break_row"].get<int>();
      }
      if (sj.contains("projector_affine")) {
        const json& a = sj["projector_affine"];
        const std::string ap = path + ".projector_affine";
        if (!a.is_array() || a.size() != 2 || !a[0].is_array() || !a[1].is_array() ||
            a[0].size() != 3 || a[1].size() != 3) {
          fail(ap, "expected [[a, b, tx], [c, d, ty]]");
        }
        for (int r = 0; r < 2; ++r)
          for (int c = 0; c < 3; ++c)
            sf.projector_affine(r, c) = number(a[r][c], ap) * (c == 2 ? s : 1.0);
      }
      if (sj.contains("color_gain")) {
        const Vec3 g = vec3(sj["color_gain"], path + ".color_gain", 1.0);
        sf.color_gain = {g.x(), g.y(), g.z()};
      }
      sf.ghost_leak = opt_number(sj, path, "ghost_leak", 0.0);
      sf.plane_shift = opt_number(sj, path, "plane_shift", 0.0) * s;
      f.screens[name] = sf;
    }
  }
  f.validate(rig);
  return f;
}

json to_json(const FaultSet& f) {
  json screens = json::object();
  for (const auto& [name, sf] : f.screens) {
    const auto& a = sf.projector_affine;
    screens[name] = {
        {"eye_swap", sf.eye_swap},
        {"genlock_break_row", sf.genlock_break_row ? json(*sf.genlock_break_row) : json(nullptr)},
        {"projector_affine", {{a(0, 0), a(0, 1), a(0, 2)}, {a(1, 0), a(1, 1), a(1, 2)}}},
        {"color_gain", {sf.color_gain[0], sf.color_gain[1], sf.color_gain[2]}},
        {"ghost_leak", sf.ghost_leak},
        {"plane_shift", sf.plane_shift}};
  }
  json j = {{"unit", "m"},
            {"tracker_offset", vec_json(f.tracker_offset)},
            {"jitter_sigma", f.jitter_sigma},
            {"latency_s", f.latency_s},
            {"screens", screens}};
  if (f.distortion) j["distortion"] = to_json(*f.distortion);
  return j;
}

Scene scene_from_json(const json& j) {
  check_keys(j, "", {"unit", "probes", "segments", "wand_marker", "ground_plane"});
  const double s = file_scale(j);
  Scene scene;
  if (j.contains("probes")) {
    const json& ps = j["probes"];
    if (!ps.is_array()) fail("probes", "expected an array");
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const std::string path = "probes[" + std::to_string(k) + "]";
      check_keys(ps[k], path, {"label", "position"});
      const json& label = required(ps[k], path, "label");
      if (!label.is_string()) fail(path + ".label", "expected a string");
      scene.probes.push_back({label.get<std::string>(),
                              vec3(required(ps[k], path, "position"), path + ".position", s)});
    }
  }
  if (j.contains("segments")) {
    const json& ss = j["segments"];
    if (!ss.is_array()) fail("segments", "expected an array");
    for (std::size_t k = 0; k < ss.size(); ++k) {
      const std::string path = "segments[" + std::to_string(k) + "]";
      check_keys(ss[k], path, {"label", "a", "b"});
      const json& label = required(ss[k], path, "label");
      if (!label.is_string()) fail(path + ".label", "expected a string");
      scene.segments.push_back({label.get<std::string>(),
                                vec3(required(ss[k], path, "a"), path + ".a", s),
                                vec3(required(ss[k], path, "b"), path + ".b", s)});
    }
  }
  for (const char* key : {"wand_marker", "ground_plane"}) {
    if (!j.contains(key)) continue;
    if (!j[key].is_boolean()) fail(key, "expected a boolean");
    (std::string(key) == "wand_marker" ? scene.wand_marker : scene.ground_plane) = j[key].get<bool>();
  }
  scene.validate();
  return scene;
}

namespace {

Pose pose_from_json(const json& j, const std::string& path, double scale, const Pose& fallback) {
  check_keys(j, path, {"position", "orientation"});
  Pose p = fallback;
  if (j.contains("position")) p.position = vec3(j["position"], path + ".position", scale);
  if (j.contains("orientation")) {
    const json& q = j["orientation"];
    if (!q.is_array() || q.size() != 4) fail(path + ".orientation", "expected [w, x, y, z]");
    double c[4];
    for (int k = 0; k < 4; ++k) c[k] = number(q[k], path + ".orientation");
    p.orientation = Quat(c[0], c[1], c[2], c[3]);
  }
  try {
    validate(p);
  } catch (const ConfigError& e) {
    fail(path, e.what());
  }
  return p;
}

}  // namespace

Trajectory trajectory_from_json(const json& j) {
  check_keys(j, "", {"unit", "kind", "duration", "head", "wand", "center", "axis", "amplitude",
                     "frequency_hz", "axis_u", "axis_v", "radius", "speed", "velocity"});
  const double s = file_scale(j);
  const json& kind_j = required(j, "", "kind");
  if (!kind_j.is_string()) fail("kind", "expected a string");
  const std::string kind = kind_j.get<std::string>();
  const double duration = number(required(j, "", "duration"), "duration");
  if (duration < 0.0) fail("duration", "must be non-negative");
  Pose head_default;
  head_default.position = Vec3(0.0, 1.5, 0.0);
  Pose wand_default;
  wand_default.position = Vec3(0.0, 1.2, -0.7);
  const Pose head = j.contains("head") ? pose_from_json(j["head"], "head", s, head_default) : head_default;
  const Pose wand = j.contains("wand") ? pose_from_json(j["wand"], "wand", s, wand_default) : wand_default;
  auto v = [&](const char* key, const Vec3& fallback, double scale) {
    return j.contains(key) ? vec3(j[key], key, scale) : fallback;
  };
  if (kind == "stationary") return Trajectory::stationary(head, wand, duration);
  if (kind == "wand_wag") {
    const Vec3 axis = v("axis", Vec3::UnitX(), 1.0);
    if (axis.norm() == 0.0) fail("axis", "must be nonzero");
    return Trajectory::wand_wag(head, v("center", wand.position, s), axis,
                                opt_number(j, "", "amplitude", 0.3 / s) * s,
                                opt_number(j, "", "frequency_hz", 1.0), duration);
  }
  if (kind == "wand_circle") {
    const double radius = opt_number(j, "", "radius", 0.3 / s) * s;
    if (!(radius > 0.0)) fail("radius", "must be positive");
    const Vec3 u = v("axis_u", Vec3::UnitX(), 1.0), w = v("axis_v", Vec3::UnitY(), 1.0);
    if (u.cross(w).norm() == 0.0) fail("axis_v", "must not be parallel to axis_u");
    return Trajectory::wand_circle(head, v("center", wand.position, s), u, w, radius,
                                   opt_number(j, "", "speed", 0.5 / s) * s, duration);
  }
  if (kind == "head_linear") {
    return Trajectory::head_linear(head, v("velocity", Vec3::Zero(), s), wand, duration);
  }
  fail("kind", "unknown trajectory kind '" + kind + "'");
}

calib::CalibrationPlan plan_from_json(const json& j, const RigConfig& rig) {
  check_keys(j, "", {"unit", "targets", "stations", "lattice", "viewpoints", "viewpoint_count",
                     "viewpoint_radius", "grid", "seed"});
  const double s = file_scale(j);
  calib::CalibrationPlan plan = calib::default_plan(rig);
  if (j.contains("targets")) {
    const json& ts = j["targets"];
    if (!ts.is_array() || ts.empty()) fail("targets", "expected a non-empty array");
    plan.targets.clear();
    std::set<std::string> labels;
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const std::string path = "targets[" + std::to_string(k) + "]";
      check_keys(ts[k], path, {"label", "position"});
      const json& label = required(ts[k], path, "label");
      if (!label.is_string()) fail(path + ".label", "expected a string");
      if (!labels.insert(label.get<std::string>()).second) fail(path + ".label", "duplicate label");
      plan.targets.push_back({label.get<std::string>(),
                              vec3(required(ts[k], path, "position"), path + ".position", s)});
    }
    for (std::size_t a = 0; a < plan.targets.size(); ++a)
      for (std::size_t b = a + 1; b < plan.targets.size(); ++b)
        if ((plan.targets[a].position - plan.targets[b].position).norm() < 1e-9) {
          fail("targets[" + std::to_string(b) + "].position", "duplicates another target");
        }
  }
  auto dims_from = [](const json& d, const std::string& path) {
    if (!d.is_array() || d.size() != 3) fail(path, "expected [nx, ny, nz]");
    std::array<int, 3> out{};
    for (int k = 0; k < 3; ++k) {
      if (!d[k].is_number_integer() || d[k].get<int>() < 1) fail(path, "expected positive integers");
      out[k] = d[k].get<int>();
    }
    return out;
  };
  if (j.contains("grid")) {
    const json& g = j["grid"];
    check_keys(g, "grid", {"min", "max", "dims"});
    plan.grid_min = vec3(required(g, "grid", "min"), "grid.min", s);
    plan.grid_max = vec3(required(g, "grid", "max"), "grid.max", s);
    if (g.contains("dims")) plan.grid_dims = dims_from(g["dims"], "grid.dims");
    if ((plan.grid_max - plan.grid_min).minCoeff() <= 0.0) fail("grid", "max must exceed min on every axis");
  }
  if (j.contains("stations") && j.contains("lattice")) fail("lattice", "give either stations or lattice");
  if (j.contains("stations")) {
    const json& st = j["stations"];
    if (!st.is_array() || st.empty()) fail("stations", "expected a non-empty array");
    plan.stations.clear();
    for (std::size_t k = 0; k < st.size(); ++k) {
      plan.stations.push_back(vec3(st[k], "stations[" + std::to_string(k) + "]", s));
    }
  } else if (j.contains("lattice")) {
    const json& l = j["lattice"];
    check_keys(l, "lattice", {"min", "max", "dims"});
    plan.stations = calib::station_lattice(vec3(required(l, "lattice", "min"), "lattice.min", s),
                                           vec3(required(l, "lattice", "max"), "lattice.max", s),
                                           dims_from(required(l, "lattice", "dims"), "lattice.dims"));
  }
  if (j.contains("viewpoints")) {
    const json& vp = j["viewpoints"];
    if (!vp.is_array() || vp.empty()) fail("viewpoints", "expected a non-empty array");
    plan.viewpoint_offsets.clear();
    for (std::size_t k = 0; k < vp.size(); ++k) {
      plan.viewpoint_offsets.push_back(vec3(vp[k], "viewpoints[" + std::to_string(k) + "]", s));
    }
  } else if (j.contains("viewpoint_count") || j.contains("viewpoint_radius")) {
    const json count = j.value("viewpoint_count", json(5));
    if (!count.is_number_integer() || count.get<int>() < 1) fail("viewpoint_count", "expected a positive integer");
    plan.viewpoint_offsets = calib::default_viewpoints(
        count.get<int>(), opt_number(j, "", "viewpoint_radius", 0.1 / s) * s);
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) fail("seed", "expected a non-negative integer");
    plan.seed = j["seed"].get<std::uint64_t>();
  }
  return plan;
}

json to_json(const Scene& scene) {
  json probes = json::array(), segments = json::array();
  for (const auto& p : scene.probes) probes.push_back({{"label", p.label}, {"position", vec_json(p.position)}});
  for (const auto& s : scene.segments) {
    segments.push_back({{"label", s.label}, {"a", vec_json(s.a)}, {"b", vec_json(s.b)}});
  }
  return {{"unit", "m"},
          {"probes", probes},
          {"segments", segments},
          {"wand_marker", scene.wand_marker},
          {"ground_plane", scene.ground_plane}};
}

json to_json(const diagnostics::Finding& f) {
  json estimates = json::array();
  for (const auto& e : f.estimates) {
    json value;
    if (e.value.size() == 1) {
      value = number_or_null(e.value.front());
    } else {
      value = json::array();
      for (double v : e.value) value.push_back(number_or_null(v));
    }
    estimates.push_back({{"name", e.name}, {"value", value}, {"unit", e.unit}});
  }
  return {{"test_name", f.test_name},
          {"subject", f.subject},
          {"status", diagnostics::to_string(f.status)},
          {"estimates", estimates},
          {"evidence", f.evidence},
          {"notes", f.notes},
          {"threshold", number_or_null(f.threshold)},
          {"threshold_unit", f.threshold_unit},
          {"uncertainty", number_or_null(f.uncertainty)}};
}

json to_json(const diagnostics::DiagnosticReport& report) {
  json findings = json::array();
  int counts[3] = {0, 0, 0};
  for (const auto& f : report.findings) {
    findings.push_back(to_json(f));
    ++counts[static_cast<int>(f.status)];
  }
  return {{"schema_version", kReportSchemaVersion},
          {"rig_digest", report.rig_digest},
          {"faults_digest", report.faults_digest},
          {"seed", report.seed},
          {"findings", findings},
          {"summary", {{"pass", counts[0]}, {"fail", counts[1]}, {"inconclusive", counts[2]}}}};
}

json to_json(const DisplayedFrame& frame) {
  auto pose = [](const Pose& p) {
    const Quat& q = p.orientation;
    return json{{"position", vec_json(p.position)}, {"orientation", {q.w(), q.x(), q.y(), q.z()}}};
  };
  auto points = [](const std::vector<LabeledPoint>& pts) {
    json out = json::array();
    for (const auto& lp : pts) {
      out.push_back({{"label", lp.label},
                     {"u", lp.point.u},
                     {"v", lp.point.v},
                     {"px", lp.point.px},
                     {"py", lp.point.py}});
    }
    return out;
  };
  json screens = json::array();
  for (const auto& sv : frame.screens) {
    screens.push_back({{"screen", sv.screen},
                       {"exploded", sv.exploded},
                       {"left", points(sv.left)},
                       {"right", points(sv.right)}});
  }
  return {{"time", frame.time},
          {"index", frame.index},
          {"parity", frame.parity},
          {"truth", {{"head", pose(frame.truth.head)}, {"wand", pose(frame.truth.wand)}}},
          {"reported", {{"head", pose(frame.reported.head)}, {"wand", pose(frame.reported.wand)}}},
          {"screens", screens}};
}

json to_json(const calib::CalibrationResult& result) {
  json stations = json::array();
  for (const auto& s : result.stations) {
    stations.push_back({{"nominal", vec_json(s.nominal)},
                        {"reported_position", vec_json(s.station.position)},
                        {"offset", vec_json(s.station.offset)},
                        {"observations", s.observations},
                        {"iterations", s.solve.iterations},
                        {"residual_rms", s.solve.residual_rms}});
  }
  return {{"unit", "m"}, {"stations", stations}, {"grid", to_json(result.grid)}};
}

std::vector<std::string> validate_report(const json& r) {
  std::vector<std::string> errs;
  auto need = [&](const json& obj, const std::string& path, const char* key, auto check, const char* what) {
    if (!obj.contains(key)) {
      errs.push_back(join(path, key) + ": missing");
    } else if (!check(obj[key])) {
      errs.push_back(join(path, key) + ": expected " + what);
    }
  };
  auto is_num = [](const json& v) { return v.is_number() || v.is_null(); };
  auto is_str = [](const json& v) { return v.is_string(); };
  auto is_str_array = [](const json& v) {
    return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_string(); });
  };
  if (!r.is_object()) return {"report: expected an object"};
  need(r, "", "schema_version", [](const json& v) { return v == kReportSchemaVersion; }, "1");
  need(r, "", "rig_digest", is_str, "a string");
  need(r, "", "faults_digest", is_str, "a string");
  need(r, "", "seed", [](const json& v) { return v.is_number_unsigned() || v.is_number_integer(); },
       "an integer");
  need(r, "", "findings", [](const json& v) { return v.is_array(); }, "an array");
  if (!r.contains("findings") || !r["findings"].is_array()) return errs;
  for (std::size_t k = 0; k < r["findings"].size(); ++k) {
    const json& f = r["findings"][k];
    const std::string path = "findings[" + std::to_string(k) + "]";
    if (!f.is_object()) {
      errs.push_back(path + ": expected an object");
      continue;
    }
    need(f, path, "test_name", is_str, "a string");
    need(f, path, "subject", is_str, "a string");
    need(f, path, "status",
         [](const json& v) { return v == "pass" || v == "fail" || v == "inconclusive"; },
         "pass, fail or inconclusive");
    need(f, path, "evidence", is_str_array, "an array of strings");
    need(f, path, "notes", is_str_array, "an array of strings");
    need(f, path, "threshold", is_num, "a number");
    need(f, path, "threshold_unit", is_str, "a string");
    need(f, path, "uncertainty", is_num, "a number");
    need(f, path, "estimates", [](const json& v) { return v.is_array(); }, "an array");
    if (!f.contains("estimates") || !f["estimates"].is_array()) continue;
    for (std::size_t e = 0; e < f["estimates"].size(); ++e) {
      const json& est = f["estimates"][e];
      const std::string ep = path + ".estimates[" + std::to_string(e) + "]";
      if (!est.is_object()) {
        errs.push_back(ep + ": expected an object");
        continue;
      }
      need(est, ep, "name", is_str, "a string");
      need(est, ep, "unit", is_str, "a string");
      need(est, ep, "value",
           [&](const json& v) {
             return is_num(v) || (v.is_array() && std::all_of(v.begin(), v.end(), is_num));
           },
           "a number or an array of numbers");
    }
  }
  return errs;
}

std::string digest(const json& j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

std::string rig_digest(const RigConfig& rig) { return digest(to_json(rig)); }
std::string faults_digest(const FaultSet& faults) { return digest(to_json(faults)); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot write");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  fs::rename(tmp, target);
}

}  // namespace cavecheck::io
