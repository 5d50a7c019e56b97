#include "lhcalib/io.hpp"

#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace lhcalib::io {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::validation, what); }

Vec3 vec3_from_json(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) invalid(field + " must be a 3-element array");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number()) invalid(field + " entries must be numbers");
    v(i) = j[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

double number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) invalid(std::string(key) + " must be a number");
  return j.at(key).get<double>();
}

double required_number(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) invalid(std::string("missing field ") + key);
  if (!j.at(key).is_number()) invalid(std::string(key) + " must be a number");
  return j.at(key).get<double>();
}

std::int64_t parse_int(std::string_view field, std::size_t line, const std::string& source) {
  std::int64_t value = 0;
  const auto* begin = field.data();
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    invalid(source + ":" + std::to_string(line) + ": expected an integer, got '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

json pose_to_json(const Pose6DoF& p) {
  return {{"x_m", p.x}, {"y_m", p.y}, {"z_m", p.z},
          {"alpha_deg", rad2deg(p.alpha)}, {"beta_deg", rad2deg(p.beta)}, {"gamma_deg", rad2deg(p.gamma)}};
}

Pose6DoF pose_from_json(const json& j) {
  return {required_number(j, "x_m"), required_number(j, "y_m"), required_number(j, "z_m"),
          deg2rad(required_number(j, "alpha_deg")), deg2rad(required_number(j, "beta_deg")),
          deg2rad(required_number(j, "gamma_deg"))};
}

json geometry_to_json(const BoardGeometry& g) {
  json diodes = json::array();
  for (const auto& d : g.diodes()) diodes.push_back(vec3_to_json(d + g.recenter_offset()));
  return {{"board_id", g.board_id()}, {"diodes_m", diodes}};
}

BoardGeometry geometry_from_json(const json& j) {
  if (!j.is_object() || !j.contains("diodes_m") || !j.at("diodes_m").is_array()) {
    invalid("geometry needs a diodes_m array");
  }
  std::vector<Vec3> pts;
  for (const auto& d : j.at("diodes_m")) pts.push_back(vec3_from_json(d, "diodes_m entry"));
  const std::string id = j.contains("board_id") && j.at("board_id").is_string() ? j.at("board_id").get<std::string>() : "board";
  return BoardGeometry(id, std::move(pts));
}

BoardGeometry load_geometry(const std::string& path) { return geometry_from_json(load_json(path)); }

json intrinsics_to_json(const StationIntrinsics& in) {
  return {{"azimuth_laser_offset_m", vec3_to_json(in.azimuth_laser_offset)},
          {"elevation_laser_offset_m", vec3_to_json(in.elevation_laser_offset)}};
}

StationIntrinsics intrinsics_from_json(const json& j) {
  if (!j.is_object()) invalid("intrinsics must be a JSON object");
  StationIntrinsics in;
  if (j.contains("azimuth_laser_offset_m")) in.azimuth_laser_offset = vec3_from_json(j.at("azimuth_laser_offset_m"), "azimuth_laser_offset_m");
  if (j.contains("elevation_laser_offset_m")) in.elevation_laser_offset = vec3_from_json(j.at("elevation_laser_offset_m"), "elevation_laser_offset_m");
  in.validate();
  return in;
}

StationIntrinsics load_intrinsics(const std::string& path) { return intrinsics_from_json(load_json(path)); }

json scenario_to_json(const Scenario& s) {
  json dropout = json::object();
  for (const auto& [id, p] : s.noise.diode_dropout) dropout[std::to_string(id)] = p;
  return {
      {"schema", kScenarioSchema},
      {"master_pose", pose_to_json(s.master_pose)},
      {"slave_pose", pose_to_json(s.slave_pose)},
      {"geometry", geometry_to_json(s.geometry)},
      {"master_intrinsics", intrinsics_to_json(s.master_intrinsics)},
      {"slave_intrinsics", intrinsics_to_json(s.slave_intrinsics)},
      {"trajectory",
       {{"kind", to_string(s.trajectory.kind)},
        {"anchor", pose_to_json(s.trajectory.anchor)},
        {"speed_mps", s.trajectory.speed},
        {"size_m", s.trajectory.size},
        {"wobble_deg", rad2deg(s.trajectory.wobble)},
        {"wobble_hz", s.trajectory.wobble_hz},
        {"phase_s", s.trajectory.phase}}},
      {"duration_s", s.duration},
      {"noise",
       {{"quantization", s.noise.quantization},
        {"timing_jitter_sd_s", s.noise.timing_jitter_sd},
        {"dropout_prob", s.noise.dropout_prob},
        {"diode_dropout", dropout}}},
  };
}

Scenario scenario_from_json(const json& j) {
  if (!j.is_object()) invalid("scenario must be a JSON object");
  Scenario s;
  s.master_pose = j.contains("master_pose") ? pose_from_json(j.at("master_pose")) : Pose6DoF::identity();
  if (!j.contains("slave_pose")) invalid("scenario needs slave_pose");
  s.slave_pose = pose_from_json(j.at("slave_pose"));
  if (j.contains("geometry")) s.geometry = geometry_from_json(j.at("geometry"));
  if (j.contains("master_intrinsics")) s.master_intrinsics = intrinsics_from_json(j.at("master_intrinsics"));
  if (j.contains("slave_intrinsics")) s.slave_intrinsics = intrinsics_from_json(j.at("slave_intrinsics"));
  if (!j.contains("trajectory")) invalid("scenario needs a trajectory");
  const json& t = j.at("trajectory");
  if (!t.is_object()) invalid("trajectory must be an object");
  if (t.contains("kind")) {
    if (!t.at("kind").is_string()) invalid("trajectory kind must be a string");
    s.trajectory.kind = parse_trajectory_kind(t.at("kind").get<std::string>());
  }
  if (t.contains("anchor")) s.trajectory.anchor = pose_from_json(t.at("anchor"));
  s.trajectory.speed = number(t, "speed_mps", s.trajectory.speed);
  s.trajectory.size = number(t, "size_m", s.trajectory.size);
  s.trajectory.wobble = deg2rad(number(t, "wobble_deg", rad2deg(s.trajectory.wobble)));
  s.trajectory.wobble_hz = number(t, "wobble_hz", s.trajectory.wobble_hz);
  s.trajectory.phase = number(t, "phase_s", s.trajectory.phase);
  s.duration = number(j, "duration_s", s.duration);
  if (j.contains("noise")) {
    const json& n = j.at("noise");
    if (n.contains("quantization")) {
      if (!n.at("quantization").is_boolean()) invalid("noise.quantization must be a boolean");
      s.noise.quantization = n.at("quantization").get<bool>();
    }
    s.noise.timing_jitter_sd = number(n, "timing_jitter_sd_s", 0.0);
    s.noise.dropout_prob = number(n, "dropout_prob", 0.0);
    if (n.contains("diode_dropout")) {
      for (const auto& [key, value] : n.at("diode_dropout").items()) {
        if (!value.is_number()) invalid("diode_dropout values must be numbers");
        int id = 0;
        const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), id);
        if (ec != std::errc() || ptr != key.data() + key.size()) invalid("diode_dropout keys must be diode ids");
        s.noise.diode_dropout[id] = value.get<double>();
      }
    }
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::string& path) { return scenario_from_json(load_json(path)); }

json truth_to_json(const GroundTruth& t) {
  return {{"schema", kTruthSchema},
          {"master_pose", pose_to_json(t.master_pose)},
          {"slave_pose", pose_to_json(t.slave_pose)},
          {"relative_slave_pose", pose_to_json(t.relative_slave_pose)},
          {"seed", t.seed},
          {"duration_s", t.duration},
          {"tick_hz", t.tick_hz},
          {"slots", t.slots},
          {"first_slot_time_s", t.first_slot_time}};
}

GroundTruth truth_from_json(const json& j) {
  if (!j.is_object() || !j.contains("relative_slave_pose")) invalid("ground truth needs relative_slave_pose");
  GroundTruth t;
  if (j.contains("master_pose")) t.master_pose = pose_from_json(j.at("master_pose"));
  if (j.contains("slave_pose")) t.slave_pose = pose_from_json(j.at("slave_pose"));
  t.relative_slave_pose = pose_from_json(j.at("relative_slave_pose"));
  if (j.contains("seed")) t.seed = j.at("seed").get<std::uint64_t>();
  t.duration = number(j, "duration_s", 0.0);
  t.tick_hz = number(j, "tick_hz", kTickHz);
  if (j.contains("slots")) t.slots = j.at("slots").get<long>();
  t.first_slot_time = number(j, "first_slot_time_s", 0.0);
  return t;
}

GroundTruth load_truth(const std::string& path) { return truth_from_json(load_json(path)); }

void write_pulses(std::ostream& os, const PulseStream& stream) {
  os << "# " << kPulseSchema << "; tick_hz=" << std::llround(stream.tick_hz) << "; widths=60-80/90-110/4-40us\n";
  std::string line;
  for (const auto& e : stream.events) {
    line.clear();
    line += std::to_string(e.diode_id);
    line += ',';
    line += std::to_string(e.t_start);
    line += ',';
    line += std::to_string(e.t_end);
    line += '\n';
    os << line;
  }
}

PulseStream read_pulses(std::istream& is, const std::string& source) {
  std::string line;
  if (!std::getline(is, line)) invalid(source + ": empty pulse file");
  const std::string prefix = std::string("# ") + kPulseSchema;
  if (line.rfind(prefix, 0) != 0) invalid(source + ":1: missing '" + prefix + "' header");
  PulseStream stream;
  const auto pos = line.find("tick_hz=");
  if (pos == std::string::npos) invalid(source + ":1: header lacks tick_hz");
  auto end = line.find(';', pos);
  if (end == std::string::npos) end = line.size();
  const std::int64_t hz = parse_int(std::string_view(line).substr(pos + 8, end - pos - 8), 1, source);
  if (hz <= 0) invalid(source + ":1: tick_hz must be positive");
  stream.tick_hz = static_cast<double>(hz);

  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.back() == '\r') invalid(source + ":" + std::to_string(line_no) + ": CR line ending");
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      invalid(source + ":" + std::to_string(line_no) + ": expected 3 comma-separated integers");
    }
    const std::string_view v(line);
    PulseEvent e;
    e.diode_id = static_cast<int>(parse_int(v.substr(0, c1), line_no, source));
    e.t_start = parse_int(v.substr(c1 + 1, c2 - c1 - 1), line_no, source);
    e.t_end = parse_int(v.substr(c2 + 1), line_no, source);
    if (e.diode_id < 0) invalid(source + ":" + std::to_string(line_no) + ": negative diode id");
    if (e.t_end <= e.t_start) invalid(source + ":" + std::to_string(line_no) + ": t_end must exceed t_start");
    stream.events.push_back(e);
  }
  return stream;
}

void save_pulses(const std::string& path, const PulseStream& stream) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::io, "cannot write " + path);
  write_pulses(os, stream);
  if (!os) throw Error(ErrorKind::io, "write failed: " + path);
}

PulseStream load_pulses(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::io, "cannot open pulse file " + path);
  return read_pulses(is, path);
}

void write_records(std::ostream& os, std::span<const SweepRecord> records) {
  os << "slot_time_ticks,station,axis,diode_id,angle_deg,dt_s\n";
  os << std::setprecision(17);
  for (const auto& r : records) {
    for (const auto& [id, angle] : r.angles) {
      os << r.slot_time << ',' << to_string(r.station) << ',' << to_string(r.axis) << ',' << id << ','
         << rad2deg(angle) << ',' << r.raw_dt.at(id) << '\n';
    }
  }
}

void write_frames(std::ostream& os, std::span<const AngleFrame> frames) {
  os << "t_s,station,diode_id,theta_deg,phi_deg,theta_measured,phi_measured\n";
  os << std::setprecision(17);
  for (const auto& f : frames) {
    for (const auto& [id, a] : f.angles) {
      os << f.t << ',' << to_string(f.station) << ',' << id << ',' << rad2deg(a.theta) << ',' << rad2deg(a.phi) << ','
         << (a.theta_measured ? 1 : 0) << ',' << (a.phi_measured ? 1 : 0) << '\n';
    }
  }
}

namespace {

json report_to_json(const ObjectiveReport& r) {
  return {{"solution", pose_to_json(r.solution)}, {"residual", r.residual}, {"iterations", r.iterations},
          {"evaluations", r.evaluations}, {"converged", r.converged}, {"restarts_used", r.restarts_used},
          {"diagnostics", r.diagnostics}};
}

}  // namespace

json result_to_json(const CalibrationResult& result, bool deterministic) {
  const auto& d = result.diagnostics;
  json counters = json::object();
  for (const auto& [k, v] : d.messages.counters) counters[k] = v;
  json diag = {
      {"master_records", d.master_records},
      {"slave_records", d.slave_records},
      {"master_frames", d.master_frames},
      {"slave_frames", d.slave_frames},
      {"master_dropped_frames", d.master_dropped},
      {"slave_dropped_frames", d.slave_dropped},
      {"aligned_points", d.aligned_points},
      {"final_frames", d.final_frames},
      {"kabsch_weighted_rmsd_m", d.kabsch_weighted_rmsd},
      {"kabsch_conditioning", d.kabsch_conditioning},
      {"initial_method", d.initial_method},
      {"epsilon_initial", d.epsilon_initial},
      {"refinement_delta_position_m", d.delta_position_m},
      {"refinement_delta_rotation_deg", rad2deg(d.delta_rotation_rad)},
      {"final_optimizer", report_to_json(d.final_report)},
      {"messages", d.messages.messages},
      {"counters", counters},
  };
  json j = {{"schema", kResultSchema},
            {"units", "meters and degrees"},
            {"slave_pose", pose_to_json(result.slave_pose)},
            {"initial_slave_pose", pose_to_json(result.initial_slave_pose)},
            {"epsilon_final", result.epsilon_final},
            {"converged", result.converged},
            {"diagnostics", diag}};
  if (!deterministic) {
    j["diagnostics"]["runtime_s"] = d.runtime_s;
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::ostringstream ts;
    ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
    j["generated_at"] = ts.str();
  }
  return j;
}

Pose6DoF load_result_pose(const std::string& path) {
  const json j = load_json(path);
  if (!j.contains("schema") || j.at("schema") != kResultSchema) invalid(path + ": not a " + kResultSchema + " file");
  return pose_from_json(j.at("slave_pose"));
}

void save_json(const std::string& path, const json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::io, "cannot write " + path);
  os << j.dump(2) << '\n';
}

json load_json(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::io, "cannot open " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::validation, path + ": invalid JSON: " + e.what());
  }
}

}  // namespace lhcalib::io
