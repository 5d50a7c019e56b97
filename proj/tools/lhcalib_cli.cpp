// lhcalib: simulate captures, decode and reconstruct them, calibrate the
// slave station and score results against ground truth.
//
// Exit codes: 0 ok, 2 input/validation, 3 scenario coverage, 4 pipeline stage.

#include "lhcalib/io.hpp"
#include "lhcalib/pipeline.hpp"
#include "lhcalib/simulator.hpp"

#include <CLI11.hpp>

#include <glob.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace lhcalib;

namespace {

struct GlobalOptions {
  std::string geometry;
  std::string intrinsics;
  std::string reconstruct = "full";
  std::uint64_t seed = 1;
  std::string out = ".";
  bool deterministic = false;
  std::optional<double> nm_tol_f;
  std::optional<double> nm_tol_x;
  std::optional<int> nm_max_iter;
  bool emit_plots = false;
  bool allow_degenerate_path = false;
  bool deskew = false;
};

struct StationPair {
  StationIntrinsics master;
  StationIntrinsics slave;
};

/// Intrinsics file: either one {azimuth_laser_offset_m, elevation_laser_offset_m}
/// object for both stations or {"master": {...}, "slave": {...}}.
StationPair load_station_intrinsics(const std::string& path) {
  const io::json j = io::load_json(path);
  if (j.is_object() && (j.contains("master") || j.contains("slave"))) {
    StationPair p;
    if (j.contains("master")) p.master = io::intrinsics_from_json(j.at("master"));
    if (j.contains("slave")) p.slave = io::intrinsics_from_json(j.at("slave"));
    return p;
  }
  const StationIntrinsics both = io::intrinsics_from_json(j);
  return {both, both};
}

fs::path out_dir(const GlobalOptions& g) {
  fs::path dir(g.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorKind::io, "cannot create output directory " + g.out);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::io, "cannot write " + path.string());
  os << text;
}

CalibrationConfig make_config(const GlobalOptions& g) {
  CalibrationConfig cfg;
  if (!g.geometry.empty()) cfg.geometry = io::load_geometry(g.geometry);
  if (!g.intrinsics.empty()) {
    const StationPair p = load_station_intrinsics(g.intrinsics);
    cfg.master_intrinsics = p.master;
    cfg.slave_intrinsics = p.slave;
  }
  cfg.strategy = parse_strategy(g.reconstruct);
  for (NmOptions* nm : {&cfg.path.nm, &cfg.final_nm}) {
    if (g.nm_tol_f) nm->tolerance_f = *g.nm_tol_f;
    if (g.nm_tol_x) nm->tolerance_x = *g.nm_tol_x;
    if (g.nm_max_iter) nm->max_iterations = *g.nm_max_iter;
    nm->validate();
  }
  cfg.decode.diode_count = cfg.geometry.size();
  cfg.allow_degenerate_path = g.allow_degenerate_path;
  cfg.deskew = g.deskew;
  return cfg;
}

std::string fmt(double v, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string pose_line(const Pose6DoF& p) {
  return "x " + fmt(p.x, 4) + " m, y " + fmt(p.y, 4) + " m, z " + fmt(p.z, 4) + " m, alpha " +
         fmt(rad2deg(p.alpha), 3) + " deg, beta " + fmt(rad2deg(p.beta), 3) + " deg, gamma " +
         fmt(rad2deg(p.gamma), 3) + " deg";
}

void write_path_csv(const fs::path& path, std::span<const PathPose> poses, const Pose6DoF& frame) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::io, "cannot write " + path.string());
  os << "t_s,x_m,y_m,z_m,alpha_deg,beta_deg,gamma_deg,residual,interpolated\n" << std::setprecision(12);
  for (const auto& p : poses) {
    const Pose6DoF q = compose(frame, p.pose);
    os << p.t << ',' << q.x << ',' << q.y << ',' << q.z << ',' << rad2deg(q.alpha) << ',' << rad2deg(q.beta) << ','
       << rad2deg(q.gamma) << ',' << p.residual << ',' << (p.interpolated ? 1 : 0) << '\n';
  }
}

int cmd_simulate(const GlobalOptions& g, const std::string& scenario_path) {
  Scenario scenario = io::load_scenario(scenario_path);
  if (!g.geometry.empty()) scenario.geometry = io::load_geometry(g.geometry);
  if (!g.intrinsics.empty()) {
    const StationPair p = load_station_intrinsics(g.intrinsics);
    scenario.master_intrinsics = p.master;
    scenario.slave_intrinsics = p.slave;
  }
  const SimulationOutput sim = simulate_capture(scenario, g.seed);
  const fs::path dir = out_dir(g);
  io::save_pulses((dir / "master_pulses.csv").string(), sim.master);
  io::save_pulses((dir / "slave_pulses.csv").string(), sim.slave);
  io::save_json((dir / "ground_truth.json").string(), io::truth_to_json(sim.truth));
  std::cout << "simulated " << sim.truth.slots << " slots (" << sim.master.events.size() << " master, "
            << sim.slave.events.size() << " slave pulses) into " << dir.string() << "\n";
  return 0;
}

int cmd_decode(const GlobalOptions& g, const std::string& pulses, const std::string& station) {
  const CalibrationConfig cfg = make_config(g);
  const PulseStream stream = io::load_pulses(pulses);
  const DecodeResult decoded = decode_stream(stream, cfg.decode);
  std::vector<SweepRecord> records = decoded.records;
  if (!station.empty()) records = station_records(decoded.records, station == "slave" ? Station::slave : Station::master);
  const fs::path dir = out_dir(g);
  std::ofstream os(dir / "records.csv", std::ios::binary);
  if (!os) throw Error(ErrorKind::io, "cannot write records.csv");
  io::write_records(os, records);
  std::cout << records.size() << " sweep records written to " << (dir / "records.csv").string() << "\n";
  for (const auto& [k, v] : decoded.diagnostics.counters) std::cout << "  " << k << ": " << v << "\n";
  return 0;
}

int cmd_reconstruct(const GlobalOptions& g, const std::string& pulses, const std::string& station) {
  const CalibrationConfig cfg = make_config(g);
  const PulseStream stream = io::load_pulses(pulses);
  const DecodeResult decoded = decode_stream(stream, cfg.decode);
  const std::vector<SweepRecord> records =
      station_records(decoded.records, station == "slave" ? Station::slave : Station::master);
  const ReconstructResult frames = reconstruct(records, cfg.strategy);
  const fs::path dir = out_dir(g);
  std::ofstream os(dir / "frames.csv", std::ios::binary);
  if (!os) throw Error(ErrorKind::io, "cannot write frames.csv");
  io::write_frames(os, frames.frames);
  std::cout << frames.frames.size() << " frames (" << to_string(cfg.strategy) << ") written to "
            << (dir / "frames.csv").string() << "\n";
  return 0;
}

std::string summary_text(const CalibrationResult& r, const CalibrationConfig& cfg, bool deterministic) {
  const auto& d = r.diagnostics;
  std::ostringstream os;
  os << "lhcalib calibration summary\n\n";
  os << "slave pose (master frame): " << pose_line(r.slave_pose) << "\n";
  os << "initial estimate (" << d.initial_method << "): " << pose_line(r.initial_slave_pose) << "\n";
  os << "refinement moved the pose by " << fmt(d.delta_position_m * 1000.0, 2) << " mm and "
     << fmt(rad2deg(d.delta_rotation_rad), 4) << " deg\n";
  os << "epsilon_L: " << d.epsilon_initial << " -> " << r.epsilon_final << (r.converged ? "" : " (NOT converged)") << "\n\n";
  os << "decode:        " << d.master_records << " master / " << d.slave_records << " slave sweep records\n";
  os << "reconstruct:   " << to_string(cfg.strategy) << ", " << d.master_frames << " master / " << d.slave_frames
     << " slave frames\n";
  os << "path:          dropped " << d.master_dropped << " master / " << d.slave_dropped << " slave frames\n";
  os << "alignment:     " << d.aligned_points << " matched points\n";
  os << "kabsch:        weighted rmsd " << fmt(d.kabsch_weighted_rmsd * 1000.0, 2) << " mm, conditioning "
     << fmt(d.kabsch_conditioning, 4) << "\n";
  os << "final fit:     " << d.final_frames << " frames, " << d.final_report.iterations << " iterations, "
     << d.final_report.evaluations << " evaluations\n";
  if (!deterministic) os << "wall clock:    " << fmt(d.runtime_s, 2) << " s\n";
  if (!d.messages.messages.empty()) {
    os << "\nnotes:\n";
    for (const auto& m : d.messages.messages) os << "  - " << m << "\n";
  }
  if (!d.messages.counters.empty()) {
    os << "\ncounters:\n";
    for (const auto& [k, v] : d.messages.counters) os << "  " << k << ": " << v << "\n";
  }
  return os.str();
}

int cmd_calibrate(const GlobalOptions& g, const std::string& master, const std::string& slave) {
  const CalibrationConfig cfg = make_config(g);
  const PulseStream master_pulses = io::load_pulses(master);
  const PulseStream slave_pulses = io::load_pulses(slave);
  const CalibrationResult result = calibrate(master_pulses, slave_pulses, cfg);
  const fs::path dir = out_dir(g);
  io::save_json((dir / "calibration_result.json").string(), io::result_to_json(result, g.deterministic));
  const std::string summary = summary_text(result, cfg, g.deterministic);
  write_text(dir / "calibration_summary.txt", summary);
  if (g.emit_plots) {
    write_path_csv(dir / "master_path.csv", result.master_path, Pose6DoF::identity());
    write_path_csv(dir / "slave_path.csv", result.slave_path, Pose6DoF::identity());
    write_path_csv(dir / "slave_path_in_master.csv", result.slave_path, result.slave_pose);
  }
  std::cout << summary;
  return 0;
}

std::vector<std::string> expand(const std::vector<std::string>& patterns) {
  std::vector<std::string> files;
  for (const auto& p : patterns) {
    glob_t g{};
    if (::glob(p.c_str(), 0, nullptr, &g) == 0) {
      for (std::size_t i = 0; i < g.gl_pathc; ++i) files.emplace_back(g.gl_pathv[i]);
    } else {
      files.push_back(p);  // let the loader report the missing file
    }
    ::globfree(&g);
  }
  return files;
}

int cmd_evaluate(const GlobalOptions& g, const std::vector<std::string>& results, const std::string& truth_path) {
  const GroundTruth truth = io::load_truth(truth_path);
  std::vector<Pose6DoF> estimates;
  for (const auto& f : expand(results)) estimates.push_back(io::load_result_pose(f));
  if (estimates.empty()) throw Error(ErrorKind::validation, "no result files given");
  const PoseErrorStats stats = evaluate(estimates, truth.relative_slave_pose);

  static const char* kCols[6] = {"X (mm)", "Y (mm)", "Z (mm)", "alpha (deg)", "beta (deg)", "gamma (deg)"};
  auto cell = [](double v, int i) { return std::isnan(v) ? std::string("nan") : fmt(v, i < 3 ? 2 : 3); };
  std::ostringstream csv, txt;
  csv << "metric";
  for (const char* c : kCols) csv << ',' << c;
  csv << "\n";
  txt << std::left << std::setw(8) << "metric";
  for (const char* c : kCols) txt << std::right << std::setw(13) << c;
  txt << "\n";
  for (int row = 0; row < 2; ++row) {
    const auto& v = row == 0 ? stats.mae : stats.sd;
    const char* name = row == 0 ? "MAE" : "SD";
    csv << name;
    txt << std::left << std::setw(8) << name;
    for (int i = 0; i < 6; ++i) {
      csv << ',' << cell(v[static_cast<std::size_t>(i)], i);
      txt << std::right << std::setw(13) << cell(v[static_cast<std::size_t>(i)], i);
    }
    csv << "\n";
    txt << "\n";
  }
  txt << "(" << stats.count << " result" << (stats.count == 1 ? "" : "s") << ")\n";
  const fs::path dir = out_dir(g);
  write_text(dir / "evaluation.csv", csv.str());
  write_text(dir / "evaluation.txt", txt.str());
  std::cout << txt.str();
  return 0;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::coverage: return 3;
    case ErrorKind::stage: return 4;
    default: return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lighthouse slave-station calibration from photodiode captures"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--geometry", g.geometry, "board geometry JSON")->check(CLI::ExistingFile);
  app.add_option("--intrinsics", g.intrinsics, "station intrinsics JSON")->check(CLI::ExistingFile);
  app.add_option("--reconstruct", g.reconstruct, "reconstruction strategy")
      ->check(CLI::IsMember({"full", "dominant", "merge"}));
  app.add_option("--seed", g.seed, "simulation seed");
  app.add_option("--out", g.out, "output directory");
  app.add_flag("--deterministic", g.deterministic, "omit wall-clock fields from outputs");
  app.add_option("--nm-tol-f", g.nm_tol_f, "Nelder-Mead function tolerance");
  app.add_option("--nm-tol-x", g.nm_tol_x, "Nelder-Mead simplex size tolerance");
  app.add_option("--nm-max-iter", g.nm_max_iter, "Nelder-Mead iteration cap");
  app.add_flag("--emit-plots", g.emit_plots, "write path CSVs next to the calibration result");
  app.add_flag("--allow-degenerate-path", g.allow_degenerate_path,
               "calibrate static or straight-line captures through board pose composition");
  app.add_flag("--deskew", g.deskew, "shift each frame's angles to a common sample instant before fitting");

  std::string scenario;
  auto* sim = app.add_subcommand("simulate", "synthesize master and slave captures");
  sim->add_option("--scenario", scenario, "scenario JSON")->required()->check(CLI::ExistingFile);

  std::string pulses, station;
  auto* dec = app.add_subcommand("decode", "decode a pulse CSV into sweep records");
  dec->add_option("pulses", pulses, "pulse CSV")->required()->check(CLI::ExistingFile);
  dec->add_option("--station", station, "keep only this station's records")->check(CLI::IsMember({"master", "slave"}));
  auto* rec = app.add_subcommand("reconstruct", "decode and reconstruct angle frames");
  rec->add_option("pulses", pulses, "pulse CSV")->required()->check(CLI::ExistingFile);
  rec->add_option("--station", station, "station whose sweeps to use")->check(CLI::IsMember({"master", "slave"}));

  std::string master, slave;
  auto* cal = app.add_subcommand("calibrate", "estimate the slave pose in the master frame");
  cal->add_option("--master", master, "master capture CSV")->required()->check(CLI::ExistingFile);
  cal->add_option("--slave", slave, "slave capture CSV")->required()->check(CLI::ExistingFile);

  std::vector<std::string> results;
  std::string truth;
  auto* ev = app.add_subcommand("evaluate", "MAE and SD of calibration results against ground truth");
  ev->add_option("results", results, "result JSON files or glob patterns")->required();
  ev->add_option("--truth", truth, "ground truth JSON")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim) return cmd_simulate(g, scenario);
    if (*dec) return cmd_decode(g, pulses, station);
    if (*rec) return cmd_reconstruct(g, pulses, station);
    if (*cal) return cmd_calibrate(g, master, slave);
    if (*ev) return cmd_evaluate(g, results, truth);
  } catch (const StageError& e) {
    std::cerr << "error: stage " << e.stage() << " failed (" << to_string(e.cause()) << "): " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
