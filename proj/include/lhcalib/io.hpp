#pragma once

// File formats. Every angle stored in a file is in degrees, every length in
// meters; conversion to radians happens here.

#include "lhcalib/forward_model.hpp"
#include "lhcalib/geometry.hpp"
#include "lhcalib/pipeline.hpp"
#include "lhcalib/reconstruct.hpp"
#include "lhcalib/signal.hpp"
#include "lhcalib/simulator.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>

namespace lhcalib::io {

using nlohmann::json;

inline constexpr const char* kPulseSchema = "lhcalib-pulses v1";
inline constexpr const char* kResultSchema = "lhcalib-result v1";
inline constexpr const char* kTruthSchema = "lhcalib-truth v1";
inline constexpr const char* kScenarioSchema = "lhcalib-scenario v1";

/// {x_m, y_m, z_m, alpha_deg, beta_deg, gamma_deg}
json pose_to_json(const Pose6DoF& pose);
Pose6DoF pose_from_json(const json& j);

/// {"board_id": string, "diodes_m": [[x, y, z], ...]}; loading recenters on
/// the diode centroid.
json geometry_to_json(const BoardGeometry& geometry);
BoardGeometry geometry_from_json(const json& j);
BoardGeometry load_geometry(const std::string& path);

/// {"azimuth_laser_offset_m": [x, y, z], "elevation_laser_offset_m": [x, y, z]}
json intrinsics_to_json(const StationIntrinsics& intrinsics);
StationIntrinsics intrinsics_from_json(const json& j);
StationIntrinsics load_intrinsics(const std::string& path);

json scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const json& j);
Scenario load_scenario(const std::string& path);

json truth_to_json(const GroundTruth& truth);
GroundTruth truth_from_json(const json& j);
GroundTruth load_truth(const std::string& path);

/// Header `# lhcalib-pulses v1; tick_hz=<int>; widths=60-80/90-110/4-40us`,
/// then `diode_id,t_start_ticks,t_end_ticks` rows sorted by t_start, LF
/// line endings, integers only.
void write_pulses(std::ostream& os, const PulseStream& stream);
PulseStream read_pulses(std::istream& is, const std::string& source = "<stream>");
void save_pulses(const std::string& path, const PulseStream& stream);
PulseStream load_pulses(const std::string& path);

/// `slot_time_ticks,station,axis,diode_id,angle_deg,dt_s`, one row per diode
/// sample; empty records are not written.
void write_records(std::ostream& os, std::span<const SweepRecord> records);

/// `t_s,station,diode_id,theta_deg,phi_deg,theta_measured,phi_measured`
void write_frames(std::ostream& os, std::span<const AngleFrame> frames);

/// Result file with schema `lhcalib-result v1`. With `deterministic` the
/// wall-clock fields (runtime, generation time) are omitted.
json result_to_json(const CalibrationResult& result, bool deterministic);
/// Reads the slave pose back from a result file.
Pose6DoF load_result_pose(const std::string& path);

void save_json(const std::string& path, const json& j);
json load_json(const std::string& path);

}  // namespace lhcalib::io
