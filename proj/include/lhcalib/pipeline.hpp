#pragma once

#include "lhcalib/errors.hpp"
#include "lhcalib/forward_model.hpp"
#include "lhcalib/geometry.hpp"
#include "lhcalib/kabsch.hpp"
#include "lhcalib/optimize.hpp"
#include "lhcalib/reconstruct.hpp"
#include "lhcalib/signal.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace lhcalib {

/// Board pose estimated for one frame of one station's capture.
struct PathPose {
  double t = 0.0;  // seconds
  Pose6DoF pose;
  double residual = 0.0;  // K1 of the frame fit
  bool interpolated = false;
};

struct PathOptions {
  NmOptions nm{};
  /// Start each frame fit from the previous frame's solution.
  bool warm_start = true;
  int min_frames = 10;
  double max_drop_fraction = 0.5;
};

struct PathResult {
  std::vector<PathPose> path;
  int frames_in = 0;
  int dropped = 0;
  int cold_restarts = 0;
  long evaluations = 0;
  Diagnostics diagnostics;
};

/// Board path seen from a station at the origin: one board pose fit per
/// frame. Frames whose fit does not converge are dropped; more than
/// max_drop_fraction dropped raises Error(path_quality).
PathResult estimate_path(std::span<const AngleFrame> frames, const StationIntrinsics& intrinsics,
                         const BoardGeometry& geometry, const PathOptions& options = {});

/// Pose on a path at time t: linear in position, spherical-linear in
/// rotation, time-weighted residual. Throws Error(alignment) outside the
/// path's time span.
PathPose interpolate_path(std::span<const PathPose> path, double t);

struct AlignedPaths {
  std::vector<PathPose> master;
  std::vector<PathPose> slave;
};

/// Both paths resampled on the union of their timestamps inside the common
/// time span; output lists are index-matched in time.
AlignedPaths align_paths_in_time(std::span<const PathPose> master, std::span<const PathPose> slave);

/// Kabsch weights from fit residuals: 1 / (e + 0.01 * median(e)); uniform
/// when every residual is zero.
std::vector<double> residual_weights(std::span<const double> residuals);

struct InitialSlavePose {
  Pose6DoF pose;
  RigidFit fit;
};

/// Weighted Kabsch of slave-frame path positions onto master-frame ones; the
/// resulting (R, T) applied to the slave origin is the slave pose estimate.
/// Pair weight comes from the sum of both fits' residuals.
InitialSlavePose initial_slave_pose(const AlignedPaths& aligned);

/// RMS spread of path positions along their second principal axis. Near zero
/// for a static board or a straight line.
double path_spread(std::span<const PathPose> path);

/// Slave pose from composing matched board poses (master ∘ slave⁻¹),
/// weighted and averaged. Needs no spatial spread of the path; only used for
/// static or straight-line captures when explicitly allowed.
Pose6DoF slave_pose_from_orientations(const AlignedPaths& aligned);

/// Diodes of one sweep are hit up to ~0.1 ms apart, so a moving board is
/// seen slightly distorted. Shifts every angle of a frame to the mean sample
/// instant of its axis in that frame, using the diode's rate of change over
/// the neighbouring frames. Values without sample instants are left alone.
std::vector<AngleFrame> deskew_frames(std::span<const AngleFrame> frames);

struct CalibrationConfig {
  BoardGeometry geometry = BoardGeometry::default_grid();
  StationIntrinsics master_intrinsics{};
  StationIntrinsics slave_intrinsics{};
  ReconstructStrategy strategy = ReconstructStrategy::full;
  PathOptions path{};
  NmOptions final_nm{};
  DecodeConfig decode{};
  /// A path counts as degenerate when its Kabsch conditioning is below
  /// min_kabsch_conditioning or its second-axis spread is below
  /// min_path_spread board diameters.
  double min_kabsch_conditioning = 1e-3;
  double min_path_spread = 0.25;
  /// Degenerate paths raise an error unless this is set, in which case the
  /// initial slave pose comes from board pose composition.
  bool allow_degenerate_path = false;
  /// Apply deskew_frames to both stations' frames before the pose fits. Off
  /// by default: frames then hold plain linearly interpolated angles.
  bool deskew = false;
};

struct CalibrationDiagnostics {
  int master_records = 0;
  int slave_records = 0;
  int master_frames = 0;
  int slave_frames = 0;
  int master_dropped = 0;
  int slave_dropped = 0;
  int aligned_points = 0;
  int final_frames = 0;
  double kabsch_weighted_rmsd = 0.0;
  double kabsch_conditioning = 0.0;
  std::string initial_method = "kabsch";
  double epsilon_initial = 0.0;  // K2 at the initial slave pose
  double delta_position_m = 0.0;
  double delta_rotation_rad = 0.0;
  ObjectiveReport final_report;
  double runtime_s = 0.0;
  Diagnostics messages;
};

struct CalibrationResult {
  /// Slave station in the master frame.
  Pose6DoF slave_pose;
  Pose6DoF initial_slave_pose;
  double epsilon_final = 0.0;
  bool converged = false;
  CalibrationDiagnostics diagnostics;
  /// Board paths relative to each station (filled by calibrate_frames).
  std::vector<PathPose> master_path;
  std::vector<PathPose> slave_path;
};

/// Refines l0 by minimizing K2 over the slave frames against master-frame
/// board poses interpolated at the slave frame times.
CalibrationResult final_slave_pose(std::span<const PathPose> master_path, std::span<const AngleFrame> slave_frames,
                                   const Pose6DoF& l0, const StationIntrinsics& slave_intrinsics,
                                   const BoardGeometry& geometry, const NmOptions& opts = {});

/// Path estimation, alignment, initial and final slave pose from already
/// reconstructed frames.
CalibrationResult calibrate_frames(std::span<const AngleFrame> master_frames, std::span<const AngleFrame> slave_frames,
                                   const CalibrationConfig& config = {});

/// Full pipeline from the two raw captures. Stage failures surface as
/// StageError naming the stage.
CalibrationResult calibrate(const PulseStream& master_pulses, const PulseStream& slave_pulses,
                            const CalibrationConfig& config = {});

/// Records of the station a stream carries sweeps for. A stream with sweeps
/// in only one station's slots yields those (this is how a single capture
/// can be used for both inputs); otherwise the designated station is used.
std::vector<SweepRecord> station_records(std::span<const SweepRecord> records, Station designated);

/// Per-axis accuracy and precision of repeated estimates against the truth.
/// Units at this boundary: mm for x, y, z and degrees for alpha, beta, gamma.
struct PoseErrorStats {
  std::array<double, 6> mae{};
  std::array<double, 6> sd{};  // sample SD; NaN with a single estimate
  int count = 0;
};

/// Angle differences are wrapped to (-180, 180] degrees.
PoseErrorStats evaluate(std::span<const Pose6DoF> estimates, const Pose6DoF& truth);

/// Position distance and rotation angle between two poses.
double position_error(const Pose6DoF& a, const Pose6DoF& b);
double rotation_error(const Pose6DoF& a, const Pose6DoF& b);

}  // namespace lhcalib
