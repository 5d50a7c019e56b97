#pragma once

#include "lhcalib/errors.hpp"
#include "lhcalib/forward_model.hpp"
#include "lhcalib/geometry.hpp"
#include "lhcalib/signal.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace lhcalib {

enum class TrajectoryKind { static_pose, line, half_circle, lissajous };

const char* to_string(TrajectoryKind k);
TrajectoryKind parse_trajectory_kind(const std::string& name);

/// Board motion, defined in an anchor frame whose z is the board normal at
/// rest. Lines run along anchor x; half circles and lissajous figures move
/// in the x-z plane, so the path has depth as seen from the stations
/// (lissajous adds a smaller vertical component).
struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::half_circle;
  Pose6DoF anchor;
  /// Maximum centroid speed, m/s. Line and half circle run at exactly this
  /// speed, back and forth; for lissajous it is an upper bound.
  double speed = 0.3;
  /// Line length, circle radius or lissajous amplitude, meters.
  double size = 1.0;
  /// Amplitude (rad) and rate (Hz) of the slow orientation variation; a
  /// static board does not wobble.
  double wobble = 0.15;
  double wobble_hz = 0.2;
  /// Time offset into the motion, seconds.
  double phase = 0.0;

  void validate() const;
};

/// Continuous board pose as a function of capture time.
class PoseSampler {
 public:
  explicit PoseSampler(TrajectorySpec spec);

  Pose6DoF operator()(double t) const;
  /// Centroid position in the anchor frame.
  Vec3 local_position(double t) const;
  /// Rotation of the board relative to the anchor frame.
  Mat3 local_rotation(double t) const;

  const TrajectorySpec& spec() const { return spec_; }

 private:
  TrajectorySpec spec_;
  Mat3 anchor_r_;
  Vec3 anchor_t_;
};

PoseSampler generate_trajectory(const TrajectorySpec& spec);

struct NoiseSpec {
  /// Round pulse edges to the 2 MHz capture clock. When off, the streams use
  /// a 2 THz clock instead, which is noiseless for practical purposes.
  bool quantization = true;
  double timing_jitter_sd = 0.0;  // seconds, Gaussian, per pulse
  /// Probability that a diode misses a whole slot (sync and sweep).
  double dropout_prob = 0.0;
  /// Per-diode override of dropout_prob.
  std::map<int, double> diode_dropout;

  void validate() const;
  double dropout_for(int diode_id) const;
};

inline constexpr double kNoiselessTickHz = 2e12;
inline constexpr double kSyncMasterWidth = 70e-6;
inline constexpr double kSyncSlaveWidth = 100e-6;
inline constexpr double kSyncSlaveDelay = 400e-6;
inline constexpr double kSweepPulseWidth = 10e-6;

struct Scenario {
  Pose6DoF master_pose;
  Pose6DoF slave_pose;
  BoardGeometry geometry = BoardGeometry::default_grid();
  StationIntrinsics master_intrinsics{};
  StationIntrinsics slave_intrinsics{};
  TrajectorySpec trajectory{};
  double duration = 8.0;  // seconds
  NoiseSpec noise{};

  void validate() const;
};

struct GroundTruth {
  Pose6DoF master_pose;
  Pose6DoF slave_pose;
  /// Slave station in the master frame: the calibration target.
  Pose6DoF relative_slave_pose;
  std::uint64_t seed = 0;
  double duration = 0.0;
  double tick_hz = kTickHz;
  long slots = 0;
  double first_slot_time = 0.0;  // seconds
};

struct SimulationOutput {
  PulseStream master;
  PulseStream slave;
  GroundTruth truth;
  Diagnostics diagnostics;
};

/// Fraction of slot instants where the board centroid is not inside the
/// field of view of both stations.
double uncovered_fraction(const Scenario& scenario);

/// Synthesizes both captures. Slots follow master-az, master-el, slave-az,
/// slave-el; every slot carries a master sync at its start and a slave sync
/// 400 us later, seen by the diodes in front of the emitting station. Each
/// stream holds all syncs plus the sweeps of its own station.
/// Throws Error(coverage) when more than 20% of the capture is outside the
/// joint field of view.
SimulationOutput simulate_capture(const Scenario& scenario, std::uint64_t seed);

/// Anchor at `center` whose +z (the board normal at rest) points at the
/// midpoint of the two stations and whose +x is horizontal.
Pose6DoF facing_anchor(const Vec3& center, const Vec3& master_position, const Vec3& slave_position);

}  // namespace lhcalib
