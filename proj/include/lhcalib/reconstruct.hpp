#pragma once

#include "lhcalib/errors.hpp"
#include "lhcalib/signal.hpp"

#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace lhcalib {

struct DiodeAngles {
  double theta = 0.0;  // azimuth, radians
  double phi = 0.0;    // XZ-projected elevation, radians
  bool theta_measured = false;
  bool phi_measured = false;
  /// Instants (seconds) the two values describe; NaN when unknown.
  double theta_t = std::numeric_limits<double>::quiet_NaN();
  double phi_t = std::numeric_limits<double>::quiet_NaN();
};

/// Complete azimuth + elevation sample set of one station at one instant.
struct AngleFrame {
  double t = 0.0;  // seconds
  Station station = Station::master;
  std::map<int, DiodeAngles> angles;

  int size() const { return static_cast<int>(angles.size()); }
};

enum class ReconstructStrategy { full, dominant, merge };

const char* to_string(ReconstructStrategy s);
ReconstructStrategy parse_strategy(const std::string& name);

struct ReconstructResult {
  std::vector<AngleFrame> frames;
  Diagnostics diagnostics;
  /// Axis the frames are anchored on (dominant strategy only).
  Axis anchor_axis = Axis::azimuth;
};

inline constexpr int kMinFrameDiodes = 4;

/// One frame per record; the other axis is linearly interpolated per diode
/// between the bracketing records, evaluated at the diode's own crossing time.
ReconstructResult reconstruct_full(std::span<const SweepRecord> records);

/// Frames of reconstruct_full anchored only on the axis with the larger total
/// variation (sum of per-diode variances); ties go to azimuth.
ReconstructResult reconstruct_dominant_axis(std::span<const SweepRecord> records);

/// Consecutive (azimuth, elevation) records merged without interpolation,
/// stamped at the pair's mean sample time.
ReconstructResult reconstruct_pair_merge(std::span<const SweepRecord> records);

ReconstructResult reconstruct(std::span<const SweepRecord> records, ReconstructStrategy strategy);

/// Sum over diodes of the sample variance of that diode's angle series.
double axis_variation(std::span<const SweepRecord> records, Axis axis);

}  // namespace lhcalib
