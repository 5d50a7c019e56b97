#pragma once

#include "lhcalib/geometry.hpp"

#include <Eigen/Core>

#include <cmath>

namespace lhcalib {

/// Origins of the two sweep lasers inside a station, in the station frame.
struct StationIntrinsics {
  Vec3 azimuth_laser_offset = Vec3::Zero();
  Vec3 elevation_laser_offset = Vec3::Zero();

  /// Throws Error(validation) when an offset is non-finite or >= 0.1 m.
  void validate() const;
};

/// Rows follow geometry order; column 0 is azimuth theta, column 1 the
/// XZ-projected elevation phi, radians.
using AngleMatrix = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// A diode must sit at least this far in front of a laser origin along the
/// station's forward (+x) axis.
inline constexpr double kMinForwardDistance = 1e-9;

/// Rigid map from board coordinates to station coordinates:
/// q = rotation * p + translation.
struct BoardToStation {
  Mat3 rotation;
  Vec3 translation;

  static BoardToStation from(const Pose6DoF& station_pose, const Pose6DoF& board_pose);
  static BoardToStation from(const Mat3& station_r, const Vec3& station_t, const Mat3& board_r,
                             const Vec3& board_t);
};

/// theta = atan2(y, x), phi = atan2(z, x) of one station-frame point seen from
/// the two laser origins.
inline void diode_angles(const Vec3& q, const StationIntrinsics& intrinsics, double& theta, double& phi) {
  const Vec3 a = q - intrinsics.azimuth_laser_offset;
  const Vec3 e = q - intrinsics.elevation_laser_offset;
  theta = std::atan2(a.y(), a.x());
  phi = std::atan2(e.z(), e.x());
}

/// Predicted angle matrix of every diode of `geometry` when the board sits at
/// `board_pose` and the station at `station_pose` (both in one world frame).
/// Throws Error(behind_station) naming the first diode that is not in front
/// of a laser origin.
AngleMatrix project_angles(const Pose6DoF& station_pose, const StationIntrinsics& intrinsics,
                           const BoardGeometry& geometry, const Pose6DoF& board_pose);

}  // namespace lhcalib
