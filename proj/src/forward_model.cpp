#include "lhcalib/forward_model.hpp"

#include "lhcalib/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lhcalib {

void StationIntrinsics::validate() const {
  for (const Vec3* v : {&azimuth_laser_offset, &elevation_laser_offset}) {
    if (!v->allFinite()) throw Error(ErrorKind::validation, "laser offset is not finite");
    if (v->norm() >= 0.1) {
      std::ostringstream os;
      os << "laser offset magnitude " << v->norm() << " m exceeds the 0.1 m sanity bound";
      throw Error(ErrorKind::validation, os.str());
    }
  }
}

BoardToStation BoardToStation::from(const Mat3& station_r, const Vec3& station_t, const Mat3& board_r,
                                    const Vec3& board_t) {
  return {station_r.transpose() * board_r, station_r.transpose() * (board_t - station_t)};
}

BoardToStation BoardToStation::from(const Pose6DoF& station_pose, const Pose6DoF& board_pose) {
  return from(station_pose.rotation().matrix(), station_pose.position(), board_pose.rotation().matrix(),
              board_pose.position());
}

AngleMatrix project_angles(const Pose6DoF& station_pose, const StationIntrinsics& intrinsics,
                           const BoardGeometry& geometry, const Pose6DoF& board_pose) {
  const BoardToStation m = BoardToStation::from(station_pose, board_pose);
  AngleMatrix out(geometry.size(), 2);
  for (int i = 0; i < geometry.size(); ++i) {
    const Vec3 q = m.rotation * geometry.diode(i) + m.translation;
    const double xa = q.x() - intrinsics.azimuth_laser_offset.x();
    const double xe = q.x() - intrinsics.elevation_laser_offset.x();
    if (!(xa > kMinForwardDistance) || !(xe > kMinForwardDistance)) {
      std::ostringstream os;
      os << "diode " << i << " is behind the station (forward distance " << std::min(xa, xe) << " m)";
      throw Error(ErrorKind::behind_station, os.str());
    }
    double theta = 0.0, phi = 0.0;
    diode_angles(q, intrinsics, theta, phi);
    out(i, 0) = theta;
    out(i, 1) = phi;
  }
  return out;
}

}  // namespace lhcalib
