#pragma once

#include "lhcalib/pipeline.hpp"
#include "lhcalib/simulator.hpp"

#include <random>

namespace lhcalib::fixtures {

// Master at the origin, slave 2 m ahead and 1 m to the side yawed by 30 deg,
// board moving around (4, 1, 0).
inline Scenario reference_scenario(TrajectoryKind kind = TrajectoryKind::half_circle, bool quantization = true) {
  Scenario s;
  s.master_pose = Pose6DoF::identity();
  s.slave_pose = Pose6DoF(2.0, 1.0, 0.0, deg2rad(30.0), 0.0, 0.0);
  s.trajectory.kind = kind;
  s.trajectory.anchor = facing_anchor({4.0, 1.0, 0.0}, s.master_pose.position(), s.slave_pose.position());
  s.trajectory.speed = 0.4;
  s.trajectory.size = kind == TrajectoryKind::lissajous ? 0.6 : 0.8;
  s.duration = 8.0;
  s.noise.quantization = quantization;
  return s;
}

// Board pose somewhere in front of a station at the origin.
inline Pose6DoF board_in_front(double range, double yaw_deg = 0.0, double tilt_deg = 0.0) {
  const Vec3 c(range, 0.1, -0.05);
  const Pose6DoF facing = look_at(c, Vec3::Zero());
  // look_at points +x at the station; the board normal is +z.
  const Mat3 normal_to_x = euler_to_rotation(0.0, kPi / 2, 0.0).matrix();
  const Mat3 tweak = euler_to_rotation(deg2rad(yaw_deg), deg2rad(tilt_deg), 0.0).matrix();
  return Pose6DoF::from(Mat3(facing.rotation().matrix() * normal_to_x * tweak), c);
}

inline AngleFrame frame_from_matrix(const AngleMatrix& m, Station station = Station::master, double t = 0.0) {
  AngleFrame f;
  f.t = t;
  f.station = station;
  for (int i = 0; i < m.rows(); ++i) f.angles[i] = {m(i, 0), m(i, 1), true, true};
  return f;
}

inline Pose6DoF random_pose(std::mt19937_64& rng, double extent = 3.0) {
  std::uniform_real_distribution<double> pos(-extent, extent), ang(-kPi, kPi), half(-1.5, 1.5);
  return {pos(rng), pos(rng), pos(rng), ang(rng), half(rng), ang(rng)};
}

}  // namespace lhcalib::fixtures
