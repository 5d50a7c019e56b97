#include "lhcalib/forward_model.hpp"
#include "lhcalib/errors.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace lhcalib;

TEST(ForwardModel, DiagonalDiode) {
  const BoardGeometry g("single", {{0, 0, 0}, {0.01, 0, 0}, {0, 0.01, 0}, {0, 0, 0.01}});
  // board translated so diode 0 lands on (2, 2, 2)
  const Pose6DoF board = Pose6DoF::from(Mat3::Identity(), Vec3(2, 2, 2) - g.diode(0));
  const AngleMatrix m = project_angles(Pose6DoF::identity(), {}, g, board);
  EXPECT_NEAR(rad2deg(m(0, 0)), 45.0, 1e-12);
  EXPECT_NEAR(rad2deg(m(0, 1)), 45.0, 1e-12);
}

TEST(ForwardModel, ElevationIsXzProjection) {
  const BoardGeometry g("b", {{0, 0, 0}, {0.01, 0, 0}, {0, 0.01, 0}, {0, 0, 0.01}});
  const Vec3 p(3.0, 1.0, 0.5);
  const Pose6DoF board = Pose6DoF::from(Mat3::Identity(), p - g.diode(0));
  const AngleMatrix m = project_angles(Pose6DoF::identity(), {}, g, board);
  EXPECT_NEAR(m(0, 0), std::atan2(1.0, 3.0), 1e-14);
  EXPECT_NEAR(m(0, 1), std::atan2(0.5, 3.0), 1e-14);  // not atan2(z, hypot(x, y))
}

TEST(ForwardModel, LaserOffsetsShiftOrigins) {
  StationIntrinsics intr;
  intr.azimuth_laser_offset = {0.0, 0.02, 0.0};
  intr.elevation_laser_offset = {0.0, 0.0, -0.03};
  double th = 0, ph = 0;
  diode_angles({2.0, 0.02, -0.03}, intr, th, ph);
  EXPECT_NEAR(th, 0.0, 1e-15);
  EXPECT_NEAR(ph, 0.0, 1e-15);
  intr.azimuth_laser_offset = {0.2, 0, 0};
  EXPECT_THROW(intr.validate(), Error);
}

TEST(ForwardModel, GaugeInvariance) {
  std::mt19937_64 rng(17);
  const BoardGeometry g = BoardGeometry::default_grid();
  StationIntrinsics intr;
  intr.azimuth_laser_offset = {0.01, -0.005, 0.0};
  intr.elevation_laser_offset = {0.0, 0.004, 0.008};
  const Pose6DoF station(0.3, -0.2, 1.0, 0.2, -0.1, 0.05);
  const Pose6DoF board = compose(station, fixtures::board_in_front(3.0, 10.0, -15.0));
  const AngleMatrix base = project_angles(station, intr, g, board);
  for (int i = 0; i < 20; ++i) {
    const Pose6DoF w = fixtures::random_pose(rng, 5.0);
    const AngleMatrix moved = project_angles(compose(w, station), intr, g, compose(w, board));
    EXPECT_LT((moved - base).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ForwardModel, BehindStationNamesDiode) {
  const BoardGeometry g = BoardGeometry::default_grid();
  const Pose6DoF behind = fixtures::board_in_front(-2.0);
  try {
    project_angles(Pose6DoF::identity(), {}, g, behind);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::behind_station);
    EXPECT_NE(std::string(e.what()).find("diode"), std::string::npos);
  }
}

TEST(ForwardModel, BoardToStationComposition) {
  std::mt19937_64 rng(2);
  const Pose6DoF station = fixtures::random_pose(rng), board = fixtures::random_pose(rng);
  const BoardToStation m = BoardToStation::from(station, board);
  const Pose6DoF rel = compose(inverse(station), board);
  const Vec3 p(0.03, -0.01, 0.0);
  EXPECT_LT((m.rotation * p + m.translation - rel.apply(p)).norm(), 1e-12);
}
