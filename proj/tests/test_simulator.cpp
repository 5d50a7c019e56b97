#include "lhcalib/simulator.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace lhcalib;

TEST(Trajectory, LineDisplacementOverTwoSlots) {
  TrajectorySpec t;
  t.kind = TrajectoryKind::line;
  t.speed = 1.0;
  t.size = 2.0;
  t.wobble = 0.0;
  const PoseSampler s(t);
  const double gap = 13.8e-3;
  EXPECT_NEAR((s.local_position(0.3 + gap) - s.local_position(0.3)).norm(), 0.0138, 1e-9);
}

TEST(Trajectory, HalfCircleArc) {
  TrajectorySpec t;
  t.kind = TrajectoryKind::half_circle;
  t.size = 1.0;
  t.speed = kPi / 8.0;  // half a turn of radius 1 m in 8 s
  t.wobble = 0.0;
  const PoseSampler s(t);
  const Vec3 a = s.local_position(0.0), b = s.local_position(8.0);
  const Vec3 centre(0, 0, -0.5);
  EXPECT_NEAR((a - centre).norm(), 1.0, 1e-12);
  EXPECT_NEAR((b - centre).norm(), 1.0, 1e-12);
  EXPECT_LT(((a - centre) + (b - centre)).norm(), 1e-9);  // diametrically opposite
  double length = 0.0;
  for (int i = 0; i < 8000; ++i) length += (s.local_position((i + 1) * 1e-3) - s.local_position(i * 1e-3)).norm();
  EXPECT_NEAR(length, kPi, 1e-5);
}

TEST(Trajectory, LissajousRespectsSpeedBound) {
  TrajectorySpec t;
  t.kind = TrajectoryKind::lissajous;
  t.size = 0.6;
  t.speed = 0.5;
  const PoseSampler s(t);
  double peak = 0.0;
  for (int i = 0; i < 20000; ++i) peak = std::max(peak, (s.local_position((i + 1) * 1e-3) - s.local_position(i * 1e-3)).norm() / 1e-3);
  EXPECT_LE(peak, 0.5 + 1e-6);
  EXPECT_GT(peak, 0.3);
}

TEST(Trajectory, StaticHoldsStill) {
  TrajectorySpec t;
  t.kind = TrajectoryKind::static_pose;
  t.anchor = Pose6DoF(3, 1, 0, 0.2, 0.1, 0.3);
  const PoseSampler s(t);
  EXPECT_LT(position_error(s(0.0), s(5.0)), 1e-15);
  EXPECT_LT(rotation_error(s(0.0), t.anchor), 1e-12);
}

TEST(Trajectory, Validation) {
  TrajectorySpec t;
  t.size = 0.0;
  EXPECT_THROW(t.validate(), Error);
  EXPECT_THROW(parse_trajectory_kind("spiral"), Error);
  EXPECT_EQ(parse_trajectory_kind("half_circle"), TrajectoryKind::half_circle);
}

TEST(FacingAnchor, NormalPointsAtStations) {
  const Vec3 m(0, 0, 0), s(2, 1, 0), c(4, 1, 0.5);
  const Pose6DoF a = facing_anchor(c, m, s);
  const Vec3 n = a.rotation() * Vec3::UnitZ();
  EXPECT_TRUE(n.isApprox((0.5 * (m + s) - c).normalized(), 1e-12));
  EXPECT_NEAR((a.rotation() * Vec3::UnitX()).z(), 0.0, 1e-12);
}

TEST(Simulate, GroundTruthAndStreams) {
  const Scenario sc = fixtures::reference_scenario();
  const SimulationOutput sim = simulate_capture(sc, 21);
  EXPECT_LT(position_error(sim.truth.relative_slave_pose, compose(inverse(sc.master_pose), sc.slave_pose)), 1e-15);
  EXPECT_EQ(sim.truth.seed, 21u);
  EXPECT_DOUBLE_EQ(sim.master.tick_hz, kTickHz);
  EXPECT_NEAR(sim.truth.slots, sc.duration / kSlotSeconds, 2.0);
  for (const PulseStream* s : {&sim.master, &sim.slave}) {
    ASSERT_FALSE(s->events.empty());
    for (std::size_t i = 1; i < s->events.size(); ++i) EXPECT_LE(s->events[i - 1].t_start, s->events[i].t_start);
    for (const auto& e : s->events) EXPECT_GT(e.t_end, e.t_start);
  }
}

TEST(Simulate, NoiselessUsesFineClock) {
  const SimulationOutput sim = simulate_capture(fixtures::reference_scenario(TrajectoryKind::half_circle, false), 1);
  EXPECT_DOUBLE_EQ(sim.master.tick_hz, kNoiselessTickHz);
}

TEST(Simulate, SeedDeterminism) {
  Scenario sc = fixtures::reference_scenario();
  sc.noise.timing_jitter_sd = 1e-6;
  sc.noise.dropout_prob = 0.05;
  sc.duration = 2.0;
  const auto a = simulate_capture(sc, 5), b = simulate_capture(sc, 5), c = simulate_capture(sc, 6);
  EXPECT_EQ(a.master.events, b.master.events);
  EXPECT_EQ(a.slave.events, b.slave.events);
  EXPECT_NE(a.master.events, c.master.events);
}

TEST(Simulate, CoverageError) {
  Scenario sc = fixtures::reference_scenario();
  // board behind the master
  sc.trajectory.anchor = Pose6DoF(-3.0, 0.0, 0.0, 0, 0, 0);
  try {
    simulate_capture(sc, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::coverage);
  }
  EXPECT_GT(uncovered_fraction(sc), 0.2);
  EXPECT_LT(uncovered_fraction(fixtures::reference_scenario()), 0.2);
}

TEST(Simulate, ScenarioValidation) {
  Scenario sc = fixtures::reference_scenario();
  sc.duration = -1.0;
  EXPECT_THROW(sc.validate(), Error);
  sc = fixtures::reference_scenario();
  sc.noise.dropout_prob = 1.5;
  EXPECT_THROW(sc.validate(), Error);
}
