#include "lhcalib/forward_model.hpp"
#include "lhcalib/signal.hpp"
#include "lhcalib/simulator.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace lhcalib;

TEST(DeltaT, CenterOfSlotIsZero) {
  EXPECT_NEAR(delta_t_to_angle(1.0 / 240.0), 0.0, 1e-12);
  EXPECT_NEAR(rad2deg(delta_t_to_angle(4.1667e-3)), 0.0, 1e-3);
}

TEST(DeltaT, VisibilityWindowEdges) {
  // 21.6 deg per ms, minus 90 deg
  EXPECT_NEAR(rad2deg(delta_t_to_angle(1.2e-3)), 1.2 * 21.6 - 90.0, 1e-9);
  EXPECT_NEAR(rad2deg(delta_t_to_angle(1.2e-3)), -64.08, 1e-9);
  EXPECT_NEAR(rad2deg(delta_t_to_angle(6.7e-3)), 54.72, 1e-9);
  const double span = rad2deg(delta_t_to_angle(6.7e-3) - delta_t_to_angle(1.2e-3));
  EXPECT_NEAR(span, 118.8, 1e-9);
  EXPECT_NEAR(span, 120.0, 1.5);
}

TEST(DeltaT, MonotoneAndInvertible) {
  double prev = -1e9;
  for (double dt = 1e-5; dt < kSlotSeconds; dt += 1e-4) {
    const double a = delta_t_to_angle(dt);
    EXPECT_GT(a, prev);
    EXPECT_NEAR(angle_to_delta_t(a), dt, 1e-15);
    prev = a;
  }
}

TEST(DeltaT, RejectsOutOfRange) {
  EXPECT_THROW(delta_t_to_angle(0.0), Error);
  EXPECT_THROW(delta_t_to_angle(-1e-3), Error);
  EXPECT_THROW(delta_t_to_angle(kSlotSeconds), Error);
  try {
    delta_t_to_angle(0.01);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::range);
  }
}

TEST(Classify, WidthTable) {
  EXPECT_EQ(classify_pulse({0, 1000, 1140}), PulseClass::sync_master);
  EXPECT_EQ(classify_pulse({0, 1000, 1200}), PulseClass::sync_slave);
  EXPECT_EQ(classify_pulse({0, 1000, 1020}), PulseClass::sweep);
  EXPECT_EQ(classify_pulse({0, 1000, 1100}), PulseClass::unknown);  // 50 us
  EXPECT_EQ(classify_pulse({0, 1000, 1002}), PulseClass::unknown);  // 1 us
  // boundaries are inclusive
  EXPECT_EQ(classify_pulse({0, 0, 120}), PulseClass::sync_master);
  EXPECT_EQ(classify_pulse({0, 0, 160}), PulseClass::sync_master);
  EXPECT_EQ(classify_pulse({0, 0, 8}), PulseClass::sweep);
  EXPECT_EQ(classify_pulse({0, 0, 80}), PulseClass::sweep);
}

TEST(Schedule, SlotOrder) {
  EXPECT_EQ(slot_station(0), Station::master);
  EXPECT_EQ(slot_axis(0), Axis::azimuth);
  EXPECT_EQ(slot_axis(1), Axis::elevation);
  EXPECT_EQ(slot_station(2), Station::slave);
  EXPECT_EQ(slot_axis(2), Axis::azimuth);
  EXPECT_EQ(slot_station(3), Station::slave);
  EXPECT_EQ(slot_axis(3), Axis::elevation);
  EXPECT_EQ(slot_station(4), Station::master);
}

TEST(Decode, EmptyStream) {
  try {
    decode_stream(std::vector<PulseEvent>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::empty_capture);
  }
  // sweeps but no syncs
  EXPECT_THROW(decode_stream(std::vector<PulseEvent>{{0, 100, 120}, {1, 300, 320}}), Error);
}

TEST(Decode, HandBuiltCycle) {
  // Two locked cycles 16667 ticks apart; one sweep at the slot centre in the first.
  const std::int64_t slot = 16667;
  std::vector<PulseEvent> ev;
  for (int k = 0; k < 4; ++k)
    for (int d = 0; d < 2; ++d) ev.push_back({d, k * slot, k * slot + 140});
  ev.push_back({1, 8333 - 10, 8333 + 9});  // midpoint (s + e + 1) / 2 = 8333
  const DecodeResult r = decode_stream(ev);
  ASSERT_GE(r.records.size(), 1u);
  const SweepRecord& first = r.records.front();
  EXPECT_EQ(first.station, Station::master);
  EXPECT_EQ(first.axis, Axis::azimuth);
  ASSERT_EQ(first.angles.size(), 1u);
  EXPECT_NEAR(first.raw_dt.at(1), 8333.0 / kTickHz, 1e-12);
  EXPECT_NEAR(first.angles.at(1), delta_t_to_angle(8333.0 / kTickHz), 1e-12);
}

namespace {

SimulationOutput static_capture(bool quantization, double duration = 1.0) {
  Scenario s = fixtures::reference_scenario(TrajectoryKind::static_pose, quantization);
  s.duration = duration;
  return simulate_capture(s, 3);
}

}  // namespace

TEST(Decode, StaticNoiselessMatchesForwardModel) {
  const Scenario s = fixtures::reference_scenario(TrajectoryKind::static_pose, false);
  const SimulationOutput sim = static_capture(false);
  const Pose6DoF board = generate_trajectory(s.trajectory)(0.0);
  for (auto [stream, station, pose] : {std::tuple{&sim.master, Station::master, s.master_pose},
                                       std::tuple{&sim.slave, Station::slave, s.slave_pose}}) {
    const AngleMatrix truth = project_angles(pose, {}, s.geometry, board);
    const auto records = records_for(decode_stream(*stream).records, station);
    ASSERT_GT(records.size(), 50u);
    for (const auto& r : records) {
      ASSERT_EQ(r.angles.size(), 32u);
      for (const auto& [id, a] : r.angles) EXPECT_NEAR(a, truth(id, r.axis == Axis::azimuth ? 0 : 1), 1e-6);
    }
  }
}

TEST(Decode, ScheduleAlternatesAtSlotPeriod) {
  const SimulationOutput sim = static_capture(true);
  const auto all = decode_stream(sim.master).records;
  ASSERT_GT(all.size(), 8u);
  for (std::size_t i = 1; i < all.size(); ++i) {
    EXPECT_NEAR(static_cast<double>(all[i].slot_time - all[i - 1].slot_time), 16666.67, 1.0);
    EXPECT_EQ(all[i].station, slot_station(static_cast<std::int64_t>(i)));
    EXPECT_EQ(all[i].axis, slot_axis(static_cast<std::int64_t>(i)));
  }
  // the master stream only carries master sweeps
  for (const auto& r : all)
    if (r.station == Station::slave) EXPECT_TRUE(r.angles.empty());
}

TEST(Decode, OccludedDiodeIsAbsent) {
  Scenario s = fixtures::reference_scenario(TrajectoryKind::static_pose, true);
  s.duration = 0.5;
  s.noise.diode_dropout[7] = 1.0;
  const auto records = records_for(decode_stream(simulate_capture(s, 9).master).records, Station::master);
  ASSERT_FALSE(records.empty());
  for (const auto& r : records) {
    EXPECT_EQ(r.angles.size(), 31u);
    EXPECT_EQ(r.angles.count(7), 0u);
  }
}

TEST(Decode, Deterministic) {
  const SimulationOutput sim = static_capture(true, 0.5);
  const auto a = decode_stream(sim.slave).records;
  const auto b = decode_stream(sim.slave).records;
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].slot_time, b[i].slot_time);
    EXPECT_EQ(a[i].angles, b[i].angles);
  }
}

TEST(Decode, UnsortedInputIsSorted) {
  SimulationOutput sim = static_capture(true, 0.3);
  const auto sorted = decode_stream(sim.master).records;
  std::reverse(sim.master.events.begin(), sim.master.events.end());
  const auto shuffled = decode_stream(sim.master).records;
  ASSERT_EQ(sorted.size(), shuffled.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i].angles, shuffled[i].angles);
}

TEST(Decode, LostSyncResynchronizes) {
  SimulationOutput sim = static_capture(true, 1.0);
  // drop every event in a 30 ms window in the middle of the capture
  auto& ev = sim.master.events;
  std::erase_if(ev, [](const PulseEvent& e) { return e.t_start > 1'000'000 && e.t_start < 1'060'000; });
  const DecodeResult r = decode_stream(sim.master);
  EXPECT_GT(r.diagnostics.counter("discontinuities") + r.diagnostics.counter("missed_syncs"), 0);
  // slot bookkeeping survives the gap
  for (const auto& rec : r.records) {
    const auto idx = static_cast<std::int64_t>(std::llround((rec.slot_time - r.records.front().slot_time) / 16666.667));
    EXPECT_EQ(rec.axis, slot_axis(idx));
  }
}
