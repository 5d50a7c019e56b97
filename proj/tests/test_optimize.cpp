#include "lhcalib/optimize.hpp"
#include "lhcalib/simulator.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace lhcalib;
using fixtures::board_in_front;
using fixtures::frame_from_matrix;

namespace {

const BoardGeometry& board() {
  static const BoardGeometry g = BoardGeometry::default_grid();
  return g;
}

AngleFrame noiseless_frame(const Pose6DoF& station, const Pose6DoF& pose) {
  return frame_from_matrix(project_angles(station, {}, board(), pose));
}

}  // namespace

TEST(NelderMead, ConvexQuadratic) {
  Vec6 c;
  c << 1, 2, 3, 0.1, 0.2, 0.3;
  const auto r = nelder_mead([&](const Vec6& x) { return (x - c).squaredNorm(); }, Vec6::Zero());
  EXPECT_TRUE(r.converged);
  EXPECT_LT((r.point - c).norm(), 1e-6);
}

TEST(NelderMead, PenaltyPlateau) {
  // minimum of (x0 - 1)^2 + |x|^2 restricted to x0 >= 0.5; half the domain is a flat penalty
  auto f = [](const Vec6& x) {
    if (x(0) < 0.5) return 1e6;
    Vec6 d = x;
    d(0) -= 1.0;
    return d.squaredNorm();
  };
  Vec6 x0 = Vec6::Constant(0.2);
  x0(0) = 0.6;
  const auto r = nelder_mead(f, x0);
  EXPECT_NEAR(r.point(0), 1.0, 1e-5);
  EXPECT_LT(r.point.tail<5>().norm(), 1e-5);
  EXPECT_LT(r.value, 1e-10);
}

TEST(NelderMead, ForcedNonConvergence) {
  NmOptions o;
  o.max_iterations = 1;
  o.max_restarts = 0;
  const auto r = nelder_mead([](const Vec6& x) { return x.squaredNorm(); }, Vec6::Ones(), o);
  EXPECT_FALSE(r.converged);
  EXPECT_FALSE(r.diagnostics.empty());
}

TEST(NelderMead, NeverWorseThanStart) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (int k = 0; k < 20; ++k) {
    Vec6 x0;
    for (int i = 0; i < 6; ++i) x0(i) = g(rng);
    auto rosen = [](const Vec6& x) {
      double s = 0;
      for (int i = 0; i < 5; ++i) s += 100 * std::pow(x(i + 1) - x(i) * x(i), 2) + std::pow(1 - x(i), 2);
      return s;
    };
    NmOptions o;
    o.max_iterations = 200;
    EXPECT_LE(nelder_mead(rosen, x0, o).value, rosen(x0));
  }
}

TEST(NelderMead, InvalidStartAndOptions) {
  try {
    nelder_mead([](const Vec6&) { return std::nan(""); }, Vec6::Zero());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_start);
  }
  NmOptions bad;
  bad.tolerance_f = 0.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.max_iterations = 0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Losses, ZeroAtTruth) {
  const Pose6DoF station(0.2, 0.1, 0.0, 0.3, 0.0, 0.1);
  std::vector<Pose6DoF> poses;
  std::vector<AngleFrame> frames;
  for (int i = 0; i < 5; ++i) {
    poses.push_back(compose(station, board_in_front(2.5 + 0.3 * i, 8.0 * i, -5.0 * i)));
    frames.push_back(noiseless_frame(station, poses.back()));
    EXPECT_LT(board_loss(station, {}, board(), frames.back(), poses.back()), 1e-18);
  }
  EXPECT_LT(station_loss(poses, frames, station, {}, board()), 1e-18);
  const Pose6DoF off = perturb_pose(station, (Vec6() << 0.01, 0, 0, 0, 0, 0).finished());
  EXPECT_GT(station_loss(poses, frames, off, {}, board()), 1e-8);
}

TEST(Losses, OrderInvariant) {
  const Pose6DoF station = Pose6DoF::identity();
  std::vector<Pose6DoF> poses;
  std::vector<AngleFrame> frames;
  for (int i = 0; i < 4; ++i) {
    poses.push_back(board_in_front(3.0 + 0.2 * i, 5.0 * i));
    frames.push_back(noiseless_frame(station, board_in_front(3.0 + 0.2 * i + 0.01, 5.0 * i)));
  }
  const Pose6DoF probe(0.01, -0.02, 0.0, 0.01, 0.0, 0.0);
  const double a = station_loss(poses, frames, probe, {}, board());
  std::reverse(poses.begin(), poses.end());
  std::reverse(frames.begin(), frames.end());
  EXPECT_NEAR(station_loss(poses, frames, probe, {}, board()), a, 1e-15 * (1 + a));
}

TEST(Losses, BehindStationPenaltySlopes) {
  const AngleFrame f = noiseless_frame(Pose6DoF::identity(), board_in_front(3.0));
  const double near = board_loss(Pose6DoF::identity(), {}, board(), f, board_in_front(-1.0));
  const double far = board_loss(Pose6DoF::identity(), {}, board(), f, board_in_front(-2.0));
  EXPECT_GE(near, kBehindPenalty);
  EXPECT_GT(far, near);
}

TEST(BoardGuess, CentroidOnAxis) {
  const Pose6DoF truth = Pose6DoF::from(euler_to_rotation(0.0, kPi / 2, 0.0), Vec3(3, 0, 0));
  const Pose6DoF guess = initial_board_guess(noiseless_frame(Pose6DoF::identity(), truth), board());
  EXPECT_NEAR(guess.y / guess.x, 0.0, 1e-9);
  EXPECT_NEAR(guess.z / guess.x, 0.0, 1e-9);
  EXPECT_NEAR(guess.position().norm(), 3.0, 0.9);
}

TEST(BoardGuess, RayFromMeanAngles) {
  AngleFrame f;
  for (int i = 0; i < 4; ++i) f.angles[i] = {deg2rad(i % 2 ? 1.0 : -1.0), deg2rad(i < 2 ? 44.0 : 46.0), true, true};
  const Pose6DoF g = initial_board_guess(f, board());
  EXPECT_NEAR(g.y / g.x, 0.0, 1e-12);
  EXPECT_NEAR(g.z / g.x, 1.0, 1e-12);
}

TEST(BoardGuess, DegenerateSpreadFallsBackToTwoMeters) {
  AngleFrame f;
  for (int i = 0; i < 5; ++i) f.angles[i] = {0.0, 0.0, true, true};
  Diagnostics d;
  const Pose6DoF g = initial_board_guess(f, board(), &d);
  EXPECT_NEAR(g.position().norm(), 2.0, 1e-12);
  EXPECT_FALSE(d.messages.empty());
}

TEST(BoardFit, NoiselessRoundTrip) {
  const Pose6DoF station(0.1, 0.0, 0.2, 0.1, 0.05, 0.0);
  for (double range : {1.5, 3.0, 5.0}) {
    const Pose6DoF truth = compose(station, board_in_front(range, 20.0, -25.0));
    const auto r = estimate_board_pose(station, {}, board(), noiseless_frame(station, truth));
    EXPECT_LT(position_error(r.solution, truth), 1e-6) << range;
    EXPECT_LT(rotation_error(r.solution, truth), 1e-6) << range;
    EXPECT_LT(r.residual, 1e-18) << range;
  }
}

TEST(BoardFit, QuantizationNoiseMonteCarlo) {
  // each angle rounded to the angle step of one 2 MHz tick
  const double step = kRotorRate / kTickHz;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> yaw(-30.0, 30.0), phase(0.0, 1.0);
  std::vector<double> errs;
  for (int k = 0; k < 100; ++k) {
    const Pose6DoF truth = board_in_front(3.0, yaw(rng), yaw(rng));
    AngleMatrix m = project_angles(Pose6DoF::identity(), {}, board(), truth);
    const double o0 = phase(rng), o1 = phase(rng);
    for (int i = 0; i < m.rows(); ++i) {
      m(i, 0) = (std::floor(m(i, 0) / step + o0) - o0 + 0.5) * step;
      m(i, 1) = (std::floor(m(i, 1) / step + o1) - o1 + 0.5) * step;
    }
    const auto r = estimate_board_pose(Pose6DoF::identity(), {}, board(), frame_from_matrix(m));
    errs.push_back(position_error(r.solution, truth));
  }
  std::sort(errs.begin(), errs.end());
  EXPECT_LT(errs[94], 0.010);
}

TEST(BoardFit, Underdetermined) {
  AngleFrame f = noiseless_frame(Pose6DoF::identity(), board_in_front(3.0));
  while (f.angles.size() > 3) f.angles.erase(f.angles.begin());
  try {
    estimate_board_pose(Pose6DoF::identity(), {}, board(), f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::underdetermined);
  }
}

TEST(BoardFit, LocalMinimumCertificate) {
  const Pose6DoF truth = board_in_front(2.0, 10.0, 10.0);
  AngleFrame f = noiseless_frame(Pose6DoF::identity(), truth);
  for (auto& [id, a] : f.angles) a.theta += 1e-4 * ((id * 7) % 5 - 2);
  const auto r = estimate_board_pose(Pose6DoF::identity(), {}, board(), f);
  ASSERT_TRUE(r.converged);
  Vec6 grad;
  const double h = 1e-6;
  for (int i = 0; i < 6; ++i) {
    Vec6 e = Vec6::Zero();
    e(i) = h;
    grad(i) = (board_loss(Pose6DoF::identity(), {}, board(), f, perturb_pose(r.solution, e)) -
               board_loss(Pose6DoF::identity(), {}, board(), f, perturb_pose(r.solution, -e))) /
              (2 * h);
  }
  EXPECT_LT(grad.norm(), 1e-4 * (1 + r.residual));
}

namespace {

struct StationCase {
  Pose6DoF truth{2.0, 1.0, 0.0, deg2rad(30.0), 0.0, 0.0};
  std::vector<Pose6DoF> poses;
  std::vector<AngleFrame> frames;
};

StationCase station_case(int n) {
  StationCase c;
  for (int i = 0; i < n; ++i) {
    const double a = 2 * kPi * i / n;
    const Pose6DoF local = board_in_front(2.5 + 0.5 * std::cos(a), 15.0 * std::sin(a), 10.0 * std::cos(2 * a));
    const Pose6DoF shifted = compose(Pose6DoF(0, 0.4 * std::sin(a), 0.3 * std::cos(a), 0, 0, 0), local);
    c.poses.push_back(compose(c.truth, shifted));
    c.frames.push_back(noiseless_frame(c.truth, c.poses.back()));
  }
  return c;
}

}  // namespace

TEST(StationFit, RecoversFromPerturbedStart) {
  const StationCase c = station_case(25);
  Vec6 d;
  d << 0.03, -0.03, 0.03, deg2rad(2.0) / std::sqrt(3.0), -deg2rad(2.0) / std::sqrt(3.0), deg2rad(2.0) / std::sqrt(3.0);
  const Pose6DoF l0 = perturb_pose(c.truth, d);
  const auto r = estimate_station_pose(c.poses, c.frames, l0, {}, board());
  EXPECT_LT(position_error(r.solution, c.truth), 1e-6);
  EXPECT_LT(rotation_error(r.solution, c.truth), 1e-6);
}

TEST(StationFit, SingleFrameIsEnough) {
  const StationCase c = station_case(1);
  const Pose6DoF l0 = perturb_pose(c.truth, (Vec6() << 0.01, 0.005, -0.01, 0.005, 0.0, -0.005).finished());
  const auto r = estimate_station_pose(c.poses, c.frames, l0, {}, board());
  EXPECT_LT(position_error(r.solution, c.truth), 1e-6);
  EXPECT_LT(rotation_error(r.solution, c.truth), 1e-6);
}

TEST(StationFit, MirroredStartIsFlaggedByResidual) {
  const StationCase c = station_case(10);
  // reflect the station through the plane of the first board
  const Pose6DoF b = c.poses.front();
  const Vec3 n = b.rotation() * Vec3::UnitZ();
  const Mat3 h = Mat3::Identity() - 2 * n * n.transpose();
  const Vec3 p = b.position() + h * (c.truth.position() - b.position());
  Mat3 r = h * c.truth.rotation().matrix();
  r.col(1) = -r.col(1);  // back to det +1
  const auto rep = estimate_station_pose(c.poses, c.frames, Pose6DoF::from(r, p), {}, board());
  if (position_error(rep.solution, c.truth) > 1e-3) EXPECT_GT(rep.residual, 1e-6);
}

TEST(StationFit, EmptyInput) {
  EXPECT_THROW(estimate_station_pose({}, {}, Pose6DoF::identity(), {}, board()), Error);
}
