#pragma once

#include "lhcalib/errors.hpp"
#include "lhcalib/forward_model.hpp"
#include "lhcalib/geometry.hpp"
#include "lhcalib/reconstruct.hpp"

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lhcalib {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Objective = std::function<double(const Vec6&)>;

struct NmOptions {
  double tolerance_f = 1e-12;
  double tolerance_x = 1e-9;
  int max_iterations = 10'000;
  /// Initial simplex step per coordinate: meters for translation, radians for
  /// rotation.
  Vec6 scale = (Vec6() << 0.1, 0.1, 0.1, 0.05, 0.05, 0.05).finished();
  /// Restarts from the best vertex with scale / 10 after hitting
  /// max_iterations.
  int max_restarts = 1;

  void validate() const;
};

struct NelderMeadResult {
  Vec6 point = Vec6::Zero();
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  int restarts_used = 0;
  std::vector<std::string> diagnostics;
};

/// Downhill simplex (reflection 1, expansion 2, contraction 0.5, shrink 0.5).
/// Stops when the spread of simplex values is below tolerance_f and every
/// vertex lies within tolerance_x (max-norm) of the best one. Non-finite
/// objective values rank as +infinity. Throws Error(invalid_start) when f is
/// not finite at x0.
NelderMeadResult nelder_mead(const Objective& f, const Vec6& x0, const NmOptions& opts = {});

/// Outcome of a pose fit: the solution, its final loss and solver stats.
struct ObjectiveReport {
  Pose6DoF solution;
  double residual = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  int restarts_used = 0;
  std::vector<std::string> diagnostics;
};

/// Loss added for poses that put a diode behind a laser origin; on top of it
/// goes the summed distance behind so the penalty still slopes toward
/// validity.
inline constexpr double kBehindPenalty = 1e6;

/// K1 = |C(L, P) - M|_F^2 over the diodes present in `frame`, with the
/// behind-station penalty.
double board_loss(const Pose6DoF& station_pose, const StationIntrinsics& intrinsics,
                  const BoardGeometry& geometry, const AngleFrame& frame, const Pose6DoF& board_pose);

/// K2 = sum_n |C(L, P_n) - M_n|_F^2.
double station_loss(std::span<const Pose6DoF> board_poses, std::span<const AngleFrame> frames,
                    const Pose6DoF& station_pose, const StationIntrinsics& intrinsics,
                    const BoardGeometry& geometry);

/// Starting pose from the frame's mean angles: ray (1, tan(mean theta),
/// tan(mean phi)) scaled to range = diode span / angular span. The
/// orientation is a weak-perspective alignment of the diode layout with the
/// observed directions, with the board normal facing the station.
Pose6DoF initial_board_guess(const AngleFrame& frame, const BoardGeometry& geometry,
                             Diagnostics* diagnostics = nullptr);

/// Board pose minimizing K1 for a station at `station_pose`. Without x0 the
/// fit starts from initial_board_guess and tilted variants of it (planar
/// boards have a near-mirror tilt ambiguity) and keeps the lowest residual.
ObjectiveReport estimate_board_pose(const Pose6DoF& station_pose, const StationIntrinsics& intrinsics,
                                    const BoardGeometry& geometry, const AngleFrame& frame,
                                    const std::optional<Pose6DoF>& x0 = std::nullopt,
                                    const NmOptions& opts = {});

/// Station pose minimizing K2 over matched board poses and frames, started
/// at l0.
ObjectiveReport estimate_station_pose(std::span<const Pose6DoF> board_poses,
                                      std::span<const AngleFrame> frames, const Pose6DoF& l0,
                                      const StationIntrinsics& intrinsics, const BoardGeometry& geometry,
                                      const NmOptions& opts = {});

/// Pose parameterization used by the pose fits: translation offset plus a
/// rotation vector applied on the left of the base rotation.
Pose6DoF perturb_pose(const Pose6DoF& base, const Vec6& delta);

}  // namespace lhcalib
