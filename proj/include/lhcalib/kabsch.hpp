#pragma once

#include "lhcalib/geometry.hpp"

#include <span>

namespace lhcalib {

/// target ≈ rotation * source + translation.
struct RigidFit {
  RotationMatrix rotation;
  Vec3 translation = Vec3::Zero();
  /// sqrt(sum w |R s + T - t|^2 / sum w), meters.
  double weighted_rmsd = 0.0;
  /// Ratio of the second to the first singular value of the weighted
  /// cross-covariance; near zero for almost collinear paths.
  double conditioning = 0.0;

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Pose6DoF as_pose() const { return Pose6DoF::from(rotation, translation); }
};

/// Weighted least-squares rigid superposition of matched point sets
/// (Kabsch with reflection correction).
///
/// Throws Error(validation) for size mismatch, fewer than 3 points, fewer
/// than 3 positive weights or a negative / non-finite weight, and
/// Error(degenerate) when the weighted point sets are collinear or
/// coincident.
RigidFit weighted_kabsch(std::span<const Vec3> source, std::span<const Vec3> target,
                         std::span<const double> weights);

/// Weighted objective sum w |R s + T - t|^2 for an arbitrary (R, T).
double weighted_alignment_cost(std::span<const Vec3> source, std::span<const Vec3> target,
                               std::span<const double> weights, const Mat3& rotation,
                               const Vec3& translation);

}  // namespace lhcalib
