#include "lhcalib/kabsch.hpp"

#include "lhcalib/errors.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace lhcalib {

double weighted_alignment_cost(std::span<const Vec3> source, std::span<const Vec3> target,
                               std::span<const double> weights, const Mat3& rotation,
                               const Vec3& translation) {
  double cost = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    cost += weights[i] * (rotation * source[i] + translation - target[i]).squaredNorm();
  }
  return cost;
}

RigidFit weighted_kabsch(std::span<const Vec3> source, std::span<const Vec3> target,
                         std::span<const double> weights) {
  const std::size_t n = source.size();
  if (target.size() != n || weights.size() != n) {
    throw Error(ErrorKind::validation, "kabsch: source, target and weights differ in length");
  }
  if (n < 3) throw Error(ErrorKind::validation, "kabsch: need at least 3 point pairs");
  std::size_t positive = 0;
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw Error(ErrorKind::validation, "kabsch: weights must be finite and >= 0");
    if (w > 0.0) ++positive;
    total += w;
  }
  if (positive < 3) throw Error(ErrorKind::validation, "kabsch: need at least 3 positive weights");

  Vec3 cs = Vec3::Zero(), ct = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    cs += weights[i] * source[i];
    ct += weights[i] * target[i];
  }
  cs /= total;
  ct /= total;

  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    h += weights[i] * (source[i] - cs) * (target[i] - ct).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  // A rotation is pinned down once the cross-covariance has rank >= 2.
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0)) {
    throw Error(ErrorKind::degenerate,
                "kabsch: point sets are collinear or coincident; use a calibration motion that spans a plane");
  }
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = v * d * u.transpose();

  RigidFit fit;
  fit.rotation = RotationMatrix::trusted(r);
  fit.translation = ct - r * cs;
  fit.conditioning = sv(1) / sv(0);
  fit.weighted_rmsd = std::sqrt(weighted_alignment_cost(source, target, weights, r, fit.translation) / total);
  return fit;
}

}  // namespace lhcalib
