#include "lhcalib/geometry.hpp"

#include "lhcalib/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lhcalib {

double deg2rad(double deg) { return deg * kPi / 180.0; }
double rad2deg(double rad) { return rad * 180.0 / kPi; }

double wrap_angle(double rad) {
  double a = std::remainder(rad, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

RotationMatrix RotationMatrix::from_matrix(const Mat3& m, double tolerance) {
  if (!m.allFinite()) throw Error(ErrorKind::validation, "rotation matrix has non-finite entries");
  const double deviation = (m.transpose() * m - Mat3::Identity()).norm();
  if (deviation > tolerance) {
    std::ostringstream os;
    os << "matrix is not orthonormal (Frobenius deviation " << deviation << ")";
    throw Error(ErrorKind::validation, os.str());
  }
  if (m.determinant() < 0.0) throw Error(ErrorKind::validation, "matrix is a reflection (det < 0)");
  return RotationMatrix(m);
}

RotationMatrix euler_to_rotation(double alpha, double beta, double gamma) {
  const double ca = std::cos(alpha), sa = std::sin(alpha);
  const double cb = std::cos(beta), sb = std::sin(beta);
  const double cg = std::cos(gamma), sg = std::sin(gamma);
  Mat3 r;
  r << ca * cb, ca * sb * sg - sa * cg, ca * sb * cg + sa * sg,
       sa * cb, sa * sb * sg + ca * cg, sa * sb * cg - ca * sg,
       -sb,     cb * sg,                cb * cg;
  return RotationMatrix::trusted(r);
}

EulerAngles rotation_to_euler(const Mat3& r) {
  RotationMatrix::from_matrix(r);  // validates
  const double cb = std::hypot(r(0, 0), r(1, 0));
  EulerAngles e;
  e.beta = std::atan2(-r(2, 0), cb);
  if (cb < 1e-12) {
    // Gimbal lock: only alpha - gamma (or alpha + gamma) is observable.
    e.alpha = 0.0;
    e.beta = r(2, 0) < 0.0 ? kPi / 2.0 : -kPi / 2.0;
    e.gamma = r(2, 0) < 0.0 ? std::atan2(r(0, 1), r(1, 1)) : std::atan2(-r(0, 1), r(1, 1));
  } else {
    e.alpha = std::atan2(r(1, 0), r(0, 0));
    e.gamma = std::atan2(r(2, 1), r(2, 2));
  }
  e.alpha = wrap_angle(e.alpha);
  e.gamma = wrap_angle(e.gamma);
  return e;
}

EulerAngles rotation_to_euler(const RotationMatrix& r) { return rotation_to_euler(r.matrix()); }

Pose6DoF::Pose6DoF(double x_, double y_, double z_, double alpha_, double beta_, double gamma_)
    : x(x_), y(y_), z(z_), alpha(wrap_angle(alpha_)), beta(wrap_angle(beta_)), gamma(wrap_angle(gamma_)) {}

Pose6DoF Pose6DoF::from(const RotationMatrix& r, const Vec3& t) {
  const EulerAngles e = rotation_to_euler(r);
  return {t.x(), t.y(), t.z(), e.alpha, e.beta, e.gamma};
}

Pose6DoF Pose6DoF::from(const Mat3& r, const Vec3& t) {
  return from(RotationMatrix::from_matrix(r), t);
}

Eigen::Isometry3d Pose6DoF::isometry() const {
  Eigen::Isometry3d iso = Eigen::Isometry3d::Identity();
  iso.linear() = rotation().matrix();
  iso.translation() = position();
  return iso;
}

Vec3 Pose6DoF::apply(const Vec3& p) const { return rotation() * p + position(); }

Pose6DoF compose(const Pose6DoF& outer, const Pose6DoF& inner) {
  const Mat3 ro = outer.rotation().matrix();
  const Mat3 r = ro * inner.rotation().matrix();
  const Vec3 t = ro * inner.position() + outer.position();
  return Pose6DoF::from(RotationMatrix::trusted(r), t);
}

Pose6DoF inverse(const Pose6DoF& pose) {
  const Mat3 rt = pose.rotation().matrix().transpose();
  return Pose6DoF::from(RotationMatrix::trusted(rt), -(rt * pose.position()));
}

std::vector<Vec3> transform_points(const Pose6DoF& pose, std::span<const Vec3> points) {
  const Mat3 r = pose.rotation().matrix();
  const Vec3 t = pose.position();
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(r * p + t);
  return out;
}

BoardGeometry::BoardGeometry(std::string board_id, std::vector<Vec3> diodes)
    : board_id_(std::move(board_id)), diodes_(std::move(diodes)) {
  if (diodes_.size() < 4) {
    throw Error(ErrorKind::validation, "board geometry needs at least 4 diodes, got " +
                                           std::to_string(diodes_.size()));
  }
  for (std::size_t i = 0; i < diodes_.size(); ++i) {
    if (!diodes_[i].allFinite()) {
      throw Error(ErrorKind::validation, "diode " + std::to_string(i) + " has a non-finite position");
    }
  }
  for (std::size_t i = 0; i < diodes_.size(); ++i) {
    for (std::size_t j = i + 1; j < diodes_.size(); ++j) {
      const double d = (diodes_[i] - diodes_[j]).norm();
      if (d <= 1e-6) {
        throw Error(ErrorKind::validation, "diodes " + std::to_string(i) + " and " +
                                               std::to_string(j) + " coincide");
      }
      diameter_ = std::max(diameter_, d);
    }
  }
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : diodes_) centroid += p;
  centroid /= static_cast<double>(diodes_.size());
  for (auto& p : diodes_) p -= centroid;
  recenter_offset_ = centroid;
}

BoardGeometry BoardGeometry::grid(int rows, int cols, double pitch_m, std::string board_id) {
  if (rows < 1 || cols < 1 || !(pitch_m > 0.0)) {
    throw Error(ErrorKind::validation, "grid needs positive rows, cols and pitch");
  }
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(rows * cols));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) pts.emplace_back(c * pitch_m, r * pitch_m, 0.0);
  }
  return BoardGeometry(std::move(board_id), std::move(pts));
}

BoardGeometry BoardGeometry::default_grid() { return grid(4, 8, 0.020, "grid-4x8-20mm"); }

std::vector<Vec3> board_diodes_world(const BoardGeometry& geometry, const Pose6DoF& board_pose) {
  return transform_points(board_pose, geometry.diodes());
}

Pose6DoF look_at(const Vec3& from, const Vec3& to, double roll) {
  const Vec3 d = (to - from).normalized();
  const double alpha = std::atan2(d.y(), d.x());
  const double beta = -std::asin(std::clamp(d.z(), -1.0, 1.0));
  return {from.x(), from.y(), from.z(), alpha, beta, roll};
}

}  // namespace lhcalib
