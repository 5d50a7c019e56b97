#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <span>
#include <string>
#include <vector>

namespace lhcalib {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

double deg2rad(double deg);
double rad2deg(double rad);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double rad);

/// Proper rotation (orthonormal, det = +1). Construction from an arbitrary
/// matrix goes through from_matrix(), which validates.
class RotationMatrix {
 public:
  RotationMatrix() : m_(Mat3::Identity()) {}

  /// Throws Error(validation) when the Frobenius deviation from
  /// orthonormality exceeds `tolerance` or det(m) < 0.
  static RotationMatrix from_matrix(const Mat3& m, double tolerance = 1e-6);

  /// Skips validation; for matrices that are rotations by construction.
  static RotationMatrix trusted(const Mat3& m) { return RotationMatrix(m); }

  const Mat3& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  RotationMatrix operator*(const RotationMatrix& rhs) const {
    return RotationMatrix(m_ * rhs.m_);
  }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }
  RotationMatrix transpose() const { return RotationMatrix(m_.transpose()); }

 private:
  explicit RotationMatrix(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

struct EulerAngles {
  double alpha = 0.0;  // about z
  double beta = 0.0;   // about y'
  double gamma = 0.0;  // about x''
};

/// Intrinsic Z-Y-X: R = Rz(alpha) * Ry(beta) * Rx(gamma).
RotationMatrix euler_to_rotation(double alpha, double beta, double gamma);

/// Inverse of euler_to_rotation. At gimbal lock (|beta| = pi/2) the alpha = 0
/// representative is returned. Rejects non-orthonormal input.
EulerAngles rotation_to_euler(const Mat3& r);
EulerAngles rotation_to_euler(const RotationMatrix& r);

/// Position in meters plus intrinsic Z-Y-X Euler angles in radians,
/// normalized to (-pi, pi]. Maps local coordinates to the parent frame:
/// p_parent = R * p_local + t.
struct Pose6DoF {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;

  Pose6DoF() = default;
  Pose6DoF(double x_, double y_, double z_, double alpha_, double beta_,
           double gamma_);

  static Pose6DoF identity() { return {}; }
  static Pose6DoF from(const RotationMatrix& r, const Vec3& t);
  static Pose6DoF from(const Mat3& r, const Vec3& t);

  Vec3 position() const { return {x, y, z}; }
  RotationMatrix rotation() const { return euler_to_rotation(alpha, beta, gamma); }
  Eigen::Isometry3d isometry() const;

  Vec3 apply(const Vec3& p) const;
};

/// outer ∘ inner: first inner, then outer.
Pose6DoF compose(const Pose6DoF& outer, const Pose6DoF& inner);
Pose6DoF inverse(const Pose6DoF& pose);

std::vector<Vec3> transform_points(const Pose6DoF& pose, std::span<const Vec3> points);

/// Diode layout of the calibration board in its own frame. The origin is the
/// diode centroid: constructors recenter and keep the applied shift.
class BoardGeometry {
 public:
  static constexpr int kDefaultDiodeCount = 32;

  /// Validates (>= 4 diodes, pairwise distance > 1e-6 m) and recenters.
  BoardGeometry(std::string board_id, std::vector<Vec3> diodes);

  /// Planar 4 x 8 grid, 20 mm pitch, row-major, normal along board +z.
  static BoardGeometry default_grid();

  /// Planar rows x cols grid, row-major; for tests and custom boards.
  static BoardGeometry grid(int rows, int cols, double pitch_m, std::string board_id);

  const std::string& board_id() const { return board_id_; }
  const std::vector<Vec3>& diodes() const { return diodes_; }
  int size() const { return static_cast<int>(diodes_.size()); }
  const Vec3& diode(int id) const { return diodes_.at(static_cast<std::size_t>(id)); }

  /// Shift subtracted from the supplied positions to put the centroid at the
  /// origin.
  const Vec3& recenter_offset() const { return recenter_offset_; }

  /// Largest distance between two diodes.
  double diameter() const { return diameter_; }

 private:
  std::string board_id_;
  std::vector<Vec3> diodes_;
  Vec3 recenter_offset_ = Vec3::Zero();
  double diameter_ = 0.0;
};

std::vector<Vec3> board_diodes_world(const BoardGeometry& geometry, const Pose6DoF& board_pose);

/// Station orientation whose forward axis (+x) points from `from` to `to`,
/// with the given roll about that axis.
Pose6DoF look_at(const Vec3& from, const Vec3& to, double roll = 0.0);

}  // namespace lhcalib
