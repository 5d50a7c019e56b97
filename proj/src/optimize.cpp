#include "lhcalib/optimize.hpp"

#include "lhcalib/kabsch.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace lhcalib {

void NmOptions::validate() const {
  if (!(tolerance_f > 0.0) || !(tolerance_x > 0.0)) throw Error(ErrorKind::validation, "optimizer tolerances must be > 0");
  if (max_iterations < 1) throw Error(ErrorKind::validation, "optimizer max_iterations must be >= 1");
  if (max_restarts < 0) throw Error(ErrorKind::validation, "optimizer max_restarts must be >= 0");
  if (!scale.allFinite() || (scale.array() <= 0.0).any()) {
    throw Error(ErrorKind::validation, "optimizer scale entries must be finite and > 0");
  }
}

namespace {

constexpr int kDim = 6;
constexpr double kReflect = 1.0;
constexpr double kExpand = 2.0;
constexpr double kContract = 0.5;
constexpr double kShrink = 0.5;

struct Simplex {
  std::array<Vec6, kDim + 1> x;
  std::array<double, kDim + 1> f;
};

double safe_eval(const Objective& f, const Vec6& x, int& evaluations) {
  ++evaluations;
  const double v = f(x);
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

struct RunOutcome {
  Vec6 best;
  double value;
  int iterations;
  bool converged;
};

RunOutcome run_simplex(const Objective& f, const Vec6& x0, double f0, const Vec6& scale, const NmOptions& opts,
                       int& evaluations) {
  Simplex s;
  s.x[0] = x0;
  s.f[0] = f0;
  for (int i = 0; i < kDim; ++i) {
    s.x[i + 1] = x0;
    s.x[i + 1](i) += scale(i);
    s.f[i + 1] = safe_eval(f, s.x[i + 1], evaluations);
  }

  std::array<int, kDim + 1> order;
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s.f[a] < s.f[b]; });
    Simplex sorted;
    for (int i = 0; i <= kDim; ++i) {
      sorted.x[i] = s.x[order[i]];
      sorted.f[i] = s.f[order[i]];
    }
    s = sorted;
  };

  int iterations = 0;
  bool converged = false;
  while (true) {
    sort_simplex();
    double x_spread = 0.0;
    for (int i = 1; i <= kDim; ++i) x_spread = std::max(x_spread, (s.x[i] - s.x[0]).cwiseAbs().maxCoeff());
    const double f_spread = s.f[kDim] - s.f[0];
    if (f_spread < opts.tolerance_f && x_spread < opts.tolerance_x) {
      converged = true;
      break;
    }
    if (iterations >= opts.max_iterations) break;
    ++iterations;

    Vec6 centroid = Vec6::Zero();
    for (int i = 0; i < kDim; ++i) centroid += s.x[i];
    centroid /= kDim;

    const Vec6& worst = s.x[kDim];
    const Vec6 xr = centroid + kReflect * (centroid - worst);
    const double fr = safe_eval(f, xr, evaluations);

    if (fr < s.f[0]) {
      const Vec6 xe = centroid + kExpand * (xr - centroid);
      const double fe = safe_eval(f, xe, evaluations);
      if (fe < fr) {
        s.x[kDim] = xe;
        s.f[kDim] = fe;
      } else {
        s.x[kDim] = xr;
        s.f[kDim] = fr;
      }
      continue;
    }
    if (fr < s.f[kDim - 1]) {
      s.x[kDim] = xr;
      s.f[kDim] = fr;
      continue;
    }
    if (fr < s.f[kDim]) {
      const Vec6 xc = centroid + kContract * (xr - centroid);
      const double fc = safe_eval(f, xc, evaluations);
      if (fc <= fr) {
        s.x[kDim] = xc;
        s.f[kDim] = fc;
        continue;
      }
    } else {
      const Vec6 xc = centroid + kContract * (worst - centroid);
      const double fc = safe_eval(f, xc, evaluations);
      if (fc < s.f[kDim]) {
        s.x[kDim] = xc;
        s.f[kDim] = fc;
        continue;
      }
    }
    for (int i = 1; i <= kDim; ++i) {
      s.x[i] = s.x[0] + kShrink * (s.x[i] - s.x[0]);
      s.f[i] = safe_eval(f, s.x[i], evaluations);
    }
  }
  return {s.x[0], s.f[0], iterations, converged};
}

Mat3 rotvec_to_matrix(const Vec3& r) {
  const double angle = r.norm();
  if (angle < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, r / angle).toRotationMatrix();
}

struct Observation {
  std::vector<Vec3> points;  // board frame
  std::vector<double> theta;
  std::vector<double> phi;
};

Observation observe(const AngleFrame& frame, const BoardGeometry& geometry) {
  Observation obs;
  obs.points.reserve(frame.angles.size());
  for (const auto& [id, a] : frame.angles) {
    if (id < 0 || id >= geometry.size()) {
      throw Error(ErrorKind::validation, "frame references diode " + std::to_string(id) +
                                             " outside the board geometry");
    }
    obs.points.push_back(geometry.diode(id));
    obs.theta.push_back(a.theta);
    obs.phi.push_back(a.phi);
  }
  return obs;
}

/// Sum of squared angle residuals of points already expressed in the station
/// frame through q = rotation * p + translation. Returns false if any point
/// is behind a laser origin; `behind` then accumulates the violation.
bool accumulate_residuals(const Mat3& rotation, const Vec3& translation, const StationIntrinsics& in,
                          const std::vector<Vec3>& points, const std::vector<double>& theta,
                          const std::vector<double>& phi, double& sum, double& behind) {
  bool valid = true;
  const Vec3& oa = in.azimuth_laser_offset;
  const Vec3& oe = in.elevation_laser_offset;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 q = rotation * points[i] + translation;
    const double xa = q.x() - oa.x();
    const double xe = q.x() - oe.x();
    if (!(xa > kMinForwardDistance) || !(xe > kMinForwardDistance)) {
      valid = false;
      behind += kMinForwardDistance - std::min(xa, xe);
      continue;
    }
    const double dt = std::atan2(q.y() - oa.y(), xa) - theta[i];
    const double dp = std::atan2(q.z() - oe.z(), xe) - phi[i];
    sum += dt * dt + dp * dp;
  }
  return valid;
}

double finish_loss(bool valid, double sum, double behind) {
  return valid ? sum : kBehindPenalty + behind;
}

ObjectiveReport to_report(const Pose6DoF& base, const NelderMeadResult& r) {
  ObjectiveReport rep;
  rep.solution = perturb_pose(base, r.point);
  rep.residual = r.value;
  rep.iterations = r.iterations;
  rep.evaluations = r.evaluations;
  rep.converged = r.converged;
  rep.restarts_used = r.restarts_used;
  rep.diagnostics = r.diagnostics;
  if (r.value >= kBehindPenalty) {
    rep.converged = false;
    rep.diagnostics.push_back("solution still places diodes behind the station");
  }
  return rep;
}

Mat3 facing_rotation(const Vec3& ray) {
  // Board +z points back at the station; board +x stays horizontal.
  const Vec3 z = -ray.normalized();
  Vec3 x = Vec3::UnitZ().cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitY().cross(z);
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return r;
}

}  // namespace

NelderMeadResult nelder_mead(const Objective& f, const Vec6& x0, const NmOptions& opts) {
  opts.validate();
  if (!x0.allFinite()) throw Error(ErrorKind::invalid_start, "start point is not finite");
  NelderMeadResult result;
  const double f0 = f(x0);
  result.evaluations = 1;
  if (!std::isfinite(f0)) throw Error(ErrorKind::invalid_start, "objective is not finite at the start point");

  Vec6 start = x0;
  double f_start = f0;
  Vec6 scale = opts.scale;
  for (int attempt = 0;; ++attempt) {
    const RunOutcome run = run_simplex(f, start, f_start, scale, opts, result.evaluations);
    result.iterations += run.iterations;
    result.point = run.best;
    result.value = run.value;
    result.converged = run.converged;
    if (run.converged || attempt >= opts.max_restarts) break;
    result.restarts_used = attempt + 1;
    std::ostringstream os;
    os << "hit max_iterations=" << opts.max_iterations << " (f=" << run.value << "), restarting with scale/10";
    result.diagnostics.push_back(os.str());
    start = run.best;
    f_start = run.value;
    scale /= 10.0;
  }
  if (!result.converged) {
    std::ostringstream os;
    os << "not converged after " << result.iterations << " iterations and " << result.restarts_used
       << " restart(s); best f=" << result.value;
    result.diagnostics.push_back(os.str());
  }
  return result;
}

Pose6DoF perturb_pose(const Pose6DoF& base, const Vec6& delta) {
  const Mat3 r = rotvec_to_matrix(delta.tail<3>()) * base.rotation().matrix();
  return Pose6DoF::from(RotationMatrix::trusted(r), base.position() + delta.head<3>());
}

double board_loss(const Pose6DoF& station_pose, const StationIntrinsics& intrinsics, const BoardGeometry& geometry,
                  const AngleFrame& frame, const Pose6DoF& board_pose) {
  const Observation obs = observe(frame, geometry);
  const BoardToStation m = BoardToStation::from(station_pose, board_pose);
  double sum = 0.0, behind = 0.0;
  const bool ok = accumulate_residuals(m.rotation, m.translation, intrinsics, obs.points, obs.theta, obs.phi, sum, behind);
  return finish_loss(ok, sum, behind);
}

double station_loss(std::span<const Pose6DoF> board_poses, std::span<const AngleFrame> frames,
                    const Pose6DoF& station_pose, const StationIntrinsics& intrinsics,
                    const BoardGeometry& geometry) {
  if (board_poses.size() != frames.size()) throw Error(ErrorKind::validation, "board poses and frames differ in count");
  double sum = 0.0, behind = 0.0;
  bool ok = true;
  for (std::size_t n = 0; n < frames.size(); ++n) {
    const Observation obs = observe(frames[n], geometry);
    const BoardToStation m = BoardToStation::from(station_pose, board_poses[n]);
    ok = accumulate_residuals(m.rotation, m.translation, intrinsics, obs.points, obs.theta, obs.phi, sum, behind) && ok;
  }
  return finish_loss(ok, sum, behind);
}

Pose6DoF initial_board_guess(const AngleFrame& frame, const BoardGeometry& geometry, Diagnostics* diagnostics) {
  if (frame.size() < kMinFrameDiodes) {
    throw Error(ErrorKind::underdetermined, "frame has " + std::to_string(frame.size()) + " diodes, need >= 4");
  }
  std::vector<Vec3> rays, local;
  double mean_theta = 0.0, mean_phi = 0.0;
  for (const auto& [id, a] : frame.angles) {
    if (id < 0 || id >= geometry.size()) {
      throw Error(ErrorKind::validation, "frame references diode " + std::to_string(id) + " outside the board geometry");
    }
    mean_theta += a.theta;
    mean_phi += a.phi;
    rays.emplace_back(1.0, std::tan(a.theta), std::tan(a.phi));
    local.push_back(geometry.diode(id));
  }
  mean_theta /= frame.size();
  mean_phi /= frame.size();
  const Vec3 ray = Vec3(1.0, std::tan(mean_theta), std::tan(mean_phi)).normalized();

  double angular = 0.0, span = 0.0;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    for (std::size_t j = i + 1; j < rays.size(); ++j) {
      const Vec3 a = rays[i].normalized(), b = rays[j].normalized();
      angular = std::max(angular, std::atan2(a.cross(b).norm(), a.dot(b)));
      span = std::max(span, (local[i] - local[j]).norm());
    }
  }
  double range = 2.0;
  if (angular < 1e-4) {
    if (diagnostics) diagnostics->note("degenerate angular spread; initial range defaults to 2 m");
  } else {
    range = span / angular;
  }
  const Vec3 position = range * ray;

  // Weak perspective: put every diode on the plane x = position.x along its
  // measured direction and align the layout to that picture.
  std::vector<Vec3> pictured;
  pictured.reserve(rays.size());
  for (const auto& r : rays) pictured.push_back(position.x() * r);
  const std::vector<double> weights(rays.size(), 1.0);
  Mat3 rotation;
  try {
    rotation = weighted_kabsch(local, pictured, weights).rotation.matrix();
  } catch (const Error&) {
    rotation = facing_rotation(ray);
    if (diagnostics) diagnostics->note("collinear diode picture; initial orientation faces the station");
  }
  return Pose6DoF::from(RotationMatrix::trusted(rotation), position);
}

ObjectiveReport estimate_board_pose(const Pose6DoF& station_pose, const StationIntrinsics& intrinsics,
                                    const BoardGeometry& geometry, const AngleFrame& frame,
                                    const std::optional<Pose6DoF>& x0, const NmOptions& opts) {
  if (frame.size() < kMinFrameDiodes) {
    throw Error(ErrorKind::underdetermined, "frame has " + std::to_string(frame.size()) + " diodes, need >= 4");
  }
  const Observation obs = observe(frame, geometry);
  const Mat3 rs_t = station_pose.rotation().matrix().transpose();
  const Vec3 ts = station_pose.position();

  auto fit_from = [&](const Pose6DoF& start) {
    const Mat3 r0 = start.rotation().matrix();
    const Vec3 t0 = start.position();
    const Objective k1 = [&](const Vec6& d) {
      const Mat3 rb = rotvec_to_matrix(d.tail<3>()) * r0;
      const Vec3 tb = t0 + d.head<3>();
      double sum = 0.0, behind = 0.0;
      const bool ok = accumulate_residuals(rs_t * rb, rs_t * (tb - ts), intrinsics, obs.points, obs.theta, obs.phi, sum, behind);
      return finish_loss(ok, sum, behind);
    };
    return to_report(start, nelder_mead(k1, Vec6::Zero(), opts));
  };

  if (x0) return fit_from(*x0);

  Diagnostics diag;
  // The guess is expressed in the station frame; lift it to the world.
  const Pose6DoF local_guess = initial_board_guess(frame, geometry, &diag);
  const Pose6DoF guess = compose(station_pose, local_guess);
  const Vec3 ray = (guess.position() - ts).normalized();
  Vec3 a1 = ray.cross(station_pose.rotation() * Vec3::UnitZ());
  if (a1.norm() < 1e-9) a1 = ray.cross(station_pose.rotation() * Vec3::UnitY());
  a1.normalize();
  const Vec3 a2 = ray.cross(a1).normalized();

  constexpr double kTilt = 0.35;
  std::vector<Pose6DoF> starts{guess};
  for (const Vec3& axis : {a1, a2}) {
    for (double sign : {1.0, -1.0}) {
      const Mat3 tilt = Eigen::AngleAxisd(sign * kTilt, axis).toRotationMatrix();
      starts.push_back(Pose6DoF::from(RotationMatrix::trusted(tilt * guess.rotation().matrix()), guess.position()));
    }
  }
  std::optional<ObjectiveReport> best;
  int iterations = 0, evaluations = 0;
  for (const auto& s : starts) {
    ObjectiveReport rep = fit_from(s);
    iterations += rep.iterations;
    evaluations += rep.evaluations;
    if (!best || (rep.converged && !best->converged) ||
        (rep.converged == best->converged && rep.residual < best->residual)) {
      best = std::move(rep);
    }
  }
  best->iterations = iterations;
  best->evaluations = evaluations;
  for (auto& m : diag.messages) best->diagnostics.push_back(m);
  return *best;
}

ObjectiveReport estimate_station_pose(std::span<const Pose6DoF> board_poses, std::span<const AngleFrame> frames,
                                      const Pose6DoF& l0, const StationIntrinsics& intrinsics,
                                      const BoardGeometry& geometry, const NmOptions& opts) {
  if (frames.empty()) throw Error(ErrorKind::insufficient_data, "station pose fit needs at least one frame");
  if (board_poses.size() != frames.size()) throw Error(ErrorKind::validation, "board poses and frames differ in count");

  // Board diodes in world coordinates are fixed during this fit.
  std::vector<Vec3> world;
  std::vector<double> theta, phi;
  for (std::size_t n = 0; n < frames.size(); ++n) {
    const Observation obs = observe(frames[n], geometry);
    const Mat3 rb = board_poses[n].rotation().matrix();
    const Vec3 tb = board_poses[n].position();
    for (std::size_t i = 0; i < obs.points.size(); ++i) {
      world.push_back(rb * obs.points[i] + tb);
      theta.push_back(obs.theta[i]);
      phi.push_back(obs.phi[i]);
    }
  }
  const Mat3 r0 = l0.rotation().matrix();
  const Vec3 t0 = l0.position();
  const Objective k2 = [&](const Vec6& d) {
    const Mat3 rs_t = (rotvec_to_matrix(d.tail<3>()) * r0).transpose();
    const Vec3 ts = t0 + d.head<3>();
    double sum = 0.0, behind = 0.0;
    const bool ok = accumulate_residuals(rs_t, -(rs_t * ts), intrinsics, world, theta, phi, sum, behind);
    return finish_loss(ok, sum, behind);
  };
  return to_report(l0, nelder_mead(k2, Vec6::Zero(), opts));
}

}  // namespace lhcalib
