#include "lhcalib/pipeline.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

namespace lhcalib {

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<long>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

template <class Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.kind(), e.what());
  }
}

/// A warm-started fit is re-done from scratch when its residual jumps well
/// above the recent level; this catches the mirror-tilt basin.
constexpr double kSuspiciousRatio = 4.0;
constexpr double kSuspiciousFloor = 1e-12;
constexpr std::size_t kResidualWindow = 15;

}  // namespace

namespace {

struct FrameFit {
  bool ok = false;
  Pose6DoF pose;
  double residual = 0.0;
};

/// Warm-started fits from `seed` at frame `from`, walking in direction
/// `step` until the branch agrees with `current` again. Stops early when the
/// branch is clearly worse.
struct Branch {
  std::vector<std::pair<std::size_t, FrameFit>> fits;
  double branch_sum = 0.0;
  double current_sum = 0.0;
};

constexpr double kBranchRotation = 3.0 * kPi / 180.0;
constexpr double kRejoinRotation = 1.0 * kPi / 180.0;
constexpr std::size_t kCheckpointSpacing = 24;
constexpr std::size_t kBranchProbe = 30;
constexpr double kBranchGiveUp = 1.5;

}  // namespace

PathResult estimate_path(std::span<const AngleFrame> frames, const StationIntrinsics& intrinsics,
                         const BoardGeometry& geometry, const PathOptions& options) {
  if (static_cast<int>(frames.size()) < options.min_frames) {
    throw Error(ErrorKind::insufficient_data, "path estimation needs at least " + std::to_string(options.min_frames) +
                                                  " frames, got " + std::to_string(frames.size()));
  }
  intrinsics.validate();
  PathResult result;
  result.frames_in = static_cast<int>(frames.size());
  const Pose6DoF origin = Pose6DoF::identity();
  std::vector<FrameFit> fits(frames.size());
  std::optional<Pose6DoF> previous;
  std::vector<double> recent;

  auto fit = [&](std::size_t i, const std::optional<Pose6DoF>& x0) {
    ObjectiveReport rep = estimate_board_pose(origin, intrinsics, geometry, frames[i], x0, options.nm);
    result.evaluations += rep.evaluations;
    return rep;
  };

  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].size() < kMinFrameDiodes) {
      result.diagnostics.count("sparse_frames");
      continue;
    }
    const std::optional<Pose6DoF> x0 = options.warm_start ? previous : std::nullopt;
    ObjectiveReport rep = fit(i, x0);
    if (x0) {
      const double level = median_of(recent);
      if (!rep.converged || rep.residual > std::max(kSuspiciousRatio * level, kSuspiciousFloor)) {
        ObjectiveReport cold = fit(i, std::nullopt);
        ++result.cold_restarts;
        if ((cold.converged && !rep.converged) ||
            (cold.converged == rep.converged && cold.residual < rep.residual)) {
          rep = std::move(cold);
        }
      }
    }
    if (!rep.converged) {
      result.diagnostics.count("unconverged_frames");
      continue;
    }
    fits[i] = {true, rep.solution, rep.residual};
    previous = rep.solution;
    recent.push_back(rep.residual);
    if (recent.size() > kResidualWindow) recent.erase(recent.begin());
  }

  // A warm-started path can ride the mirror-tilt basin for a long stretch
  // once it enters it. Cold fits at checkpoints spawn a competing branch
  // wherever they disagree; the branch wins if its summed residual over the
  // disputed stretch is lower.
  if (options.warm_start) {
    auto grow = [&](Branch& b, std::size_t from, Pose6DoF seed, long step) {
      std::size_t probed = 0;
      for (long j = static_cast<long>(from) + step; j >= 0 && j < static_cast<long>(frames.size()); j += step) {
        const auto k = static_cast<std::size_t>(j);
        if (!fits[k].ok) continue;
        const ObjectiveReport rep = fit(k, seed);
        if (!rep.converged) continue;
        if (rotation_error(rep.solution, fits[k].pose) < kRejoinRotation) return true;
        b.fits.push_back({k, {true, rep.solution, rep.residual}});
        b.branch_sum += rep.residual;
        b.current_sum += fits[k].residual;
        seed = rep.solution;
        if (++probed % kBranchProbe == 0 && b.branch_sum > kBranchGiveUp * b.current_sum) return false;
      }
      return true;
    };
    std::size_t valid = 0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (!fits[i].ok || valid++ % kCheckpointSpacing != 0) continue;
      const ObjectiveReport cold = fit(i, std::nullopt);
      if (!cold.converged || rotation_error(cold.solution, fits[i].pose) < kBranchRotation) continue;
      Branch b;
      b.fits.push_back({i, {true, cold.solution, cold.residual}});
      b.branch_sum = cold.residual;
      b.current_sum = fits[i].residual;
      if (!grow(b, i, cold.solution, -1) || !grow(b, i, cold.solution, +1)) continue;
      if (b.branch_sum < b.current_sum) {
        for (auto& [k, f] : b.fits) fits[k] = f;
        result.diagnostics.count("mirror_repairs");
      }
    }
  }

  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (fits[i].ok) {
      result.path.push_back({frames[i].t, fits[i].pose, fits[i].residual, false});
    } else {
      ++result.dropped;
    }
  }
  if (result.dropped > options.max_drop_fraction * result.frames_in) {
    throw Error(ErrorKind::path_quality, std::to_string(result.dropped) + " of " + std::to_string(result.frames_in) +
                                             " frames dropped during path estimation");
  }
  return result;
}

PathPose interpolate_path(std::span<const PathPose> path, double t) {
  constexpr double kTimeEps = 1e-12;
  if (path.empty() || t < path.front().t - kTimeEps || t > path.back().t + kTimeEps) {
    throw Error(ErrorKind::alignment, "time " + std::to_string(t) + " s outside the path span");
  }
  const auto it = std::lower_bound(path.begin(), path.end(), t,
                                   [](const PathPose& p, double value) { return p.t < value; });
  if (it != path.end() && std::abs(it->t - t) <= kTimeEps) return *it;
  if (it == path.begin()) return path.front();
  if (it == path.end()) return path.back();
  const PathPose& a = *(it - 1);
  const PathPose& b = *it;
  const double w = (t - a.t) / (b.t - a.t);
  const Eigen::Quaterniond qa(a.pose.rotation().matrix());
  const Eigen::Quaterniond qb(b.pose.rotation().matrix());
  const Vec3 position = (1.0 - w) * a.pose.position() + w * b.pose.position();
  PathPose out;
  out.t = t;
  out.pose = Pose6DoF::from(RotationMatrix::trusted(qa.slerp(w, qb).toRotationMatrix()), position);
  out.residual = (1.0 - w) * a.residual + w * b.residual;
  out.interpolated = true;
  return out;
}

AlignedPaths align_paths_in_time(std::span<const PathPose> master, std::span<const PathPose> slave) {
  if (master.empty() || slave.empty()) throw Error(ErrorKind::alignment, "cannot align an empty path");
  const double lo = std::max(master.front().t, slave.front().t);
  const double hi = std::min(master.back().t, slave.back().t);
  if (lo > hi) throw Error(ErrorKind::alignment, "master and slave paths do not overlap in time");

  std::vector<double> times;
  for (const auto& p : master) {
    if (p.t >= lo && p.t <= hi) times.push_back(p.t);
  }
  for (const auto& p : slave) {
    if (p.t >= lo && p.t <= hi) times.push_back(p.t);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end(), [](double a, double b) { return std::abs(a - b) <= 1e-12; }),
              times.end());

  AlignedPaths out;
  out.master.reserve(times.size());
  out.slave.reserve(times.size());
  for (double t : times) {
    out.master.push_back(interpolate_path(master, t));
    out.slave.push_back(interpolate_path(slave, t));
  }
  return out;
}

std::vector<double> residual_weights(std::span<const double> residuals) {
  std::vector<double> e(residuals.begin(), residuals.end());
  double floor = 0.01 * median_of(e);
  if (!(floor > 0.0)) {
    const double top = e.empty() ? 0.0 : *std::max_element(e.begin(), e.end());
    floor = 0.01 * top;
  }
  std::vector<double> w(e.size(), 1.0);
  if (!(floor > 0.0)) return w;
  for (std::size_t i = 0; i < e.size(); ++i) w[i] = 1.0 / (std::max(e[i], 0.0) + floor);
  return w;
}

namespace {

std::vector<double> pair_weights(const AlignedPaths& aligned) {
  std::vector<double> res(aligned.master.size());
  for (std::size_t i = 0; i < res.size(); ++i) res[i] = aligned.master[i].residual + aligned.slave[i].residual;
  return residual_weights(res);
}

}  // namespace

InitialSlavePose initial_slave_pose(const AlignedPaths& aligned) {
  if (aligned.master.size() != aligned.slave.size()) {
    throw Error(ErrorKind::validation, "aligned paths differ in length");
  }
  if (aligned.master.size() < 3) throw Error(ErrorKind::insufficient_data, "need at least 3 aligned path points");
  std::vector<Vec3> source, target;
  for (std::size_t i = 0; i < aligned.master.size(); ++i) {
    source.push_back(aligned.slave[i].pose.position());
    target.push_back(aligned.master[i].pose.position());
  }
  const std::vector<double> w = pair_weights(aligned);
  InitialSlavePose out;
  out.fit = weighted_kabsch(source, target, w);
  out.pose = compose(out.fit.as_pose(), Pose6DoF::identity());
  return out;
}

double path_spread(std::span<const PathPose> path) {
  if (path.size() < 2) return 0.0;
  Vec3 mean = Vec3::Zero();
  for (const auto& p : path) mean += p.pose.position();
  mean /= static_cast<double>(path.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : path) {
    const Vec3 d = p.pose.position() - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(path.size());
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  return std::sqrt(std::max(eig.eigenvalues()(1), 0.0));
}

Pose6DoF slave_pose_from_orientations(const AlignedPaths& aligned) {
  if (aligned.master.size() != aligned.slave.size() || aligned.master.empty()) {
    throw Error(ErrorKind::insufficient_data, "need matched, non-empty aligned paths");
  }
  const std::vector<double> w = pair_weights(aligned);
  Mat3 sum = Mat3::Zero();
  for (std::size_t i = 0; i < w.size(); ++i) {
    sum += w[i] * aligned.master[i].pose.rotation().matrix() * aligned.slave[i].pose.rotation().matrix().transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(sum, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
  Vec3 t = Vec3::Zero();
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    t += w[i] * (aligned.master[i].pose.position() - r * aligned.slave[i].pose.position());
    total += w[i];
  }
  return Pose6DoF::from(RotationMatrix::trusted(r), t / total);
}

CalibrationResult final_slave_pose(std::span<const PathPose> master_path, std::span<const AngleFrame> slave_frames,
                                   const Pose6DoF& l0, const StationIntrinsics& slave_intrinsics,
                                   const BoardGeometry& geometry, const NmOptions& opts) {
  if (master_path.empty()) throw Error(ErrorKind::insufficient_data, "empty master path");
  std::vector<Pose6DoF> boards;
  std::vector<AngleFrame> frames;
  for (const auto& f : slave_frames) {
    if (f.t < master_path.front().t || f.t > master_path.back().t || f.size() < kMinFrameDiodes) continue;
    boards.push_back(interpolate_path(master_path, f.t).pose);
    frames.push_back(f);
  }
  if (frames.empty()) throw Error(ErrorKind::alignment, "no slave frame falls inside the master path span");

  CalibrationResult result;
  result.initial_slave_pose = l0;
  result.diagnostics.final_frames = static_cast<int>(frames.size());
  result.diagnostics.epsilon_initial = station_loss(boards, frames, l0, slave_intrinsics, geometry);
  ObjectiveReport rep = estimate_station_pose(boards, frames, l0, slave_intrinsics, geometry, opts);
  result.slave_pose = rep.solution;
  result.epsilon_final = rep.residual;
  result.converged = rep.converged;
  result.diagnostics.delta_position_m = position_error(rep.solution, l0);
  result.diagnostics.delta_rotation_rad = rotation_error(rep.solution, l0);
  if (!rep.converged) result.diagnostics.messages.note("final slave pose fit did not converge");
  result.diagnostics.final_report = std::move(rep);
  return result;
}

namespace {

// One axis of one diode: value and sample instant in frame k.
struct AxisSample {
  double v = 0.0;
  double t = 0.0;
};

std::optional<AxisSample> axis_sample(const AngleFrame& f, int id, Axis axis) {
  const auto it = f.angles.find(id);
  if (it == f.angles.end()) return std::nullopt;
  const DiodeAngles& d = it->second;
  const double t = axis == Axis::azimuth ? d.theta_t : d.phi_t;
  if (!std::isfinite(t)) return std::nullopt;
  return AxisSample{axis == Axis::azimuth ? d.theta : d.phi, t};
}

}  // namespace

std::vector<AngleFrame> deskew_frames(std::span<const AngleFrame> frames) {
  std::vector<AngleFrame> out(frames.begin(), frames.end());
  const long n = static_cast<long>(frames.size());
  constexpr long kReach = 3;  // frames searched on each side for a slope
  for (long k = 0; k < n; ++k) {
    for (Axis axis : {Axis::azimuth, Axis::elevation}) {
      double target = 0.0;
      int count = 0;
      for (const auto& [id, d] : frames[static_cast<std::size_t>(k)].angles) {
        if (auto s = axis_sample(frames[static_cast<std::size_t>(k)], id, axis)) {
          target += s->t;
          ++count;
        }
      }
      if (count == 0) continue;
      target /= count;
      for (auto& [id, d] : out[static_cast<std::size_t>(k)].angles) {
        const auto here = axis_sample(frames[static_cast<std::size_t>(k)], id, axis);
        if (!here) continue;
        std::optional<AxisSample> before, after;
        for (long j = k - 1; j >= std::max(0L, k - kReach) && !before; --j) {
          auto s = axis_sample(frames[static_cast<std::size_t>(j)], id, axis);
          if (s && s->t < here->t) before = s;
        }
        for (long j = k + 1; j <= std::min(n - 1, k + kReach) && !after; ++j) {
          auto s = axis_sample(frames[static_cast<std::size_t>(j)], id, axis);
          if (s && s->t > here->t) after = s;
        }
        const AxisSample a = before ? *before : *here;
        const AxisSample b = after ? *after : *here;
        if (!(b.t > a.t)) continue;
        const double shifted = here->v + (b.v - a.v) / (b.t - a.t) * (target - here->t);
        if (axis == Axis::azimuth) {
          d.theta = shifted;
          d.theta_t = target;
        } else {
          d.phi = shifted;
          d.phi_t = target;
        }
      }
    }
  }
  return out;
}

CalibrationResult calibrate_frames(std::span<const AngleFrame> master_input, std::span<const AngleFrame> slave_input,
                                   const CalibrationConfig& config) {
  std::vector<AngleFrame> master_frames(master_input.begin(), master_input.end());
  std::vector<AngleFrame> slave_frames(slave_input.begin(), slave_input.end());
  if (config.deskew) {
    master_frames = deskew_frames(master_input);
    slave_frames = deskew_frames(slave_input);
  }
  const PathResult master = run_stage("estimate_path(master)", [&] {
    return estimate_path(master_frames, config.master_intrinsics, config.geometry, config.path);
  });
  const PathResult slave = run_stage("estimate_path(slave)", [&] {
    return estimate_path(slave_frames, config.slave_intrinsics, config.geometry, config.path);
  });
  const AlignedPaths aligned = run_stage("align_paths_in_time", [&] { return align_paths_in_time(master.path, slave.path); });

  Diagnostics notes;
  Pose6DoF l0;
  std::string method = "kabsch";
  RigidFit fit;
  run_stage("initial_slave_pose", [&] {
    std::string problem;
    const double spread = path_spread(aligned.master);
    try {
      const InitialSlavePose init = initial_slave_pose(aligned);
      fit = init.fit;
      l0 = init.pose;
      if (init.fit.conditioning < config.min_kabsch_conditioning) {
        problem = "Kabsch conditioning " + std::to_string(init.fit.conditioning);
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::degenerate) throw;
      problem = e.what();
    }
    if (problem.empty() && spread < config.min_path_spread * config.geometry.diameter()) {
      problem = "path spread " + std::to_string(spread) + " m off its main axis";
    }
    if (problem.empty()) return 0;
    if (!config.allow_degenerate_path) {
      throw Error(ErrorKind::degenerate, "calibration path is static or nearly collinear (" + problem +
                                             "); move the board along a curved path");
    }
    method = "pose_composition";
    notes.note("degenerate path (" + problem + "); initial slave pose from board pose composition");
    l0 = slave_pose_from_orientations(aligned);
    return 0;
  });

  CalibrationResult result = run_stage("final_slave_pose", [&] {
    return final_slave_pose(master.path, slave_frames, l0, config.slave_intrinsics, config.geometry, config.final_nm);
  });
  auto& d = result.diagnostics;
  d.master_frames = master.frames_in;
  d.slave_frames = slave.frames_in;
  d.master_dropped = master.dropped;
  d.slave_dropped = slave.dropped;
  d.aligned_points = static_cast<int>(aligned.master.size());
  d.kabsch_weighted_rmsd = fit.weighted_rmsd;
  d.kabsch_conditioning = fit.conditioning;
  d.initial_method = method;
  d.messages.merge(notes);
  d.messages.merge(master.diagnostics, "master path: ");
  d.messages.merge(slave.diagnostics, "slave path: ");
  d.messages.count("master_cold_restarts", master.cold_restarts);
  d.messages.count("slave_cold_restarts", slave.cold_restarts);
  result.master_path = master.path;
  result.slave_path = slave.path;
  return result;
}

std::vector<SweepRecord> station_records(std::span<const SweepRecord> records, Station designated) {
  bool has_master = false, has_slave = false;
  for (const auto& r : records) {
    if (r.angles.empty()) continue;
    (r.station == Station::master ? has_master : has_slave) = true;
  }
  Station pick = designated;
  if (has_master != has_slave) pick = has_master ? Station::master : Station::slave;
  return records_for(records, pick);
}

CalibrationResult calibrate(const PulseStream& master_pulses, const PulseStream& slave_pulses,
                            const CalibrationConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  config.path.nm.validate();
  config.final_nm.validate();

  const DecodeResult master_decoded = run_stage("decode(master)", [&] { return decode_stream(master_pulses, config.decode); });
  const DecodeResult slave_decoded = run_stage("decode(slave)", [&] { return decode_stream(slave_pulses, config.decode); });
  const std::vector<SweepRecord> master_records = station_records(master_decoded.records, Station::master);
  const std::vector<SweepRecord> slave_records = station_records(slave_decoded.records, Station::slave);
  const ReconstructResult master_frames =
      run_stage("reconstruct(master)", [&] { return reconstruct(master_records, config.strategy); });
  const ReconstructResult slave_frames =
      run_stage("reconstruct(slave)", [&] { return reconstruct(slave_records, config.strategy); });

  CalibrationResult result = calibrate_frames(master_frames.frames, slave_frames.frames, config);
  auto& d = result.diagnostics;
  d.master_records = static_cast<int>(master_records.size());
  d.slave_records = static_cast<int>(slave_records.size());
  d.messages.merge(master_decoded.diagnostics, "master decode: ");
  d.messages.merge(slave_decoded.diagnostics, "slave decode: ");
  d.messages.merge(master_frames.diagnostics, "master reconstruct: ");
  d.messages.merge(slave_frames.diagnostics, "slave reconstruct: ");
  d.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

double position_error(const Pose6DoF& a, const Pose6DoF& b) { return (a.position() - b.position()).norm(); }

double rotation_error(const Pose6DoF& a, const Pose6DoF& b) {
  const Mat3 r = a.rotation().matrix().transpose() * b.rotation().matrix();
  return Eigen::AngleAxisd(r).angle();
}

PoseErrorStats evaluate(std::span<const Pose6DoF> estimates, const Pose6DoF& truth) {
  if (estimates.empty()) throw Error(ErrorKind::validation, "evaluate needs at least one estimate");
  PoseErrorStats stats;
  stats.count = static_cast<int>(estimates.size());
  std::array<std::vector<double>, 6> diffs;
  for (const auto& e : estimates) {
    diffs[0].push_back((e.x - truth.x) * 1000.0);
    diffs[1].push_back((e.y - truth.y) * 1000.0);
    diffs[2].push_back((e.z - truth.z) * 1000.0);
    diffs[3].push_back(rad2deg(wrap_angle(e.alpha - truth.alpha)));
    diffs[4].push_back(rad2deg(wrap_angle(e.beta - truth.beta)));
    diffs[5].push_back(rad2deg(wrap_angle(e.gamma - truth.gamma)));
  }
  const double n = static_cast<double>(estimates.size());
  for (int k = 0; k < 6; ++k) {
    double abs_sum = 0.0, sum = 0.0;
    for (double v : diffs[k]) {
      abs_sum += std::abs(v);
      sum += v;
    }
    stats.mae[k] = abs_sum / n;
    if (estimates.size() < 2) {
      stats.sd[k] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : diffs[k]) ss += (v - mean) * (v - mean);
    stats.sd[k] = std::sqrt(ss / (n - 1.0));
  }
  return stats;
}

}  // namespace lhcalib
