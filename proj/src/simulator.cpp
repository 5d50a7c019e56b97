#include "lhcalib/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace lhcalib {

const char* to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::static_pose: return "static";
    case TrajectoryKind::line: return "line";
    case TrajectoryKind::half_circle: return "half_circle";
    case TrajectoryKind::lissajous: return "lissajous";
  }
  return "static";
}

TrajectoryKind parse_trajectory_kind(const std::string& name) {
  if (name == "static") return TrajectoryKind::static_pose;
  if (name == "line") return TrajectoryKind::line;
  if (name == "half_circle") return TrajectoryKind::half_circle;
  if (name == "lissajous") return TrajectoryKind::lissajous;
  throw Error(ErrorKind::validation, "unknown trajectory kind '" + name + "' (static|line|half_circle|lissajous)");
}

void TrajectorySpec::validate() const {
  if (!std::isfinite(speed) || speed < 0.0) throw Error(ErrorKind::validation, "trajectory speed must be >= 0");
  if (kind != TrajectoryKind::static_pose && !(size > 0.0)) {
    throw Error(ErrorKind::validation, "trajectory size must be > 0");
  }
  if (!std::isfinite(wobble) || wobble < 0.0 || !std::isfinite(wobble_hz) || wobble_hz < 0.0) {
    throw Error(ErrorKind::validation, "trajectory wobble amplitude and rate must be >= 0");
  }
  if (!std::isfinite(phase)) throw Error(ErrorKind::validation, "trajectory phase must be finite");
}

namespace {

double ping_pong(double distance, double length) {
  if (!(length > 0.0)) return 0.0;
  double m = std::fmod(distance, 2.0 * length);
  if (m < 0.0) m += 2.0 * length;
  return m <= length ? m : 2.0 * length - m;
}

// Lissajous amplitudes relative to `size` and frequency ratios for the
// lateral, depth and vertical axes (anchor x, z, y).
constexpr double kLissA[3] = {1.0, 0.6, 0.3};
constexpr double kLissF[3] = {3.0, 2.0, 1.0};

Mat3 exp_rotation(const Vec3& r) {
  const double angle = r.norm();
  if (angle < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, r / angle).toRotationMatrix();
}

bool in_fov(const Vec3& q) {
  return q.x() > 0.0 && std::abs(std::atan2(q.y(), q.x())) <= kHalfFov &&
         std::abs(std::atan2(q.z(), q.x())) <= kHalfFov;
}

}  // namespace

PoseSampler::PoseSampler(TrajectorySpec spec)
    : spec_(std::move(spec)), anchor_r_(spec_.anchor.rotation().matrix()), anchor_t_(spec_.anchor.position()) {
  spec_.validate();
}

Vec3 PoseSampler::local_position(double t) const {
  const double tau = t + spec_.phase;
  const double v = spec_.speed;
  const double s = spec_.size;
  switch (spec_.kind) {
    case TrajectoryKind::static_pose:
      return Vec3::Zero();
    case TrajectoryKind::line:
      return {ping_pong(v * tau, s) - 0.5 * s, 0.0, 0.0};
    case TrajectoryKind::half_circle: {
      const double u = ping_pong(v * tau, kPi * s) / s;
      return {s * std::cos(u), 0.0, s * std::sin(u) - 0.5 * s};
    }
    case TrajectoryKind::lissajous: {
      double norm = 0.0;
      for (int i = 0; i < 3; ++i) norm += (kLissA[i] * kLissF[i]) * (kLissA[i] * kLissF[i]);
      const double omega = v / (s * std::sqrt(norm));
      return {s * kLissA[0] * std::sin(kLissF[0] * omega * tau),
              s * kLissA[2] * std::sin(kLissF[2] * omega * tau),
              s * kLissA[1] * std::sin(kLissF[1] * omega * tau + kPi / 4.0)};
    }
  }
  return Vec3::Zero();
}

Mat3 PoseSampler::local_rotation(double t) const {
  if (spec_.kind == TrajectoryKind::static_pose || spec_.wobble == 0.0 || spec_.wobble_hz == 0.0) return Mat3::Identity();
  const double w = 2.0 * kPi * spec_.wobble_hz * (t + spec_.phase);
  const Vec3 r(spec_.wobble * std::sin(w), 0.8 * spec_.wobble * std::sin(0.73 * w + 1.0),
               0.5 * spec_.wobble * std::sin(1.31 * w + 2.0));
  return exp_rotation(r);
}

Pose6DoF PoseSampler::operator()(double t) const {
  const Mat3 r = anchor_r_ * local_rotation(t);
  return Pose6DoF::from(RotationMatrix::trusted(r), anchor_r_ * local_position(t) + anchor_t_);
}

PoseSampler generate_trajectory(const TrajectorySpec& spec) { return PoseSampler(spec); }

void NoiseSpec::validate() const {
  if (!std::isfinite(timing_jitter_sd) || timing_jitter_sd < 0.0) {
    throw Error(ErrorKind::validation, "timing jitter SD must be >= 0");
  }
  auto check = [](double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::validation, "dropout probabilities must lie in [0, 1]");
  };
  check(dropout_prob);
  for (const auto& [id, p] : diode_dropout) check(p);
}

double NoiseSpec::dropout_for(int diode_id) const {
  const auto it = diode_dropout.find(diode_id);
  return it == diode_dropout.end() ? dropout_prob : it->second;
}

void Scenario::validate() const {
  if (!(duration > 0.0) || !std::isfinite(duration)) throw Error(ErrorKind::validation, "duration must be > 0");
  trajectory.validate();
  noise.validate();
  master_intrinsics.validate();
  slave_intrinsics.validate();
}

double uncovered_fraction(const Scenario& scenario) {
  const PoseSampler sampler(scenario.trajectory);
  const Pose6DoF to_master = inverse(scenario.master_pose);
  const Pose6DoF to_slave = inverse(scenario.slave_pose);
  const long slots = std::max(1L, static_cast<long>(scenario.duration / kSlotSeconds));
  long uncovered = 0;
  for (long k = 0; k < slots; ++k) {
    const Vec3 c = sampler(k * kSlotSeconds).position();
    if (!in_fov(to_master.apply(c)) || !in_fov(to_slave.apply(c))) ++uncovered;
  }
  return static_cast<double>(uncovered) / static_cast<double>(slots);
}

Pose6DoF facing_anchor(const Vec3& center, const Vec3& master_position, const Vec3& slave_position) {
  const Vec3 z = (0.5 * (master_position + slave_position) - center).normalized();
  Vec3 x = Vec3::UnitZ().cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitY().cross(z);
  x.normalize();
  Mat3 r;
  r.col(0) = x;
  r.col(1) = z.cross(x);
  r.col(2) = z;
  return Pose6DoF::from(RotationMatrix::trusted(r), center);
}

namespace {

struct StationModel {
  Mat3 r_t;  // world -> station rotation
  Vec3 t;    // station position
  StationIntrinsics intrinsics;

  Vec3 to_station(const Vec3& w) const { return r_t * (w - t); }
};

}  // namespace

SimulationOutput simulate_capture(const Scenario& scenario, std::uint64_t seed) {
  scenario.validate();
  const double uncovered = uncovered_fraction(scenario);
  if (uncovered > 0.2) {
    std::ostringstream os;
    os << "trajectory leaves the joint field of view for " << uncovered * 100.0 << "% of the capture (limit 20%)";
    throw Error(ErrorKind::coverage, os.str());
  }

  const double hz = scenario.noise.quantization ? kTickHz : kNoiselessTickHz;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double first_slot = 1e-3 + unit(rng) / kTickHz;
  const long slots = static_cast<long>(std::floor((scenario.duration - first_slot) / kSlotSeconds));

  SimulationOutput out;
  out.master.tick_hz = hz;
  out.slave.tick_hz = hz;
  out.truth.master_pose = scenario.master_pose;
  out.truth.slave_pose = scenario.slave_pose;
  out.truth.relative_slave_pose = compose(inverse(scenario.master_pose), scenario.slave_pose);
  out.truth.seed = seed;
  out.truth.duration = scenario.duration;
  out.truth.tick_hz = hz;
  out.truth.slots = slots;
  out.truth.first_slot_time = first_slot;

  const StationModel stations[2] = {
      {scenario.master_pose.rotation().matrix().transpose(), scenario.master_pose.position(), scenario.master_intrinsics},
      {scenario.slave_pose.rotation().matrix().transpose(), scenario.slave_pose.position(), scenario.slave_intrinsics},
  };
  const PoseSampler sampler(scenario.trajectory);
  const BoardGeometry& geometry = scenario.geometry;
  const int n_diodes = geometry.size();
  const double jitter = scenario.noise.timing_jitter_sd;

  auto emit = [&](std::vector<PulseEvent>& dst, int diode, double start, double width) {
    const double t = start + (jitter > 0.0 ? jitter * gauss(rng) : 0.0);
    const auto s = static_cast<std::int64_t>(std::llround(t * hz));
    dst.push_back({diode, s, s + static_cast<std::int64_t>(std::llround(width * hz))});
  };

  auto diode_world = [&](int i, double t) {
    const Pose6DoF p = sampler(t);
    return Vec3(p.rotation() * geometry.diode(i) + p.position());
  };

  std::vector<bool> dropped(static_cast<std::size_t>(n_diodes));
  long emitted_sweeps = 0, fov_misses = 0;
  for (long k = 0; k < slots; ++k) {
    const double tk = first_slot + k * kSlotSeconds;
    const Station station = slot_station(k);
    const Axis axis = slot_axis(k);
    for (int i = 0; i < n_diodes; ++i) {
      const double p = scenario.noise.dropout_for(i);
      dropped[static_cast<std::size_t>(i)] = p > 0.0 && unit(rng) < p;
    }

    const Pose6DoF board = sampler(tk);
    const std::vector<Vec3> world = board_diodes_world(geometry, board);
    for (int i = 0; i < n_diodes; ++i) {
      if (dropped[static_cast<std::size_t>(i)]) continue;
      if (stations[0].to_station(world[static_cast<std::size_t>(i)]).x() > 0.0) {
        const double start = tk;
        emit(out.master.events, i, start, kSyncMasterWidth);
        out.slave.events.push_back(out.master.events.back());
      }
      if (stations[1].to_station(world[static_cast<std::size_t>(i)]).x() > 0.0) {
        emit(out.master.events, i, tk + kSyncSlaveDelay, kSyncSlaveWidth);
        out.slave.events.push_back(out.master.events.back());
      }
    }

    const StationModel& st = stations[station == Station::master ? 0 : 1];
    std::vector<PulseEvent>& dst = station == Station::master ? out.master.events : out.slave.events;
    const Vec3& offset = axis == Axis::azimuth ? st.intrinsics.azimuth_laser_offset : st.intrinsics.elevation_laser_offset;
    for (int i = 0; i < n_diodes; ++i) {
      if (dropped[static_cast<std::size_t>(i)]) continue;
      // The sweep meets the diode when the rotor angle equals the diode's
      // angle at that same instant.
      double t = tk;
      Vec3 q = st.to_station(world[static_cast<std::size_t>(i)]);
      bool visible = true;
      for (int iter = 0; iter < 5; ++iter) {
        const Vec3 rel = q - offset;
        if (!(rel.x() > 0.0)) {
          visible = false;
          break;
        }
        const double angle = axis == Axis::azimuth ? std::atan2(rel.y(), rel.x()) : std::atan2(rel.z(), rel.x());
        const double t_next = tk + angle_to_delta_t(angle);
        const bool done = std::abs(t_next - t) < 1e-9;
        t = t_next;
        q = st.to_station(diode_world(i, t));
        if (done) break;
      }
      if (!visible) continue;
      const Vec3 qa = q - st.intrinsics.azimuth_laser_offset;
      const Vec3 qe = q - st.intrinsics.elevation_laser_offset;
      if (!in_fov(qa) || !in_fov(qe)) {
        ++fov_misses;
        continue;
      }
      emit(dst, i, t - 0.5 * kSweepPulseWidth, kSweepPulseWidth);
      ++emitted_sweeps;
    }
  }

  auto by_time = [](const PulseEvent& a, const PulseEvent& b) {
    if (a.t_start != b.t_start) return a.t_start < b.t_start;
    return a.diode_id < b.diode_id;
  };
  std::stable_sort(out.master.events.begin(), out.master.events.end(), by_time);
  std::stable_sort(out.slave.events.begin(), out.slave.events.end(), by_time);
  out.diagnostics.count("slots", slots);
  out.diagnostics.count("sweep_pulses", emitted_sweeps);
  out.diagnostics.count("fov_misses", fov_misses);
  return out;
}

}  // namespace lhcalib
