#include "lhcalib/signal.hpp"
#include "lhcalib/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lhcalib {

const char* to_string(Station s) { return s == Station::master ? "master" : "slave"; }
const char* to_string(Axis a) { return a == Axis::azimuth ? "azimuth" : "elevation"; }

const char* to_string(PulseClass c) {
  switch (c) {
    case PulseClass::sync_master: return "sync_master";
    case PulseClass::sync_slave: return "sync_slave";
    case PulseClass::sweep: return "sweep";
    case PulseClass::unknown: return "unknown";
  }
  return "unknown";
}

double delta_t_to_angle(double dt_seconds) {
  if (!(dt_seconds > 0.0) || !(dt_seconds < kSlotSeconds)) {
    std::ostringstream os;
    os << "delta t " << dt_seconds << " s outside (0, " << kSlotSeconds << ") s";
    throw Error(ErrorKind::range, os.str());
  }
  return dt_seconds * kRotorRate - kPi / 2.0;
}

double angle_to_delta_t(double angle_rad) { return (angle_rad + kPi / 2.0) / kRotorRate; }

PulseClass classify_pulse(const PulseEvent& event, double tick_hz, const PulseWidthTable& table) {
  const double us = static_cast<double>(event.t_end - event.t_start) / tick_hz * 1e6;
  // Half-tick slack so integer tick widths on the class edges classify stably.
  const double eps = 0.5e6 / tick_hz;
  auto within = [&](double lo, double hi) { return us >= lo - eps && us <= hi + eps; };
  if (within(table.sweep_min_us, table.sweep_max_us)) return PulseClass::sweep;
  if (within(table.sync_master_min_us, table.sync_master_max_us)) return PulseClass::sync_master;
  if (within(table.sync_slave_min_us, table.sync_slave_max_us)) return PulseClass::sync_slave;
  return PulseClass::unknown;
}

Station slot_station(std::int64_t slot_index) {
  const auto phase = ((slot_index % 4) + 4) % 4;
  return phase < 2 ? Station::master : Station::slave;
}

Axis slot_axis(std::int64_t slot_index) {
  return (((slot_index % 2) + 2) % 2) == 0 ? Axis::azimuth : Axis::elevation;
}

std::vector<SweepRecord> records_for(std::span<const SweepRecord> records, Station station) {
  std::vector<SweepRecord> out;
  for (const auto& r : records) {
    if (r.station == station) out.push_back(r);
  }
  return out;
}

namespace {

struct LockedCycle {
  std::int64_t sync_start;
  std::int64_t index;
};

}  // namespace

DecodeResult decode_stream(std::span<const PulseEvent> input, double tick_hz, const DecodeConfig& config) {
  if (input.empty()) throw Error(ErrorKind::empty_capture, "pulse stream is empty");
  if (!(tick_hz > 0.0)) throw Error(ErrorKind::validation, "tick rate must be positive");

  DecodeResult result;
  Diagnostics& diag = result.diagnostics;

  std::vector<PulseEvent> events(input.begin(), input.end());
  std::stable_sort(events.begin(), events.end(), [](const PulseEvent& a, const PulseEvent& b) {
    if (a.t_start != b.t_start) return a.t_start < b.t_start;
    return a.diode_id < b.diode_id;
  });

  std::vector<std::int64_t> master_syncs;
  std::vector<const PulseEvent*> sweeps;
  const double cluster_window = 200e-6 * tick_hz;
  std::int64_t cluster_first = 0;
  bool have_cluster = false;

  for (const auto& e : events) {
    if (e.diode_id < 0 || e.diode_id >= config.diode_count || e.t_end <= e.t_start) {
      diag.count("invalid_events");
      continue;
    }
    switch (classify_pulse(e, tick_hz, config.widths)) {
      case PulseClass::sync_master:
        // Every diode facing the station sees the same flash; one sync per cluster.
        if (!have_cluster || static_cast<double>(e.t_start - cluster_first) > cluster_window) {
          master_syncs.push_back(e.t_start);
          cluster_first = e.t_start;
          have_cluster = true;
        }
        break;
      case PulseClass::sync_slave:
        diag.count("slave_sync_pulses");
        break;
      case PulseClass::sweep:
        sweeps.push_back(&e);
        break;
      case PulseClass::unknown:
        diag.count("unknown_pulses");
        break;
    }
  }
  if (master_syncs.empty()) throw Error(ErrorKind::empty_capture, "no master sync pulses found");

  const double slot_ticks = kSlotSeconds * tick_hz;
  const double tolerance = config.lock_tolerance_ticks * tick_hz / kTickHz;

  std::vector<LockedCycle> cycles;
  bool locked = false;
  std::int64_t index = 0;
  for (std::size_t i = 0; i + 1 <= master_syncs.size(); ++i) {
    const bool has_next = i + 1 < master_syncs.size();
    const double gap = has_next ? static_cast<double>(master_syncs[i + 1] - master_syncs[i]) : 0.0;
    if (!locked) {
      if (has_next && std::abs(gap - slot_ticks) <= tolerance) {
        locked = true;
        index = 0;
        if (!cycles.empty()) diag.count("resynchronizations");
      } else {
        diag.count("unlocked_syncs");
        continue;
      }
    }
    cycles.push_back({master_syncs[i], index});
    if (!has_next) break;
    const double n = std::round(gap / slot_ticks);
    if (n >= 1.0 && std::abs(gap - n * slot_ticks) <= tolerance * n) {
      if (n > 1.0) diag.count("missed_syncs", static_cast<long>(n) - 1);
      index += static_cast<std::int64_t>(n);
    } else {
      locked = false;
      diag.count("discontinuities");
    }
  }
  if (cycles.empty()) throw Error(ErrorKind::empty_capture, "no schedule lock: master syncs never repeat at the slot period");
  diag.note("axis phase assumed: first locked cycle is master-azimuth");

  result.records.reserve(cycles.size());
  for (const auto& c : cycles) {
    SweepRecord r;
    r.slot_time = c.sync_start;
    r.tick_hz = tick_hz;
    r.station = slot_station(c.index);
    r.axis = slot_axis(c.index);
    result.records.push_back(std::move(r));
  }

  const double max_angle = kHalfFov + config.guard_band_rad;
  std::size_t cycle = 0;
  for (const PulseEvent* e : sweeps) {
    const std::int64_t mid = (e->t_start + e->t_end + 1) / 2;
    while (cycle + 1 < cycles.size() && cycles[cycle + 1].sync_start <= mid) ++cycle;
    if (mid < cycles[cycle].sync_start) {
      diag.count("sweeps_outside_lock");
      continue;
    }
    const double dt = static_cast<double>(mid - cycles[cycle].sync_start) / tick_hz;
    if (!(dt > 0.0) || !(dt < kSlotSeconds)) {
      diag.count("sweeps_outside_lock");
      continue;
    }
    const double angle = delta_t_to_angle(dt);
    if (std::abs(angle) > max_angle) {
      diag.count("out_of_band_sweeps");
      continue;
    }
    SweepRecord& rec = result.records[cycle];
    if (rec.angles.contains(e->diode_id)) {
      diag.count("duplicate_sweeps");
      continue;
    }
    rec.angles[e->diode_id] = angle;
    rec.raw_dt[e->diode_id] = dt;
  }
  return result;
}

DecodeResult decode_stream(const PulseStream& stream, const DecodeConfig& config) {
  return decode_stream(stream.events, stream.tick_hz, config);
}

}  // namespace lhcalib
