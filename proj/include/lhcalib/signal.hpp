#pragma once

#include "lhcalib/errors.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace lhcalib {

/// Capture clock of the calibration board.
inline constexpr double kTickHz = 2'000'000.0;
/// One sweep slot: half a rotor revolution at 60 Hz.
inline constexpr double kSlotSeconds = 1.0 / 120.0;
/// Rotor angular rate, rad/s (one revolution per 16.667 ms).
inline constexpr double kRotorRate = 2.0 * 3.14159265358979323846 * 60.0;
/// Half field of view of a sweep, radians (120 degree span).
inline constexpr double kHalfFov = 60.0 * 3.14159265358979323846 / 180.0;

enum class Station { master, slave };
enum class Axis { azimuth, elevation };
enum class PulseClass { sync_master, sync_slave, sweep, unknown };

const char* to_string(Station s);
const char* to_string(Axis a);
const char* to_string(PulseClass c);

struct PulseEvent {
  int diode_id = 0;
  std::int64_t t_start = 0;  // ticks
  std::int64_t t_end = 0;    // ticks, > t_start

  friend bool operator==(const PulseEvent&, const PulseEvent&) = default;
};

/// Raw capture of one station. Ticks are 0.5 us at the nominal 2 MHz; a
/// finer clock is used by the simulator when quantization is switched off.
struct PulseStream {
  double tick_hz = kTickHz;
  std::vector<PulseEvent> events;
};

/// Pulse-duration classes, microseconds, inclusive bounds.
struct PulseWidthTable {
  double sync_master_min_us = 60.0, sync_master_max_us = 80.0;
  double sync_slave_min_us = 90.0, sync_slave_max_us = 110.0;
  double sweep_min_us = 4.0, sweep_max_us = 40.0;
};

/// Converts sync-to-sweep time to a sweep angle: dt * omega - pi/2.
/// Throws Error(range) outside (0, slot length).
double delta_t_to_angle(double dt_seconds);
double angle_to_delta_t(double angle_rad);

PulseClass classify_pulse(const PulseEvent& event, double tick_hz = kTickHz,
                          const PulseWidthTable& table = {});

struct SweepRecord {
  std::int64_t slot_time = 0;  // ticks: start of the master sync of this cycle
  double tick_hz = kTickHz;
  Station station = Station::master;
  Axis axis = Axis::azimuth;
  std::map<int, double> angles;  // diode id -> radians
  std::map<int, double> raw_dt;  // diode id -> seconds

  double slot_seconds() const { return static_cast<double>(slot_time) / tick_hz; }
  /// Sweep crossing instant of a diode in seconds.
  double sample_time(int diode_id) const { return slot_seconds() + raw_dt.at(diode_id); }
};

struct DecodeConfig {
  int diode_count = 32;
  /// Tolerance on the spacing of consecutive master syncs, in 2 MHz ticks.
  int lock_tolerance_ticks = 4;
  /// Accepted angle band beyond the nominal +-60 degree field of view.
  double guard_band_rad = 1.0 * 3.14159265358979323846 / 180.0;
  PulseWidthTable widths{};
};

struct DecodeResult {
  std::vector<SweepRecord> records;
  Diagnostics diagnostics;
};

/// Decodes a pulse stream into one record per cycle that carries a master
/// sync. Station and axis follow the master-az, master-el, slave-az,
/// slave-el slot order, with the first locked cycle taken as master-az.
DecodeResult decode_stream(std::span<const PulseEvent> events, double tick_hz = kTickHz,
                           const DecodeConfig& config = {});
DecodeResult decode_stream(const PulseStream& stream, const DecodeConfig& config = {});

/// Position of a slot in the 4-slot schedule.
Station slot_station(std::int64_t slot_index);
Axis slot_axis(std::int64_t slot_index);

/// Records of one station, order preserved.
std::vector<SweepRecord> records_for(std::span<const SweepRecord> records, Station station);

}  // namespace lhcalib
