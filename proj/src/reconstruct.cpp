#include "lhcalib/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lhcalib {

const char* to_string(ReconstructStrategy s) {
  switch (s) {
    case ReconstructStrategy::full: return "full";
    case ReconstructStrategy::dominant: return "dominant";
    case ReconstructStrategy::merge: return "merge";
  }
  return "full";
}

ReconstructStrategy parse_strategy(const std::string& name) {
  if (name == "full") return ReconstructStrategy::full;
  if (name == "dominant") return ReconstructStrategy::dominant;
  if (name == "merge") return ReconstructStrategy::merge;
  throw Error(ErrorKind::validation, "unknown reconstruction strategy '" + name + "' (full|dominant|merge)");
}

namespace {

struct Prepared {
  Station station = Station::master;
  std::vector<const SweepRecord*> records;  // non-empty, sorted by slot time
};

Prepared prepare(std::span<const SweepRecord> records, Diagnostics& diag) {
  Prepared p;
  if (records.empty()) throw Error(ErrorKind::insufficient_data, "no sweep records");
  p.station = records.front().station;
  for (const auto& r : records) {
    if (r.station != p.station) {
      throw Error(ErrorKind::validation, "records from more than one station passed to reconstruction");
    }
    if (r.angles.empty()) {
      diag.count("empty_records");
      continue;
    }
    p.records.push_back(&r);
  }
  std::stable_sort(p.records.begin(), p.records.end(),
                   [](const SweepRecord* a, const SweepRecord* b) { return a->slot_time < b->slot_time; });
  std::size_t az = 0, el = 0;
  for (const auto* r : p.records) (r->axis == Axis::azimuth ? az : el)++;
  if (az < 2 || el < 2) {
    throw Error(ErrorKind::insufficient_data,
                "need at least 2 azimuth and 2 elevation records, got " + std::to_string(az) + " and " +
                    std::to_string(el));
  }
  return p;
}

void set_measured(DiodeAngles& d, Axis axis, double value) {
  if (axis == Axis::azimuth) {
    d.theta = value;
    d.theta_measured = true;
  } else {
    d.phi = value;
    d.phi_measured = true;
  }
}

void set_interpolated(DiodeAngles& d, Axis axis, double value) {
  if (axis == Axis::azimuth) {
    d.theta = value;
    d.theta_measured = false;
  } else {
    d.phi = value;
    d.phi_measured = false;
  }
}

Axis other(Axis a) { return a == Axis::azimuth ? Axis::elevation : Axis::azimuth; }

struct AnchoredFrame {
  AngleFrame frame;
  Axis anchor;
};

std::vector<AnchoredFrame> interpolate_all(const Prepared& p, Diagnostics& diag) {
  const auto& recs = p.records;
  const std::size_t n = recs.size();
  // prev_other[i] / next_other[i]: nearest record of the opposite axis.
  std::vector<long> prev_other(n, -1), next_other(n, -1);
  long last_az = -1, last_el = -1;
  for (std::size_t i = 0; i < n; ++i) {
    prev_other[i] = recs[i]->axis == Axis::azimuth ? last_el : last_az;
    (recs[i]->axis == Axis::azimuth ? last_az : last_el) = static_cast<long>(i);
  }
  last_az = last_el = -1;
  for (std::size_t k = n; k-- > 0;) {
    next_other[k] = recs[k]->axis == Axis::azimuth ? last_el : last_az;
    (recs[k]->axis == Axis::azimuth ? last_az : last_el) = static_cast<long>(k);
  }

  std::vector<AnchoredFrame> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (prev_other[i] < 0 || next_other[i] < 0) {
      diag.count("unbracketed_records");
      continue;
    }
    const SweepRecord& anchor = *recs[i];
    const SweepRecord& before = *recs[static_cast<std::size_t>(prev_other[i])];
    const SweepRecord& after = *recs[static_cast<std::size_t>(next_other[i])];
    AnchoredFrame af;
    af.anchor = anchor.axis;
    af.frame.station = p.station;
    double t_sum = 0.0;
    for (const auto& [id, value] : anchor.angles) {
      const auto b = before.angles.find(id);
      const auto a = after.angles.find(id);
      if (b == before.angles.end() || a == after.angles.end()) {
        diag.count("unbracketed_diodes");
        continue;
      }
      const double t = anchor.sample_time(id);
      const double tb = before.sample_time(id);
      const double ta = after.sample_time(id);
      const double w = (t - tb) / (ta - tb);
      DiodeAngles d;
      set_measured(d, anchor.axis, value);
      set_interpolated(d, other(anchor.axis), b->second + (a->second - b->second) * w);
      d.theta_t = d.phi_t = t;
      af.frame.angles.emplace(id, d);
      t_sum += t;
    }
    if (af.frame.size() < kMinFrameDiodes) {
      diag.count("sparse_frames");
      continue;
    }
    af.frame.t = t_sum / af.frame.size();
    out.push_back(std::move(af));
  }
  return out;
}

}  // namespace

double axis_variation(std::span<const SweepRecord> records, Axis axis) {
  std::map<int, std::vector<double>> series;
  for (const auto& r : records) {
    if (r.axis != axis) continue;
    for (const auto& [id, v] : r.angles) series[id].push_back(v);
  }
  double total = 0.0;
  for (const auto& [id, s] : series) {
    if (s.size() < 2) continue;
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    double ss = 0.0;
    for (double v : s) ss += (v - mean) * (v - mean);
    total += ss / static_cast<double>(s.size() - 1);
  }
  return total;
}

ReconstructResult reconstruct_full(std::span<const SweepRecord> records) {
  ReconstructResult result;
  const Prepared p = prepare(records, result.diagnostics);
  for (auto& af : interpolate_all(p, result.diagnostics)) result.frames.push_back(std::move(af.frame));
  return result;
}

ReconstructResult reconstruct_dominant_axis(std::span<const SweepRecord> records) {
  ReconstructResult result;
  const Prepared p = prepare(records, result.diagnostics);
  const double var_az = axis_variation(records, Axis::azimuth);
  const double var_el = axis_variation(records, Axis::elevation);
  result.anchor_axis = var_el > var_az ? Axis::elevation : Axis::azimuth;
  result.diagnostics.note(std::string("dominant axis: ") + to_string(result.anchor_axis));
  for (auto& af : interpolate_all(p, result.diagnostics)) {
    if (af.anchor == result.anchor_axis) result.frames.push_back(std::move(af.frame));
  }
  return result;
}

ReconstructResult reconstruct_pair_merge(std::span<const SweepRecord> records) {
  ReconstructResult result;
  const Prepared p = prepare(records, result.diagnostics);
  const auto& recs = p.records;
  const double max_gap_s = 1.5 * kSlotSeconds;
  for (std::size_t i = 0; i + 1 < recs.size();) {
    const SweepRecord& az = *recs[i];
    const SweepRecord& el = *recs[i + 1];
    if (az.axis != Axis::azimuth || el.axis != Axis::elevation ||
        el.slot_seconds() - az.slot_seconds() > max_gap_s) {
      result.diagnostics.count("unpaired_records");
      ++i;
      continue;
    }
    AngleFrame f;
    f.station = p.station;
    double t_az = 0.0, t_el = 0.0;
    for (const auto& [id, theta] : az.angles) {
      const auto e = el.angles.find(id);
      if (e == el.angles.end()) continue;
      DiodeAngles d;
      set_measured(d, Axis::azimuth, theta);
      set_measured(d, Axis::elevation, e->second);
      d.theta_t = az.sample_time(id);
      d.phi_t = el.sample_time(id);
      f.angles.emplace(id, d);
      t_az += az.sample_time(id);
      t_el += el.sample_time(id);
    }
    i += 2;
    if (f.size() < kMinFrameDiodes) {
      result.diagnostics.count("sparse_frames");
      continue;
    }
    f.t = 0.5 * (t_az + t_el) / f.size();
    result.frames.push_back(std::move(f));
  }
  return result;
}

ReconstructResult reconstruct(std::span<const SweepRecord> records, ReconstructStrategy strategy) {
  switch (strategy) {
    case ReconstructStrategy::full: return reconstruct_full(records);
    case ReconstructStrategy::dominant: return reconstruct_dominant_axis(records);
    case ReconstructStrategy::merge: return reconstruct_pair_merge(records);
  }
  return reconstruct_full(records);
}

}  // namespace lhcalib
