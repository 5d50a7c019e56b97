#include "lhcalib/errors.hpp"

namespace lhcalib {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::io: return "io";
    case ErrorKind::range: return "range";
    case ErrorKind::empty_capture: return "empty_capture";
    case ErrorKind::insufficient_data: return "insufficient_data";
    case ErrorKind::underdetermined: return "underdetermined";
    case ErrorKind::behind_station: return "behind_station";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::path_quality: return "path_quality";
    case ErrorKind::alignment: return "alignment";
    case ErrorKind::coverage: return "coverage";
    case ErrorKind::invalid_start: return "invalid_start";
    case ErrorKind::stage: return "stage";
  }
  return "unknown";
}

void Diagnostics::merge(const Diagnostics& other, const std::string& prefix) {
  for (const auto& m : other.messages) messages.push_back(prefix + m);
  for (const auto& [k, v] : other.counters) counters[prefix + k] += v;
}

}  // namespace lhcalib
