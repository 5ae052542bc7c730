#include "fqsim/kpi_reference.hpp"

#include <algorithm>
#include <cmath>

#include "fqsim/errors.hpp"

namespace fqsim::kpi_reference {

double std_dev(const FrequencyTrace& trace) {
  const auto& f = trace.f_hz;
  if (f.size() < 2)
    throw ValidationError("standard deviation needs at least 2 samples");
  double mean = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(f.size());
  double var = 0.0;
  for (double v : f) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(f.size()));
}

DwellSplit minutes_outside(const FrequencyTrace& trace, double band_hz) {
  // Per-sample counting; each sample contributes one dt of dwell.
  std::size_t above = 0, below = 0, inside = 0;
  for (double f : trace.f_hz) {
    if (f > 50.0 + band_hz) ++above;
    else if (f < 50.0 - band_hz) ++below;
    else ++inside;
  }
  DwellSplit out;
  out.above_min = static_cast<double>(above) * trace.dt / 60.0;
  out.below_min = static_cast<double>(below) * trace.dt / 60.0;
  out.inside_min = static_cast<double>(inside) * trace.dt / 60.0;
  return out;
}

double percent_within(const FrequencyTrace& trace, double band_hz) {
  std::size_t inside = 0;
  for (double f : trace.f_hz)
    if (std::abs(f - 50.0) <= band_hz) ++inside;
  return static_cast<double>(inside) / static_cast<double>(trace.f_hz.size());
}

NadirZenith nadir_zenith(const FrequencyTrace& trace) {
  NadirZenith out;
  out.f_min_hz = trace.f_hz.front();
  out.f_max_hz = trace.f_hz.front();
  for (double f : trace.f_hz) {
    out.f_min_hz = std::min(out.f_min_hz, f);
    out.f_max_hz = std::max(out.f_max_hz, f);
  }
  out.nadir_dev_hz = std::max(0.0, 50.0 - out.f_min_hz);
  out.zenith_dev_hz = std::max(0.0, out.f_max_hz - 50.0);
  return out;
}

double longest_excursion_s(const FrequencyTrace& trace, double band_hz) {
  double longest = 0.0, current = 0.0;
  for (double f : trace.f_hz) {
    if (std::abs(f - 50.0) > band_hz) {
      current += trace.dt;
      longest = std::max(longest, current);
    } else {
      current = 0.0;
    }
  }
  return longest;
}

}  // namespace fqsim::kpi_reference
