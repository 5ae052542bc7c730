#pragma once

#include <optional>
#include <string>
#include <vector>

namespace fqsim {

struct EventMarker {
  double t = 0.0;
  std::string label;
};

// Uniformly sampled frequency series. Storage is (t0, dt, f[]) so dwell
// arithmetic stays exact; t(i) = t0 + i*dt.
struct FrequencyTrace {
  double t0 = 0.0;
  double dt = 1.0; // s
  std::vector<double> f_hz;
  std::vector<EventMarker> markers;

  std::size_t size() const { return f_hz.size(); }
  double t(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
  double duration_s() const { return static_cast<double>(f_hz.size()) * dt; }
};

// Full simulator output: CoI frequency plus per-machine and actuation channels.
struct SimTrace {
  double dt = 0.01;
  std::vector<double> t;
  std::vector<double> f_coi_hz;
  std::vector<double> dp_agc_pu;
  std::vector<std::vector<double>> f_machine_hz; // one column per machine, case order
  std::vector<std::vector<double>> p_bess_pu;    // one column per BESS unit
  std::vector<EventMarker> markers;

  FrequencyTrace coi_trace() const;
};

// CSV with header t,f_coi_hz,delta_p_agc_pu,f_m<i>_hz...,p_bess<i>_pu...
// Values carry 17 significant digits so files round-trip bit-identically.
void write_sim_trace_csv(const SimTrace& trace, const std::string& path);
SimTrace read_sim_trace_csv(const std::string& path);

// Accepts both the simulator CSV (f_coi_hz column) and a bare 2-column
// t,f_hz import. Sampling must be uniform.
FrequencyTrace read_frequency_trace(const std::string& path);

void write_frequency_trace_csv(const FrequencyTrace& trace, const std::string& path);

}  // namespace fqsim
