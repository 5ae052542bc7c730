#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "fqsim/agc.hpp"
#include "fqsim/stochastic.hpp"

namespace fqsim {

struct OuParams {
  double alpha = 0.5; // 1/s
  double sigma = 0.0; // stationary scale, units of the target quantity
};

struct NoiseConfig {
  bool enabled = true;
  // Defaults applied to every device of the class; sigma for loads is relative
  // to the base power, for wind absolute m/s.
  OuParams load{0.5, 0.01};
  OuParams wind{0.5, 0.15};
};

struct OutputConfig {
  std::string trace_path;
  std::string report_path;
};

struct Scenario {
  int schema_version = 1;
  std::string case_path;
  double horizon_s = 300.0;
  double dt_s = 0.01;
  std::uint64_t seed = 1;
  NoiseConfig noise;
  PerturbationSchedule schedule;
  AgcConfig agc;
  bool apc_enabled = false;
  double apc_deadband_hz = 0.2; // selectable: 0.2 or 0.015
  bool constant_impedance_loads = false;
  OutputConfig outputs;
};

// Loads and validates a scenario file. case_path is resolved relative to the
// scenario file's directory unless absolute.
Scenario load_scenario(const std::string& path);
Scenario parse_scenario_json(const std::string& text, const std::string& base_dir = "");

std::string scenario_to_json(const Scenario& s);

}  // namespace fqsim
