#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fqsim/kpi.hpp"
#include "fqsim/scenario.hpp"
#include "fqsim/solver.hpp"

namespace fqsim {

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  std::optional<double> horizon;
  std::optional<std::string> out_dir;
};

struct RunOutcome {
  RunResult result;
  KpiReport report;
  std::string trace_path;   // empty when not written
  std::string report_path;
};

// Executes one scenario: simulate, write trace and KPI report when configured.
RunOutcome run_scenario(const Scenario& sc, const PowerSystemCase& c,
                        const RunOverrides& ov = {});

struct ComparisonResult {
  std::uint64_t seed = 0;
  RunResult agc_on;
  RunResult agc_off;
  KpiReport report_on;
  KpiReport report_off;
  double sigma_on_hz = 0.0;
  double sigma_off_hz = 0.0;
  double relative_reduction = 0.0; // (off - on) / off
};

// Paired AGC on/off runs with identical seeds. Replicas execute concurrently.
ComparisonResult compare_agc(const Scenario& sc, const PowerSystemCase& c,
                             const RunOverrides& ov = {});

std::string comparison_to_json(const ComparisonResult& r);
std::string comparison_table(const ComparisonResult& r);

struct SweepPoint {
  double value = 0.0;
  double sigma_f_hz = 0.0;
  double minutes_outside = 0.0;
  double pct_within_incentive = 0.0;
  bool completed = false;
};

enum class SweepParameter { Ko, TSample, Deadband };

SweepParameter parse_sweep_parameter(const std::string& name); // k_o | t_sample | deadband

// One paired-seed run per grid value; rows in grid order.
std::vector<SweepPoint> sweep(const Scenario& sc, const PowerSystemCase& c,
                              SweepParameter param, const std::vector<double>& grid,
                              const RunOverrides& ov = {});

std::string sweep_to_csv(SweepParameter param, const std::vector<SweepPoint>& points);

}  // namespace fqsim
