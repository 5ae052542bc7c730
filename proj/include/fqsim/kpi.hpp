#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fqsim/trace.hpp"

namespace fqsim {

// Frequency-quality parameter set. Unused entries in a preset are nullopt.
struct KpiThresholds {
  double standard_range_hz = 0.2;
  double max_instantaneous_dev_hz = 1.0;
  double max_steady_state_dev_hz = 0.5;
  std::optional<double> time_to_recover_s = 60.0;
  std::optional<double> recovery_range_hz = 0.5;
  double time_to_restore_s = 900.0;
  std::optional<double> restoration_range_hz = 0.2;
  double alert_trigger_s = 600.0;
  double max_minutes_outside = 15000.0;
  double incentive_band_hz = 0.1;
  double incentive_target = 0.98;
  // Sustained re-entry debounce used by the event metrics.
  double hold_window_s = 10.0;

  static KpiThresholds continental_europe();
  static KpiThresholds ireland_ni();
};

KpiThresholds preset_by_name(const std::string& name); // "CE" | "IE_NI"

struct EventRecord {
  double event_t = 0.0;
  double nadir_hz = 0.0;               // minimum frequency after the event
  double nadir_dev_hz = 0.0;           // 50 - nadir
  std::optional<double> time_to_recover_s;  // nullopt: never, or range unused
  std::optional<double> time_to_restore_s;  // nullopt: not achieved in horizon
  double steady_state_dev_hz = 0.0;    // trailing-minute mean deviation
  bool restored = false;
};

struct KpiReport {
  double sigma_f_hz = 0.0;
  double minutes_above = 0.0;
  double minutes_below = 0.0;
  double minutes_inside = 0.0;
  double nadir_dev_hz = 0.0;   // max downward deviation, >= 0
  double zenith_dev_hz = 0.0;  // max upward deviation, >= 0
  double pct_within_incentive = 100.0;  // percent of time inside +/-incentive band
  double longest_excursion_s = 0.0;     // longest continuous dwell outside standard range
  std::vector<EventRecord> events;
  // Pass/fail against the thresholds the report was built with.
  bool pass_instantaneous = true;
  bool pass_minutes_outside = true;
  bool pass_incentive = true;
  bool pass_alert = true;
};

// --- Kernels (OpenMP-parallel over samples; deterministic reductions). ---

// Population standard deviation. Throws ValidationError for < 2 samples.
double std_dev(const FrequencyTrace& trace);

// Dwell minutes strictly above 50+band and strictly below 50-band. Each sample
// contributes dt; no sub-sample interpolation.
struct DwellSplit {
  double above_min = 0.0;
  double below_min = 0.0;
  double inside_min = 0.0;
};
DwellSplit minutes_outside(const FrequencyTrace& trace, double band_hz);

// Fraction of time with |f - 50| <= band.
double percent_within(const FrequencyTrace& trace, double band_hz);

// (max downward deviation, max upward deviation), both clamped at 0.
struct NadirZenith {
  double nadir_dev_hz = 0.0;
  double zenith_dev_hz = 0.0;
  double f_min_hz = 0.0;
  double f_max_hz = 0.0;
};
NadirZenith nadir_zenith(const FrequencyTrace& trace);

double longest_excursion_s(const FrequencyTrace& trace, double band_hz);

// Recovery/restoration metrics for one event. Recovery and restoration are the
// first re-entries into the respective ranges sustained for hold_window_s.
// A preset without a recovery range yields no recovery time; restoration falls
// back to the standard range when the preset leaves it unused.
EventRecord event_recovery_metrics(const FrequencyTrace& trace, double event_t,
                                   const KpiThresholds& th);

KpiReport evaluate_kpis(const FrequencyTrace& trace, const KpiThresholds& th,
                        const std::vector<double>& event_times = {});

// --- Monthly aggregation (incentive-band accounting per calendar month). ---

struct MonthRow {
  std::string label;
  double minutes = 0.0;
  double violation_minutes = 0.0;
};

struct MonthlySummary {
  std::vector<MonthRow> rows;
  double total_minutes = 0.0;
  double total_violation_minutes = 0.0;
  double pct_within = 100.0;
};

MonthlySummary aggregate_months(const std::vector<std::pair<std::string, FrequencyTrace>>& months,
                                double incentive_band_hz);

std::string kpi_report_to_json(const KpiReport& report, const KpiThresholds& th);
std::string kpi_report_table(const KpiReport& report, const KpiThresholds& th);
std::string monthly_table(const MonthlySummary& summary);

}  // namespace fqsim
