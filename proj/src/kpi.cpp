#include "fqsim/kpi.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "fqsim/errors.hpp"

namespace fqsim {

namespace {

constexpr double kNominalHz = 50.0;
constexpr std::size_t kBlock = 1 << 16;

// Fixed-block parallel reduction: per-block partials are combined in block
// order, so results do not depend on the thread count.
template <typename Fn>
std::vector<double> block_partials(std::size_t n, Fn&& fn) {
  const std::size_t n_blocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(n_blocks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < static_cast<std::int64_t>(n_blocks); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
    const std::size_t hi = std::min(n, lo + kBlock);
    partial[static_cast<std::size_t>(b)] = fn(lo, hi);
  }
  return partial;
}

}  // namespace

KpiThresholds KpiThresholds::continental_europe() {
  KpiThresholds t;
  t.standard_range_hz = 0.05;
  t.max_instantaneous_dev_hz = 0.8;
  t.max_steady_state_dev_hz = 0.2;
  t.time_to_recover_s = std::nullopt;
  t.recovery_range_hz = std::nullopt;
  t.time_to_restore_s = 900.0;
  t.restoration_range_hz = std::nullopt;
  t.alert_trigger_s = 300.0;
  t.max_minutes_outside = 15000.0;
  t.incentive_band_hz = 0.1;
  t.incentive_target = 0.98;
  return t;
}

KpiThresholds KpiThresholds::ireland_ni() {
  KpiThresholds t;
  t.standard_range_hz = 0.2;
  t.max_instantaneous_dev_hz = 1.0;
  t.max_steady_state_dev_hz = 0.5;
  t.time_to_recover_s = 60.0;
  t.recovery_range_hz = 0.5;
  t.time_to_restore_s = 900.0;
  t.restoration_range_hz = 0.2;
  t.alert_trigger_s = 600.0;
  t.max_minutes_outside = 15000.0;
  t.incentive_band_hz = 0.1;
  t.incentive_target = 0.98;
  return t;
}

KpiThresholds preset_by_name(const std::string& name) {
  if (name == "CE") return KpiThresholds::continental_europe();
  if (name == "IE_NI") return KpiThresholds::ireland_ni();
  throw SchemaError("unknown KPI preset '" + name + "', expected CE or IE_NI");
}

double std_dev(const FrequencyTrace& trace) {
  const auto& f = trace.f_hz;
  if (f.size() < 2)
    throw ValidationError("standard deviation needs at least 2 samples");
  const auto n = f.size();

  auto sums = block_partials(n, [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += f[i];
    return s;
  });
  double mean = 0.0;
  for (double s : sums) mean += s;
  mean /= static_cast<double>(n);

  auto sq = block_partials(n, [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double d = f[i] - mean;
      s += d * d;
    }
    return s;
  });
  double var = 0.0;
  for (double s : sq) var += s;
  return std::sqrt(var / static_cast<double>(n));
}

DwellSplit minutes_outside(const FrequencyTrace& trace, double band_hz) {
  if (band_hz <= 0) throw ValidationError("band must be > 0");
  const auto& f = trace.f_hz;
  const auto n = f.size();
  const double hi_edge = kNominalHz + band_hz;
  const double lo_edge = kNominalHz - band_hz;

  const std::size_t n_blocks = (n + kBlock - 1) / kBlock;
  std::vector<std::int64_t> above(n_blocks, 0), below(n_blocks, 0);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < static_cast<std::int64_t>(n_blocks); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
    const std::size_t hi = std::min(n, lo + kBlock);
    std::int64_t a = 0, u = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      if (f[i] > hi_edge) ++a;
      else if (f[i] < lo_edge) ++u;
    }
    above[static_cast<std::size_t>(b)] = a;
    below[static_cast<std::size_t>(b)] = u;
  }
  std::int64_t n_above = 0, n_below = 0;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    n_above += above[b];
    n_below += below[b];
  }
  DwellSplit out;
  out.above_min = static_cast<double>(n_above) * trace.dt / 60.0;
  out.below_min = static_cast<double>(n_below) * trace.dt / 60.0;
  out.inside_min =
      static_cast<double>(static_cast<std::int64_t>(n) - n_above - n_below) * trace.dt /
      60.0;
  return out;
}

double percent_within(const FrequencyTrace& trace, double band_hz) {
  if (trace.f_hz.empty()) throw ValidationError("percent_within needs samples");
  const auto split = minutes_outside(trace, band_hz);
  const double total = split.above_min + split.below_min + split.inside_min;
  return split.inside_min / total;
}

NadirZenith nadir_zenith(const FrequencyTrace& trace) {
  const auto& f = trace.f_hz;
  if (f.empty()) throw ValidationError("nadir_zenith needs a non-empty trace");
  const auto n = f.size();
  const std::size_t n_blocks = (n + kBlock - 1) / kBlock;
  std::vector<double> mins(n_blocks), maxs(n_blocks);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < static_cast<std::int64_t>(n_blocks); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
    const std::size_t hi = std::min(n, lo + kBlock);
    double mn = f[lo], mx = f[lo];
    for (std::size_t i = lo + 1; i < hi; ++i) {
      mn = std::min(mn, f[i]);
      mx = std::max(mx, f[i]);
    }
    mins[static_cast<std::size_t>(b)] = mn;
    maxs[static_cast<std::size_t>(b)] = mx;
  }
  NadirZenith out;
  out.f_min_hz = *std::min_element(mins.begin(), mins.end());
  out.f_max_hz = *std::max_element(maxs.begin(), maxs.end());
  // Deviations are reported as non-negative magnitudes.
  out.nadir_dev_hz = std::max(0.0, kNominalHz - out.f_min_hz);
  out.zenith_dev_hz = std::max(0.0, out.f_max_hz - kNominalHz);
  return out;
}

double longest_excursion_s(const FrequencyTrace& trace, double band_hz) {
  // Run-length scan; inherently sequential and cheap next to the reductions.
  std::int64_t longest = 0, current = 0;
  for (double f : trace.f_hz) {
    if (std::abs(f - kNominalHz) > band_hz) {
      ++current;
      longest = std::max(longest, current);
    } else {
      current = 0;
    }
  }
  return static_cast<double>(longest) * trace.dt;
}

namespace {

// First time >= from_idx at which |f - 50| <= range holds for hold_s, or
// nullopt. Returns the entry instant of the sustained window.
std::optional<double> first_sustained_entry(const FrequencyTrace& trace,
                                            std::size_t from_idx, double range_hz,
                                            double hold_s) {
  const auto n = trace.f_hz.size();
  const auto hold_samples =
      static_cast<std::size_t>(std::llround(std::max(hold_s, 0.0) / trace.dt));
  std::size_t run_start = 0;
  std::size_t run = 0;
  for (std::size_t i = from_idx; i < n; ++i) {
    if (std::abs(trace.f_hz[i] - kNominalHz) <= range_hz) {
      if (run == 0) run_start = i;
      ++run;
      if (run >= hold_samples + 1 || (i + 1 == n && run > 0))
        return trace.t(run_start);
    } else {
      run = 0;
    }
  }
  return std::nullopt;
}

}  // namespace

EventRecord event_recovery_metrics(const FrequencyTrace& trace, double event_t,
                                   const KpiThresholds& th) {
  EventRecord rec;
  rec.event_t = event_t;
  const auto n = trace.f_hz.size();
  if (n == 0) throw ValidationError("event metrics need a non-empty trace");
  if (event_t < trace.t0 || event_t > trace.t(n - 1))
    throw ValidationError("event time " + std::to_string(event_t) +
                          " is outside the trace");
  const auto idx0 = static_cast<std::size_t>(
      std::llround((event_t - trace.t0) / trace.dt));

  double fmin = trace.f_hz[idx0];
  for (std::size_t i = idx0; i < n; ++i) fmin = std::min(fmin, trace.f_hz[i]);
  rec.nadir_hz = fmin;
  rec.nadir_dev_hz = std::max(0.0, kNominalHz - fmin);

  if (th.recovery_range_hz) {
    const auto t_rec =
        first_sustained_entry(trace, idx0, *th.recovery_range_hz, th.hold_window_s);
    if (t_rec) rec.time_to_recover_s = *t_rec - event_t;
  }

  // Restoration falls back to the standard range when the preset leaves the
  // restoration range unused.
  const double restore_range =
      th.restoration_range_hz ? *th.restoration_range_hz : th.standard_range_hz;
  const auto t_res = first_sustained_entry(trace, idx0, restore_range, th.hold_window_s);
  if (t_res) {
    rec.time_to_restore_s = *t_res - event_t;
    rec.restored = true;
  }

  // Mean deviation over the minute before restoration (or the horizon).
  const std::size_t end_idx =
      t_res ? static_cast<std::size_t>(std::llround((*t_res - trace.t0) / trace.dt))
            : n - 1;
  const auto window = static_cast<std::size_t>(std::llround(60.0 / trace.dt));
  const std::size_t lo = end_idx > window ? end_idx - window : 0;
  double acc = 0.0;
  std::size_t cnt = 0;
  for (std::size_t i = lo; i <= end_idx; ++i, ++cnt) acc += trace.f_hz[i] - kNominalHz;
  rec.steady_state_dev_hz = cnt > 0 ? acc / static_cast<double>(cnt) : 0.0;
  return rec;
}

KpiReport evaluate_kpis(const FrequencyTrace& trace, const KpiThresholds& th,
                        const std::vector<double>& event_times) {
  KpiReport r;
  r.sigma_f_hz = std_dev(trace);
  const auto split = minutes_outside(trace, th.standard_range_hz);
  r.minutes_above = split.above_min;
  r.minutes_below = split.below_min;
  r.minutes_inside = split.inside_min;
  const auto nz = nadir_zenith(trace);
  r.nadir_dev_hz = nz.nadir_dev_hz;
  r.zenith_dev_hz = nz.zenith_dev_hz;
  r.pct_within_incentive = 100.0 * percent_within(trace, th.incentive_band_hz);
  r.longest_excursion_s = longest_excursion_s(trace, th.standard_range_hz);
  for (double t : event_times) r.events.push_back(event_recovery_metrics(trace, t, th));

  r.pass_instantaneous =
      std::max(r.nadir_dev_hz, r.zenith_dev_hz) <= th.max_instantaneous_dev_hz;
  r.pass_minutes_outside = r.minutes_above + r.minutes_below <= th.max_minutes_outside;
  r.pass_incentive = r.pct_within_incentive >= 100.0 * th.incentive_target;
  r.pass_alert = r.longest_excursion_s <= th.alert_trigger_s;
  return r;
}

MonthlySummary aggregate_months(
    const std::vector<std::pair<std::string, FrequencyTrace>>& months,
    double incentive_band_hz) {
  MonthlySummary out;
  for (const auto& [label, trace] : months) {
    const auto split = minutes_outside(trace, incentive_band_hz);
    MonthRow row;
    row.label = label;
    row.minutes = split.above_min + split.below_min + split.inside_min;
    row.violation_minutes = split.above_min + split.below_min;
    out.total_minutes += row.minutes;
    out.total_violation_minutes += row.violation_minutes;
    out.rows.push_back(row);
  }
  out.pct_within = out.total_minutes > 0
                       ? 100.0 * (1.0 - out.total_violation_minutes / out.total_minutes)
                       : 100.0;
  return out;
}

std::string kpi_report_to_json(const KpiReport& r, const KpiThresholds& th) {
  nlohmann::json j;
  j["sigma_f_hz"] = r.sigma_f_hz;
  j["minutes_above_band"] = r.minutes_above;
  j["minutes_below_band"] = r.minutes_below;
  j["minutes_inside_band"] = r.minutes_inside;
  j["nadir_dev_hz"] = r.nadir_dev_hz;
  j["zenith_dev_hz"] = r.zenith_dev_hz;
  j["pct_within_incentive_band"] = r.pct_within_incentive;
  j["longest_excursion_s"] = r.longest_excursion_s;
  j["thresholds"] = {{"standard_range_hz", th.standard_range_hz},
                     {"max_instantaneous_dev_hz", th.max_instantaneous_dev_hz},
                     {"max_steady_state_dev_hz", th.max_steady_state_dev_hz},
                     {"time_to_restore_s", th.time_to_restore_s},
                     {"alert_trigger_s", th.alert_trigger_s},
                     {"max_minutes_outside", th.max_minutes_outside},
                     {"incentive_band_hz", th.incentive_band_hz},
                     {"incentive_target", th.incentive_target}};
  if (th.time_to_recover_s) j["thresholds"]["time_to_recover_s"] = *th.time_to_recover_s;
  if (th.recovery_range_hz) j["thresholds"]["recovery_range_hz"] = *th.recovery_range_hz;
  if (th.restoration_range_hz)
    j["thresholds"]["restoration_range_hz"] = *th.restoration_range_hz;
  j["pass"] = {{"instantaneous", r.pass_instantaneous},
               {"minutes_outside", r.pass_minutes_outside},
               {"incentive", r.pass_incentive},
               {"alert", r.pass_alert}};
  j["events"] = nlohmann::json::array();
  for (const auto& e : r.events) {
    nlohmann::json ej = {{"event_t", e.event_t},
                         {"nadir_hz", e.nadir_hz},
                         {"nadir_dev_hz", e.nadir_dev_hz},
                         {"steady_state_dev_hz", e.steady_state_dev_hz},
                         {"restored", e.restored}};
    if (e.time_to_recover_s) ej["time_to_recover_s"] = *e.time_to_recover_s;
    if (e.time_to_restore_s) ej["time_to_restore_s"] = *e.time_to_restore_s;
    j["events"].push_back(ej);
  }
  return j.dump(2) + "\n";
}

namespace {

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

}  // namespace

std::string kpi_report_table(const KpiReport& r, const KpiThresholds& th) {
  std::ostringstream os;
  auto row = [&](const std::string& name, const std::string& value,
                 const std::string& limit, const std::string& verdict) {
    os << "  " << name;
    for (std::size_t i = name.size(); i < 42; ++i) os << ' ';
    os << value;
    for (std::size_t i = value.size(); i < 16; ++i) os << ' ';
    os << limit;
    for (std::size_t i = limit.size(); i < 16; ++i) os << ' ';
    os << verdict << "\n";
  };
  os << "Frequency quality report\n";
  row("parameter", "value", "limit", "status");
  row("std dev of frequency [Hz]", fmt(r.sigma_f_hz, 5), "-", "-");
  row("minutes above standard range", fmt(r.minutes_above, 2), "-", "-");
  row("minutes below standard range", fmt(r.minutes_below, 2), "-", "-");
  row("minutes outside (total)", fmt(r.minutes_above + r.minutes_below, 2),
      fmt(th.max_minutes_outside, 0), r.pass_minutes_outside ? "pass" : "FAIL");
  row("max instantaneous deviation [Hz]",
      fmt(std::max(r.nadir_dev_hz, r.zenith_dev_hz), 4),
      fmt(th.max_instantaneous_dev_hz, 3), r.pass_instantaneous ? "pass" : "FAIL");
  row("time within +/-" + fmt(th.incentive_band_hz, 1) + " Hz [%]",
      fmt(r.pct_within_incentive, 2), ">= " + fmt(100.0 * th.incentive_target, 0),
      r.pass_incentive ? "pass" : "FAIL");
  row("longest excursion beyond range [s]", fmt(r.longest_excursion_s, 1),
      fmt(th.alert_trigger_s, 0), r.pass_alert ? "pass" : "FAIL");
  for (const auto& e : r.events) {
    os << "  event at t=" << fmt(e.event_t, 1) << " s: nadir " << fmt(e.nadir_hz, 4)
       << " Hz";
    if (e.time_to_recover_s) os << ", recovered in " << fmt(*e.time_to_recover_s, 1) << " s";
    if (e.time_to_restore_s) os << ", restored in " << fmt(*e.time_to_restore_s, 1) << " s";
    else os << ", restoration not achieved";
    os << ", steady-state dev " << fmt(e.steady_state_dev_hz, 4) << " Hz\n";
  }
  return os.str();
}

std::string monthly_table(const MonthlySummary& s) {
  std::ostringstream os;
  auto row = [&](const std::string& a, const std::string& b, const std::string& c) {
    os << "  " << a;
    for (std::size_t i = a.size(); i < 28; ++i) os << ' ';
    for (std::size_t i = b.size(); i < 12; ++i) os << ' ';
    os << b;
    for (std::size_t i = c.size(); i < 22; ++i) os << ' ';
    os << c << "\n";
  };
  auto fmt_min = [](double m) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.0f", m);
    return std::string(buf);
  };
  row("Month", "Minutes", "KPI Violation Minutes");
  for (const auto& r : s.rows) row(r.label, fmt_min(r.minutes), fmt_min(r.violation_minutes));
  row("Total", fmt_min(s.total_minutes), fmt_min(s.total_violation_minutes));
  char pct[32];
  std::snprintf(pct, sizeof(pct), "%.2f%%", s.pct_within);
  row("Time within KPI limits", "", pct);
  return os.str();
}

}  // namespace fqsim
