#include "fqsim/runner.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fqsim/errors.hpp"
#include "fqsim/trace.hpp"

namespace fqsim {

namespace {

Scenario apply_overrides(const Scenario& sc, const RunOverrides& ov) {
  Scenario s = sc;
  if (ov.seed) s.seed = *ov.seed;
  if (ov.dt) s.dt_s = *ov.dt;
  if (ov.horizon) s.horizon_s = *ov.horizon;
  if (ov.out_dir) {
    namespace fs = std::filesystem;
    auto redirect = [&](std::string& p) {
      if (!p.empty()) p = (fs::path(*ov.out_dir) / fs::path(p).filename()).string();
    };
    redirect(s.outputs.trace_path);
    redirect(s.outputs.report_path);
  }
  return s;
}

SolverConfig solver_config(const Scenario& s) {
  SolverConfig cfg;
  cfg.dt = s.dt_s;
  cfg.horizon = s.horizon_s;
  return cfg;
}

std::vector<double> trip_event_times(const Scenario& s) {
  std::vector<double> out;
  for (const auto& e : s.schedule.events())
    if (e.kind == EventKind::Trip) out.push_back(e.t_start);
  return out;
}

}  // namespace

RunOutcome run_scenario(const Scenario& sc, const PowerSystemCase& c,
                        const RunOverrides& ov) {
  const Scenario s = apply_overrides(sc, ov);
  Simulator sim(c, s, solver_config(s));
  RunOutcome out;
  out.result = sim.run();

  const auto th = KpiThresholds::ireland_ni();
  out.report = evaluate_kpis(out.result.trace.coi_trace(), th, trip_event_times(s));

  if (!s.outputs.trace_path.empty()) {
    namespace fs = std::filesystem;
    const auto dir = fs::path(s.outputs.trace_path).parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    write_sim_trace_csv(out.result.trace, s.outputs.trace_path);
    out.trace_path = s.outputs.trace_path;
  }
  if (!s.outputs.report_path.empty()) {
    namespace fs = std::filesystem;
    const auto dir = fs::path(s.outputs.report_path).parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    std::ofstream rf(s.outputs.report_path);
    if (!rf) throw SchemaError("cannot write report file: " + s.outputs.report_path);
    rf << kpi_report_to_json(out.report, th);
    out.report_path = s.outputs.report_path;
  }
  return out;
}

ComparisonResult compare_agc(const Scenario& sc, const PowerSystemCase& c,
                             const RunOverrides& ov) {
  const Scenario base = apply_overrides(sc, ov);
  Scenario on = base, off = base;
  on.agc.enabled = true;
  off.agc.enabled = false;
  on.outputs = {};
  off.outputs = {};

  ComparisonResult r;
  r.seed = base.seed;
  RunResult results[2];
  std::string errors[2];
  const Scenario* variants[2] = {&on, &off};
#pragma omp parallel for num_threads(2) schedule(static)
  for (int i = 0; i < 2; ++i) {
    try {
      Simulator sim(c, *variants[i], solver_config(*variants[i]));
      results[i] = sim.run();
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (int i = 0; i < 2; ++i)
    if (!errors[i].empty())
      throw ConvergenceError("paired run failed: " + errors[i], 0.0);

  r.agc_on = results[0];
  r.agc_off = results[1];
  const auto th = KpiThresholds::ireland_ni();
  r.report_on = evaluate_kpis(r.agc_on.trace.coi_trace(), th, trip_event_times(base));
  r.report_off = evaluate_kpis(r.agc_off.trace.coi_trace(), th, trip_event_times(base));
  r.sigma_on_hz = r.agc_on.sigma_f_hz;
  r.sigma_off_hz = r.agc_off.sigma_f_hz;
  r.relative_reduction =
      r.sigma_off_hz > 0 ? (r.sigma_off_hz - r.sigma_on_hz) / r.sigma_off_hz : 0.0;
  return r;
}

std::string comparison_to_json(const ComparisonResult& r) {
  nlohmann::json j;
  j["seed"] = r.seed;
  j["sigma_f_agc_on_hz"] = r.sigma_on_hz;
  j["sigma_f_agc_off_hz"] = r.sigma_off_hz;
  j["relative_reduction"] = r.relative_reduction;
  j["noise_paths_identical"] = r.agc_on.eta_digest == r.agc_off.eta_digest;
  j["completed"] = r.agc_on.completed && r.agc_off.completed;
  j["kpi_agc_on"] = nlohmann::json::parse(
      kpi_report_to_json(r.report_on, KpiThresholds::ireland_ni()));
  j["kpi_agc_off"] = nlohmann::json::parse(
      kpi_report_to_json(r.report_off, KpiThresholds::ireland_ni()));
  return j.dump(2) + "\n";
}

std::string comparison_table(const ComparisonResult& r) {
  std::ostringstream os;
  char buf[160];
  os << "AGC comparison (seed " << r.seed << ")\n";
  std::snprintf(buf, sizeof(buf), "  %-28s %12s %12s\n", "", "AGC on", "AGC off");
  os << buf;
  std::snprintf(buf, sizeof(buf), "  %-28s %12.6f %12.6f\n", "sigma_f [Hz]",
                r.sigma_on_hz, r.sigma_off_hz);
  os << buf;
  std::snprintf(buf, sizeof(buf), "  %-28s %12.2f %12.2f\n",
                "minutes outside band", r.report_on.minutes_above + r.report_on.minutes_below,
                r.report_off.minutes_above + r.report_off.minutes_below);
  os << buf;
  std::snprintf(buf, sizeof(buf), "  %-28s %12.2f %12.2f\n", "% within +/-100 mHz",
                r.report_on.pct_within_incentive, r.report_off.pct_within_incentive);
  os << buf;
  std::snprintf(buf, sizeof(buf), "  relative sigma_f reduction: %.1f%%\n",
                100.0 * r.relative_reduction);
  os << buf;
  return os.str();
}

SweepParameter parse_sweep_parameter(const std::string& name) {
  if (name == "k_o") return SweepParameter::Ko;
  if (name == "t_sample") return SweepParameter::TSample;
  if (name == "deadband") return SweepParameter::Deadband;
  throw SchemaError("sweep parameter '" + name + "' must be k_o|t_sample|deadband");
}

std::vector<SweepPoint> sweep(const Scenario& sc, const PowerSystemCase& c,
                              SweepParameter param, const std::vector<double>& grid,
                              const RunOverrides& ov) {
  const Scenario base = apply_overrides(sc, ov);
  std::vector<Scenario> variants;
  variants.reserve(grid.size());
  for (double value : grid) {
    Scenario s = base;
    s.outputs = {};
    switch (param) {
      case SweepParameter::Ko:
        s.agc.k_o = value;
        break;
      case SweepParameter::TSample:
        s.agc.t_sample_s = value;
        break;
      case SweepParameter::Deadband:
        s.apc_deadband_hz = value;
        break;
    }
    variants.push_back(std::move(s));
  }

  std::vector<SweepPoint> points(grid.size());
  std::vector<std::string> errors(grid.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(variants.size()); ++i) {
    try {
      Simulator sim(c, variants[i], solver_config(variants[i]));
      const auto result = sim.run();
      const auto report = evaluate_kpis(result.trace.coi_trace(),
                                        KpiThresholds::ireland_ni(),
                                        trip_event_times(variants[i]));
      auto& p = points[i];
      p.value = grid[i];
      p.sigma_f_hz = result.sigma_f_hz;
      p.minutes_outside = report.minutes_above + report.minutes_below;
      p.pct_within_incentive = report.pct_within_incentive;
      p.completed = result.completed;
    } catch (const std::exception& e) {
      errors[i] = e.what();
      points[i].value = grid[i];
      points[i].completed = false;
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw ConvergenceError("sweep run failed: " + e, 0.0);
  return points;
}

std::string sweep_to_csv(SweepParameter param, const std::vector<SweepPoint>& points) {
  const char* name = param == SweepParameter::Ko          ? "k_o"
                     : param == SweepParameter::TSample ? "t_sample_s"
                                                        : "apc_deadband_hz";
  std::ostringstream os;
  os << name << ",sigma_f_hz,minutes_outside,pct_within_incentive,completed\n";
  char buf[160];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%d\n", p.value,
                  p.sigma_f_hz, p.minutes_outside, p.pct_within_incentive,
                  p.completed ? 1 : 0);
    os << buf;
  }
  return os.str();
}

}  // namespace fqsim
