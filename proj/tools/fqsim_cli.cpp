#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fqsim/case.hpp"
#include "fqsim/errors.hpp"
#include "fqsim/kpi.hpp"
#include "fqsim/runner.hpp"
#include "fqsim/scenario.hpp"
#include "fqsim/solver.hpp"
#include "fqsim/trace.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSolver = 1;
constexpr int kExitInput = 2;

struct GlobalOpts {
  fqsim::RunOverrides overrides;
  std::uint64_t seed = 0;
  double dt = 0.0;
  double horizon = 0.0;
  std::string out_dir;

  void finalize() {
    if (seed != 0) overrides.seed = seed;
    if (dt > 0) overrides.dt = dt;
    if (horizon > 0) overrides.horizon = horizon;
    if (!out_dir.empty()) overrides.out_dir = out_dir;
  }
};

void add_global_flags(CLI::App* app, GlobalOpts& g) {
  app->add_option("--seed", g.seed, "Override the scenario master seed");
  app->add_option("--dt", g.dt, "Override the integration step [s]");
  app->add_option("--horizon", g.horizon, "Override the simulation horizon [s]");
  app->add_option("--out-dir", g.out_dir, "Redirect output files to this directory");
}

int cmd_run(const std::string& scenario_path, GlobalOpts& g) {
  g.finalize();
  const auto sc = fqsim::load_scenario(scenario_path);
  const auto c = fqsim::load_case(sc.case_path);
  const auto outcome = fqsim::run_scenario(sc, c, g.overrides);
  if (!outcome.result.completed) {
    std::cerr << "solver aborted: " << outcome.result.error << "\n";
    return kExitSolver;
  }
  std::printf("sigma_f = %.6f Hz over %.1f s (seed %llu)\n",
              outcome.result.sigma_f_hz,
              outcome.result.trace.t.empty() ? 0.0 : outcome.result.trace.t.back(),
              static_cast<unsigned long long>(g.overrides.seed.value_or(sc.seed)));
  std::cout << fqsim::kpi_report_table(outcome.report, fqsim::KpiThresholds::ireland_ni());
  if (!outcome.trace_path.empty()) std::printf("trace:  %s\n", outcome.trace_path.c_str());
  if (!outcome.report_path.empty())
    std::printf("report: %s\n", outcome.report_path.c_str());
  return kExitOk;
}

int cmd_compare(const std::string& scenario_path, GlobalOpts& g) {
  g.finalize();
  const auto sc = fqsim::load_scenario(scenario_path);
  const auto c = fqsim::load_case(sc.case_path);
  const auto r = fqsim::compare_agc(sc, c, g.overrides);
  std::cout << fqsim::comparison_table(r);
  std::string out_path = "comparison.json";
  if (g.overrides.out_dir)
    out_path = (std::filesystem::path(*g.overrides.out_dir) / out_path).string();
  std::ofstream out(out_path);
  out << fqsim::comparison_to_json(r);
  std::printf("result: %s\n", out_path.c_str());
  return kExitOk;
}

int cmd_kpi(const std::vector<std::string>& traces, const std::string& preset,
            double band_override, GlobalOpts& g) {
  g.finalize();
  auto th = fqsim::preset_by_name(preset);
  if (band_override > 0) th.standard_range_hz = band_override;

  if (traces.size() == 1) {
    const auto trace = fqsim::read_frequency_trace(traces[0]);
    const auto report = fqsim::evaluate_kpis(trace, th);
    std::cout << fqsim::kpi_report_table(report, th);
    std::string out_path = "kpi_report.json";
    if (g.overrides.out_dir)
      out_path = (std::filesystem::path(*g.overrides.out_dir) / out_path).string();
    std::ofstream out(out_path);
    out << fqsim::kpi_report_to_json(report, th);
    std::printf("report: %s\n", out_path.c_str());
    return kExitOk;
  }

  // Several traces: one month each, aggregated into the monthly table.
  std::vector<std::pair<std::string, fqsim::FrequencyTrace>> months;
  for (const auto& path : traces)
    months.emplace_back(std::filesystem::path(path).stem().string(),
                        fqsim::read_frequency_trace(path));
  const auto summary = fqsim::aggregate_months(months, th.incentive_band_hz);
  std::cout << fqsim::monthly_table(summary);
  return kExitOk;
}

int cmd_sweep(const std::string& scenario_path, const std::string& param,
              std::vector<double>& grid, GlobalOpts& g) {
  g.finalize();
  const auto sc = fqsim::load_scenario(scenario_path);
  const auto c = fqsim::load_case(sc.case_path);
  const auto p = fqsim::parse_sweep_parameter(param);
  const auto points = fqsim::sweep(sc, c, p, grid, g.overrides);
  const auto csv = fqsim::sweep_to_csv(p, points);
  std::cout << csv;
  std::string out_path = "sweep.csv";
  if (g.overrides.out_dir)
    out_path = (std::filesystem::path(*g.overrides.out_dir) / out_path).string();
  std::ofstream out(out_path);
  out << csv;
  std::printf("result: %s\n", out_path.c_str());
  return kExitOk;
}

int cmd_validate(const std::string& path) {
  // Accept either a case file or a scenario file.
  try {
    const auto sc = fqsim::load_scenario(path);
    const auto c = fqsim::load_case(sc.case_path);
    std::printf("scenario OK: case '%s' with %zu buses, %zu machines, %zu wind plants\n",
                sc.case_path.c_str(), c.buses.size(), c.machines.size(),
                c.wind_plants.size());
    return kExitOk;
  } catch (const fqsim::SchemaError&) {
    // fall through and try as a bare case file
  }
  const auto c = fqsim::load_case(path);
  std::printf("case OK: %zu buses, %zu branches, %zu machines, %zu wind plants\n",
              c.buses.size(), c.branches.size(), c.machines.size(),
              c.wind_plants.size());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-inertia grid frequency-quality simulator"};
  app.require_subcommand(1);

  GlobalOpts g;
  std::string scenario_path, trace_preset = "IE_NI", sweep_param;
  std::vector<std::string> trace_paths;
  std::vector<double> sweep_grid;
  double band_override = 0.0;
  std::string validate_path;

  auto* run = app.add_subcommand("run", "Simulate a scenario and emit trace + KPI report");
  run->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  add_global_flags(run, g);

  auto* compare = app.add_subcommand("compare", "Paired AGC on/off runs, same seed");
  compare->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  add_global_flags(compare, g);

  auto* kpi = app.add_subcommand("kpi", "Evaluate frequency-quality KPIs on trace CSVs");
  kpi->add_option("traces", trace_paths, "Trace files (several = monthly aggregation)")
      ->required();
  kpi->add_option("--preset", trace_preset, "Threshold preset: CE or IE_NI");
  kpi->add_option("--band", band_override, "Override the standard range [Hz]");
  add_global_flags(kpi, g);

  auto* sweep = app.add_subcommand("sweep", "Paired-seed parameter sweep");
  sweep->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  sweep->add_option("--parameter", sweep_param, "k_o | t_sample | deadband")->required();
  sweep->add_option("--values", sweep_grid, "Grid of parameter values")->required();
  add_global_flags(sweep, g);

  auto* validate = app.add_subcommand("validate", "Validate a case or scenario file");
  validate->add_option("file", validate_path, "Case or scenario JSON file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(scenario_path, g);
    if (compare->parsed()) return cmd_compare(scenario_path, g);
    if (kpi->parsed()) return cmd_kpi(trace_paths, trace_preset, band_override, g);
    if (sweep->parsed()) return cmd_sweep(scenario_path, sweep_param, sweep_grid, g);
    if (validate->parsed()) return cmd_validate(validate_path);
  } catch (const fqsim::SchemaError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fqsim::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fqsim::InitializationError& e) {
    std::cerr << "initialization error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const fqsim::ConvergenceError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}
