#include <doctest.h>

#include <cmath>
#include <random>

#include "fqsim/errors.hpp"
#include "fqsim/kpi.hpp"
#include "fqsim/kpi_reference.hpp"

using namespace fqsim;

namespace {

FrequencyTrace constant_trace(double f, std::size_t n, double dt) {
  FrequencyTrace t;
  t.dt = dt;
  t.f_hz.assign(n, f);
  return t;
}

FrequencyTrace random_trace(std::mt19937_64& rng, std::size_t n, double dt) {
  std::normal_distribution<double> noise(0.0, 0.15);
  FrequencyTrace t;
  t.dt = dt;
  t.f_hz.reserve(n);
  for (std::size_t i = 0; i < n; ++i) t.f_hz.push_back(50.0 + noise(rng));
  return t;
}

}  // namespace

TEST_SUITE("kpi") {

TEST_CASE("standard deviation basics") {
  CHECK(std_dev(constant_trace(50.0, 1000, 1.0)) == 0.0);
  FrequencyTrace t;
  t.dt = 1.0;
  for (int i = 0; i < 500; ++i) {
    t.f_hz.push_back(49.9);
    t.f_hz.push_back(50.1);
  }
  CHECK(std_dev(t) == doctest::Approx(0.1).epsilon(1e-12));
  FrequencyTrace tiny;
  tiny.f_hz = {50.0};
  CHECK_THROWS_AS(std_dev(tiny), ValidationError);
}

TEST_CASE("dwell minutes split above and below") {
  // 120 s at 50.25 Hz then 60 s at 49.7 Hz, sampled every second
  FrequencyTrace t;
  t.dt = 1.0;
  for (int i = 0; i < 120; ++i) t.f_hz.push_back(50.25);
  for (int i = 0; i < 60; ++i) t.f_hz.push_back(49.7);
  auto split = minutes_outside(t, 0.2);
  CHECK(split.above_min == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(split.below_min == doctest::Approx(1.0).epsilon(1e-12));
  // tighter band catches the same excursions
  split = minutes_outside(t, 0.1);
  CHECK(split.above_min == doctest::Approx(2.0));
  CHECK(split.below_min == doctest::Approx(1.0));
  // constant nominal trace: nothing outside
  split = minutes_outside(constant_trace(50.0, 600, 1.0), 0.2);
  CHECK(split.above_min == 0.0);
  CHECK(split.below_min == 0.0);
}

TEST_CASE("percent within band") {
  CHECK(percent_within(constant_trace(50.0, 100, 1.0), 0.1) == doctest::Approx(1.0));
  FrequencyTrace sq;
  sq.dt = 1.0;
  for (int i = 0; i < 500; ++i) {
    sq.f_hz.push_back(50.0);
    sq.f_hz.push_back(50.5);
  }
  CHECK(percent_within(sq, 0.1) == doctest::Approx(0.5));
}

TEST_CASE("Table-style 12-month aggregation reproduces the published totals") {
  // Monthly minutes and violation minutes for a 12-month window; the trace for
  // each month carries exactly that many one-minute samples outside the band.
  const std::vector<std::pair<double, double>> months = {
      {44640, 372}, {43200, 420},  {44640, 862},  {43200, 935},
      {44640, 1803}, {44640, 1135}, {40320, 1066}, {44640, 1078},
      {43200, 411}, {44640, 433},  {43200, 333},  {44640, 230},
  };
  std::vector<std::pair<std::string, FrequencyTrace>> traces;
  int idx = 0;
  for (const auto& [minutes, violations] : months) {
    FrequencyTrace t;
    t.dt = 60.0; // one sample per minute
    const auto n = static_cast<std::size_t>(minutes);
    const auto v = static_cast<std::size_t>(violations);
    t.f_hz.assign(n, 50.0);
    for (std::size_t i = 0; i < v; ++i) t.f_hz[i] = 50.15; // outside +/-100 mHz
    traces.emplace_back("month" + std::to_string(++idx), std::move(t));
  }
  const auto summary = aggregate_months(traces, 0.1);
  CHECK(summary.total_minutes == doctest::Approx(525600.0).epsilon(1e-12));
  CHECK(summary.total_violation_minutes == doctest::Approx(9078.0).epsilon(1e-12));
  CHECK(summary.pct_within == doctest::Approx(98.27).epsilon(0.00005));
  const auto table = monthly_table(summary);
  CHECK(table.find("98.27%") != std::string::npos);
}

TEST_CASE("nadir and zenith deviations") {
  auto nz = nadir_zenith(constant_trace(50.0, 100, 1.0));
  CHECK(nz.nadir_dev_hz == 0.0);
  CHECK(nz.zenith_dev_hz == 0.0);
  FrequencyTrace t = constant_trace(50.0, 100, 1.0);
  t.f_hz[40] = 49.5;
  t.f_hz[60] = 50.3;
  nz = nadir_zenith(t);
  CHECK(nz.nadir_dev_hz == doctest::Approx(0.5));
  CHECK(nz.zenith_dev_hz == doctest::Approx(0.3));
  CHECK(nz.nadir_dev_hz < 1.0); // inside the 1000 mHz ceiling
  // trace entirely above nominal clamps the nadir deviation at zero
  nz = nadir_zenith(constant_trace(50.2, 10, 1.0));
  CHECK(nz.nadir_dev_hz == 0.0);
  CHECK(nz.zenith_dev_hz == doctest::Approx(0.2));
}

TEST_CASE("event recovery metrics") {
  const auto th = KpiThresholds::ireland_ni();

  SUBCASE("a trace that never leaves the band restores immediately") {
    auto t = constant_trace(50.0, 2000, 1.0);
    const auto rec = event_recovery_metrics(t, 100.0, th);
    CHECK(rec.restored);
    CHECK(*rec.time_to_restore_s == doctest::Approx(0.0));
  }

  SUBCASE("exponential recovery crosses the restoration band at the closed form") {
    // f = 50 - 0.5 exp(-t/100): |dev| = 0.2 at t = 100 ln(2.5) = 91.629...
    FrequencyTrace t;
    t.dt = 0.05;
    const std::size_t n = 40000;
    for (std::size_t i = 0; i < n; ++i) {
      const double tt = static_cast<double>(i) * t.dt;
      t.f_hz.push_back(50.0 - 0.5 * std::exp(-tt / 100.0));
    }
    const auto rec = event_recovery_metrics(t, 0.0, th);
    REQUIRE(rec.restored);
    CHECK(*rec.time_to_restore_s == doctest::Approx(91.62907318741551).epsilon(0.002));
    REQUIRE(rec.time_to_recover_s.has_value());
    // +/-0.5 Hz band is entered at t=0 for this trace
    CHECK(*rec.time_to_recover_s == doctest::Approx(0.0));
    CHECK(rec.nadir_hz == doctest::Approx(49.5).epsilon(1e-9));
  }

  SUBCASE("no re-entry within the horizon is reported, not an error") {
    auto t = constant_trace(49.5, 1000, 1.0);
    const auto rec = event_recovery_metrics(t, 10.0, th);
    CHECK(!rec.restored);
    CHECK(!rec.time_to_restore_s.has_value());
  }

  SUBCASE("CE preset falls back to the standard range for restoration") {
    const auto ce = KpiThresholds::continental_europe();
    FrequencyTrace t;
    t.dt = 1.0;
    for (int i = 0; i < 100; ++i) t.f_hz.push_back(49.8);
    for (int i = 0; i < 100; ++i) t.f_hz.push_back(50.0);
    const auto rec = event_recovery_metrics(t, 0.0, ce);
    REQUIRE(rec.restored);
    CHECK(*rec.time_to_restore_s == doctest::Approx(100.0));
    CHECK(!rec.time_to_recover_s.has_value()); // recovery range unused in CE
  }
}

TEST_CASE("counting consistency: inside + above + below equals the duration") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = random_trace(rng, 10000 + rng() % 1000, 0.5);
    const auto split = minutes_outside(t, 0.1);
    const double total = split.above_min + split.below_min + split.inside_min;
    CHECK(total == doctest::Approx(t.duration_s() / 60.0).epsilon(1e-12));
  }
}

TEST_CASE("band monotonicity: widening the band never adds outside minutes") {
  std::mt19937_64 rng(32);
  const auto t = random_trace(rng, 50000, 1.0);
  double prev = 1e18;
  for (double band : {0.02, 0.05, 0.1, 0.2, 0.5}) {
    const auto split = minutes_outside(t, band);
    const double outside = split.above_min + split.below_min;
    CHECK(outside <= prev + 1e-12);
    prev = outside;
  }
}

TEST_CASE("parallel kernels agree exactly with the serial reference") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = random_trace(rng, 1000 + rng() % 200000, 1.0);
    const double band = 0.05 + 0.1 * (trial % 5);

    const auto split = minutes_outside(t, band);
    const auto ref = kpi_reference::minutes_outside(t, band);
    CHECK(split.above_min == ref.above_min);  // exact: integer sample counts
    CHECK(split.below_min == ref.below_min);
    CHECK(split.inside_min == ref.inside_min);

    const auto nz = nadir_zenith(t);
    const auto nzr = kpi_reference::nadir_zenith(t);
    CHECK(nz.f_min_hz == nzr.f_min_hz);
    CHECK(nz.f_max_hz == nzr.f_max_hz);

    CHECK(std_dev(t) == doctest::Approx(kpi_reference::std_dev(t)).epsilon(1e-12));
    CHECK(longest_excursion_s(t, band) == kpi_reference::longest_excursion_s(t, band));
    CHECK(percent_within(t, band) ==
          doctest::Approx(kpi_reference::percent_within(t, band)).epsilon(1e-12));
  }
}

TEST_CASE("threshold presets reproduce every published cell") {
  const auto ce = KpiThresholds::continental_europe();
  CHECK(ce.standard_range_hz == 0.05);
  CHECK(ce.max_instantaneous_dev_hz == 0.8);
  CHECK(ce.max_steady_state_dev_hz == 0.2);
  CHECK(!ce.time_to_recover_s.has_value());
  CHECK(!ce.recovery_range_hz.has_value());
  CHECK(ce.time_to_restore_s == 900.0);
  CHECK(!ce.restoration_range_hz.has_value());
  CHECK(ce.alert_trigger_s == 300.0);
  CHECK(ce.max_minutes_outside == 15000.0);

  const auto ie = KpiThresholds::ireland_ni();
  CHECK(ie.standard_range_hz == 0.2);
  CHECK(ie.max_instantaneous_dev_hz == 1.0);
  CHECK(ie.max_steady_state_dev_hz == 0.5);
  CHECK(ie.time_to_recover_s == 60.0);
  CHECK(ie.recovery_range_hz == 0.5);
  CHECK(ie.time_to_restore_s == 900.0);
  CHECK(ie.restoration_range_hz == 0.2);
  CHECK(ie.alert_trigger_s == 600.0);
  CHECK(ie.max_minutes_outside == 15000.0);

  CHECK(ie.incentive_band_hz == 0.1);
  CHECK(ie.incentive_target == 0.98);
  CHECK(preset_by_name("CE").standard_range_hz == 0.05);
  CHECK(preset_by_name("IE_NI").standard_range_hz == 0.2);
  CHECK_THROWS_AS(preset_by_name("GB"), SchemaError);
}

TEST_CASE("full report wiring") {
  auto t = constant_trace(50.0, 4000, 1.0);
  for (int i = 100; i < 160; ++i) t.f_hz[i] = 49.6; // one-minute excursion
  const auto th = KpiThresholds::ireland_ni();
  const auto report = evaluate_kpis(t, th, {100.0});
  CHECK(report.minutes_below == doctest::Approx(1.0));
  CHECK(report.nadir_dev_hz == doctest::Approx(0.4));
  CHECK(report.pass_instantaneous);
  CHECK(report.pass_alert);
  REQUIRE(report.events.size() == 1);
  CHECK(report.events[0].restored);
  const auto json_text = kpi_report_to_json(report, th);
  CHECK(json_text.find("sigma_f_hz") != std::string::npos);
  const auto table = kpi_report_table(report, th);
  CHECK(table.find("pass") != std::string::npos);
}

}  // TEST_SUITE
