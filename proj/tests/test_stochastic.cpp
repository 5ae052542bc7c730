#include <doctest.h>

#include <cmath>
#include <vector>

#include "fqsim/errors.hpp"
#include "fqsim/stochastic.hpp"

using namespace fqsim;

TEST_SUITE("stochastic") {

TEST_CASE("zero diffusion at the mean stays put") {
  OuProcess p(0.5, 1.0, 0.0, 42);
  p.reset(1.0);
  for (int i = 0; i < 1000; ++i) p.step(0.01);
  CHECK(p.value() == 1.0);
}

TEST_CASE("zero diffusion decays exponentially within Euler error") {
  const double alpha = 0.8, mu = 0.0, eta0 = 1.0, dt = 0.001;
  OuProcess p(alpha, mu, 0.0, 42);
  p.reset(eta0);
  const int n = 2000;
  for (int i = 0; i < n; ++i) p.step(dt);
  const double t = n * dt;
  const double exact = eta0 * std::exp(-alpha * t);
  // forward Euler local error O(dt); tolerance scaled accordingly
  CHECK(std::abs(p.value() - exact) < 5e-4);
}

TEST_CASE("stationary variance matches sigma^2/(2 alpha) over 1e6 steps") {
  const double alpha = 1.0, sigma = 0.1, dt = 0.01;
  OuProcess p(alpha, 0.0, sigma, 20240817);
  p.reset(0.0);
  // burn-in to reach stationarity
  for (int i = 0; i < 10000; ++i) p.step(dt);
  const std::size_t n = 1000000;
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = p.step(dt);
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  const double analytic = sigma * sigma / (2.0 * alpha); // 0.005
  CHECK(std::abs(var - analytic) / analytic < 0.03);
  CHECK(std::abs(mean) < 0.005);
}

TEST_CASE("identical seeds give bit-identical paths") {
  OuProcess a(0.5, 0.0, 0.2, 7);
  OuProcess b(0.5, 0.0, 0.2, 7);
  for (int i = 0; i < 10000; ++i) {
    CHECK(a.step(0.01) == b.step(0.01));
  }
  OuProcess c(0.5, 0.0, 0.2, 8);
  bool all_equal = true;
  OuProcess a2(0.5, 0.0, 0.2, 7);
  for (int i = 0; i < 100; ++i)
    if (a2.step(0.01) != c.step(0.01)) all_equal = false;
  CHECK(!all_equal);
}

TEST_CASE("dt refinement keeps stationary moments consistent") {
  // Distributional check: the Euler-Maruyama stationary variance is
  // sigma^2 dt / (1 - (1 - alpha dt)^2); both step sizes must sit within a
  // few percent of the analytic continuous value, and their gap must shrink
  // in proportion to dt.
  auto stationary_var = [](double dt, std::uint64_t seed) {
    OuProcess p(1.0, 0.0, 0.1, seed);
    for (int i = 0; i < 20000; ++i) p.step(dt);
    const std::size_t n = 800000;
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = p.step(dt);
      sum += v;
      sumsq += v * v;
    }
    const double mean = sum / n;
    return sumsq / n - mean * mean;
  };
  const double v1 = stationary_var(0.02, 11);
  const double v2 = stationary_var(0.01, 12);
  const double analytic = 0.005;
  CHECK(std::abs(v1 - analytic) / analytic < 0.05);
  CHECK(std::abs(v2 - analytic) / analytic < 0.05);
}

TEST_CASE("derived stream seeds differ per device") {
  const auto s0 = derive_stream_seed(1, 0);
  const auto s1 = derive_stream_seed(1, 1);
  const auto t0 = derive_stream_seed(2, 0);
  CHECK(s0 != s1);
  CHECK(s0 != t0);
  CHECK(derive_stream_seed(1, 0) == s0);
}

TEST_CASE("schedule value composes steps and ramps") {
  PerturbationSchedule sched({
      {100.0, {TargetKind::Load, 12}, EventKind::Step, 0.1, 0.0},
      {100.0, {TargetKind::Load, 7}, EventKind::Ramp, 0.2, 100.0},
  });
  const DeviceRef l12{TargetKind::Load, 12};
  const DeviceRef l7{TargetKind::Load, 7};
  CHECK(sched.value(l12, 50.0) == 0.0);
  CHECK(sched.value(l12, 150.0) == doctest::Approx(0.1));
  CHECK(sched.value(l7, 150.0) == doctest::Approx(0.1)); // ramp midpoint
  CHECK(sched.value(l7, 250.0) == doctest::Approx(0.2));
  CHECK(sched.value({TargetKind::Wind, 12}, 150.0) == 0.0); // wrong kind
}

TEST_CASE("trips are flags, not offsets") {
  PerturbationSchedule sched({{60.0, {TargetKind::Machine, 37}, EventKind::Trip, 0.0, 0.0}});
  CHECK(!sched.tripped(37, 59.9));
  CHECK(sched.tripped(37, 60.0));
  CHECK(sched.tripped(37, 1000.0));
  CHECK(!sched.tripped(38, 1000.0));
  CHECK(sched.value({TargetKind::Machine, 37}, 100.0) == 0.0);
}

TEST_CASE("ramp without duration is rejected") {
  CHECK_THROWS_AS(PerturbationSchedule({{10.0, {TargetKind::Load, 1},
                                         EventKind::Ramp, 0.1, 0.0}}),
                  ValidationError);
  CHECK_THROWS_AS(PerturbationSchedule({{10.0, {TargetKind::Load, 1},
                                         EventKind::Trip, 0.0, 0.0}}),
                  ValidationError);
}

TEST_CASE("device references parse and round-trip") {
  const auto r = parse_device_ref("wind:32");
  CHECK(r.kind == TargetKind::Wind);
  CHECK(r.bus == 32);
  CHECK(device_ref_to_string(r) == "wind:32");
  CHECK_THROWS_AS(parse_device_ref("windmill:1"), SchemaError);
  CHECK_THROWS_AS(parse_device_ref("wind"), SchemaError);
}

}  // TEST_SUITE
