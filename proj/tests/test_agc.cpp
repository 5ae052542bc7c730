#include <doctest.h>

#include <cmath>
#include <random>

#include "fqsim/agc.hpp"
#include "fqsim/errors.hpp"

using namespace fqsim;

TEST_SUITE("agc") {

TEST_CASE("integrator is inert at zero error") {
  AgcConfig cfg;
  cfg.enabled = true;
  CHECK(agc_integrate(cfg, 0.12, 1.0, 0.01) == doctest::Approx(0.12));
}

TEST_CASE("integrator arithmetic") {
  AgcConfig cfg;
  cfg.k_o = 50.0;
  // error 0.001 pu under-frequency for 0.01 s adds 5e-4 pu
  CHECK(agc_integrate(cfg, 0.0, 1.0 - 0.001, 0.01) == doctest::Approx(5e-4));
}

TEST_CASE("anti-windup freezes at the limit and resumes on error reversal") {
  AgcConfig cfg;
  cfg.k_o = 50.0;
  cfg.dp_max = 0.5;
  double dp = 0.5;
  // sustained under-frequency: pinned
  for (int i = 0; i < 100; ++i) dp = agc_integrate(cfg, dp, 0.999, 0.01);
  CHECK(dp == 0.5);
  // error reverses: integration resumes immediately
  dp = agc_integrate(cfg, dp, 1.001, 0.01);
  CHECK(dp == doctest::Approx(0.5 - 5e-4));
}

TEST_CASE("equal droops split the dispatch evenly") {
  AgcConfig cfg;
  DroopRegistry reg;
  reg.entries = {{0, 0.05, 100.0}, {1, 0.05, 200.0}};
  const auto shares = agc_sample(cfg, reg, 0.3);
  CHECK(shares[0] == doctest::Approx(0.15));
  CHECK(shares[1] == doctest::Approx(0.15));
}

TEST_CASE("droop-proportional shares, hand-evaluated") {
  AgcConfig cfg;
  DroopRegistry reg;
  reg.entries = {{0, 0.04, 1.0}, {1, 0.05, 1.0}, {2, 0.06, 1.0}};
  CHECK(reg.r_tot() == doctest::Approx(0.15));
  const auto shares = agc_sample(cfg, reg, 0.3);
  CHECK(shares[0] == doctest::Approx(0.08));
  CHECK(shares[1] == doctest::Approx(0.10));
  CHECK(shares[2] == doctest::Approx(0.12));
}

TEST_CASE("a tripped machine drops out and the rest re-normalize") {
  AgcConfig cfg;
  DroopRegistry reg;
  reg.entries = {{0, 0.04, 1.0}, {2, 0.06, 1.0}}; // machine 1 tripped
  const auto shares = agc_sample(cfg, reg, 0.3);
  CHECK(shares[0] == doctest::Approx(0.12));
  CHECK(shares[1] == doctest::Approx(0.18));
}

TEST_CASE("empty registry is an error") {
  AgcConfig cfg;
  DroopRegistry reg;
  CHECK_THROWS_AS(agc_sample(cfg, reg, 0.1), ValidationError);
}

TEST_CASE("conservation and proportionality hold on random registries") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ur(0.02, 0.08);
  std::uniform_real_distribution<double> us(50.0, 1200.0);
  std::uniform_real_distribution<double> ud(-0.6, 0.6);
  for (int trial = 0; trial < 200; ++trial) {
    AgcConfig cfg;
    const int n = 1 + static_cast<int>(rng() % 8);
    DroopRegistry reg;
    for (int i = 0; i < n; ++i) reg.entries.push_back({i, ur(rng), us(rng)});
    const double dp = ud(rng);
    const auto shares = agc_sample(cfg, reg, dp);
    double sum = 0.0;
    for (double s : shares) sum += s;
    CHECK(sum == doctest::Approx(dp).epsilon(1e-12));
    for (int i = 1; i < n; ++i) {
      // share_i / share_j == r_i / r_j
      if (std::abs(shares[0]) > 1e-15)
        CHECK(shares[i] / shares[0] ==
              doctest::Approx(reg.entries[i].r / reg.entries[0].r).epsilon(1e-10));
    }
  }
}

TEST_CASE("alternative share rules") {
  DroopRegistry reg;
  reg.entries = {{0, 0.04, 100.0}, {1, 0.08, 300.0}};
  AgcConfig cfg;
  cfg.share_rule = AgcShareRule::InverseDroop;
  auto shares = agc_sample(cfg, reg, 0.3);
  CHECK(shares[0] == doctest::Approx(0.2)); // 1/0.04 : 1/0.08 = 2 : 1
  CHECK(shares[1] == doctest::Approx(0.1));
  cfg.share_rule = AgcShareRule::Rating;
  shares = agc_sample(cfg, reg, 0.4);
  CHECK(shares[0] == doctest::Approx(0.1));
  CHECK(shares[1] == doctest::Approx(0.3));
  CHECK(parse_share_rule("droop") == AgcShareRule::Droop);
  CHECK_THROWS_AS(parse_share_rule("even"), SchemaError);
}

}  // TEST_SUITE
