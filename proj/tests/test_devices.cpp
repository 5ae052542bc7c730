#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "fqsim/devices.hpp"
#include "fqsim/errors.hpp"

using namespace fqsim;

namespace {

MachineParams test_machine() {
  MachineParams m;
  m.bus = 1;
  m.s_mva = 500.0;
  m.h_s = 4.0;
  m.d_pu = 2.0;
  m.x_d = 1.8;
  m.x_d_p = 0.3;
  m.x_q = 1.7;
  m.x_q_p = 0.55;
  m.t_d0_p = 6.0;
  m.t_q0_p = 0.8;
  m.governor.p_max = 1.0;
  return m;
}

WindParams test_wind() {
  WindParams w;
  w.bus = 2;
  w.s_mva = 300.0;
  return w;
}

}  // namespace

TEST_SUITE("devices") {

TEST_CASE("deadband is continuous at the edge") {
  CHECK(deadband_offset(0.0002, 0.0003) == 0.0);
  CHECK(deadband_offset(0.0005, 0.0003) == doctest::Approx(0.0002));
  CHECK(deadband_offset(-0.0005, 0.0003) == doctest::Approx(-0.0002));
  CHECK(deadband_offset(0.0003, 0.0003) == 0.0);
}

TEST_CASE("machine back-solve lands on an equilibrium") {
  const auto m = test_machine();
  const double v = 1.02, theta = 0.1, p = 0.8, q = 0.25;
  const auto eq = init_machine(m, v, theta, p, q);
  const auto d = machine_derivatives(m, eq.state.delta, eq.state.omega, eq.state.eq_p,
                                     eq.state.ed_p, v, theta, eq.state.p_mech,
                                     eq.state.efd, 50.0);
  for (double r : d) CHECK(std::abs(r) < 1e-9);
  CHECK(exciter_derivative(m.exciter, eq.state.efd, v, eq.v_ref) ==
        doctest::Approx(0.0).epsilon(1e-9));
  const auto g = governor_derivatives(m.governor, eq.state.p_sv, eq.state.p_mech, 1.0,
                                      eq.p_sched_mach, 0.0, 50.0);
  CHECK(std::abs(g[0]) < 1e-12);
  CHECK(std::abs(g[1]) < 1e-12);
  // Terminal power reproduces the inputs.
  const auto cur = machine_currents(m, eq.state.delta, eq.state.eq_p, eq.state.ed_p,
                                    v, theta);
  CHECK(cur.p_term == doctest::Approx(p).epsilon(1e-10));
  CHECK(cur.q_term == doctest::Approx(q).epsilon(1e-10));
}

TEST_CASE("swing equation algebra: dw/dt = (p_m - p_e)/(2H) at no damping") {
  auto m = test_machine();
  m.d_pu = 0.0;
  const auto eq = init_machine(m, 1.0, 0.0, 0.7, 0.1);
  // Raise mechanical power by 0.1 pu above electrical.
  const auto d = machine_derivatives(m, eq.state.delta, 1.0, eq.state.eq_p,
                                     eq.state.ed_p, 1.0, 0.0, eq.state.p_mech + 0.1,
                                     eq.state.efd, 50.0);
  CHECK(d[1] == doctest::Approx(0.1 / (2.0 * m.h_s)).epsilon(1e-9));
}

TEST_CASE("governor holds scheduled output inside the deadband") {
  GovernorParams g;
  const double omega = 1.0 + 0.0002; // 10 mHz, inside the 15 mHz band
  CHECK(governor_steady_state(g, omega, 0.8, 0.0, 50.0) == doctest::Approx(0.8));
  const auto d = governor_derivatives(g, 0.8, 0.8, omega, 0.8, 0.0, 50.0);
  CHECK(d[0] == doctest::Approx(0.0));
  CHECK(d[1] == doctest::Approx(0.0));
}

TEST_CASE("governor steady state beyond the deadband follows the droop") {
  GovernorParams g; // r = 0.05
  // 0.004 pu beyond the deadband edge below nominal
  const double omega = 1.0 - (0.004 + g.deadband_hz / 50.0);
  const double pm = governor_steady_state(g, omega, 0.8, 0.0, 50.0);
  CHECK(pm - 0.8 == doctest::Approx(0.004 / 0.05).epsilon(1e-12)); // +0.08 pu
}

TEST_CASE("governor saturates at p_max") {
  GovernorParams g;
  g.p_max = 0.9;
  const double omega = 0.98; // huge deviation -> command far above p_max
  CHECK(governor_steady_state(g, omega, 0.85, 0.0, 50.0) == doctest::Approx(0.9));
  // servo freezes against the limit
  const auto d = governor_derivatives(g, 0.9, 0.9, omega, 0.85, 0.0, 50.0);
  CHECK(d[0] == 0.0);
}

TEST_CASE("APC droop response") {
  // inside the 200 mHz deadband
  CHECK(apc_power_offset(50.1, 0.2, 0.04, 0.1, -1.0, 50.0) == 0.0);
  // worked example: f = 49.7, deadband 0.2 -> excess 0.1 Hz = 0.002 pu,
  // 0.002/0.04 = 0.05, below the 0.1 headroom
  CHECK(apc_power_offset(49.7, 0.2, 0.04, 0.1, -1.0, 50.0) ==
        doctest::Approx(0.05).epsilon(1e-12));
  // headroom clips
  CHECK(apc_power_offset(49.0, 0.2, 0.04, 0.1, -1.0, 50.0) == doctest::Approx(0.1));
  // switching the deadband to 15 mHz activates for small deviations
  CHECK(apc_power_offset(49.95, 0.2, 0.04, 0.1, -1.0, 50.0) == 0.0);
  CHECK(apc_power_offset(49.95, 0.015, 0.04, 0.1, -1.0, 50.0) > 0.0);
  // over-frequency curtails down to the floor
  CHECK(apc_power_offset(50.5, 0.2, 0.04, 0.1, -0.02, 50.0) == doctest::Approx(-0.02));
}

TEST_CASE("BESS trigger state machine") {
  BessParams b; // 49.8 Hz trigger, 0.15 s delay, 50 mHz hysteresis
  b.p_ffr = 0.5;
  BessState s;
  // above trigger: stays armed
  s = bess_update(b, s, 49.85, 0.01);
  CHECK(s.mode == BessMode::Armed);
  CHECK(bess_power(b, s) == 0.0);
  // below trigger but shorter than the delay: still armed
  for (int i = 0; i < 14; ++i) s = bess_update(b, s, 49.75, 0.01);
  CHECK(s.mode == BessMode::Armed);
  // sustained past the delay: activates
  s = bess_update(b, s, 49.75, 0.01);
  CHECK(s.mode == BessMode::Active);
  CHECK(bess_power(b, s) == 0.5);
  // recovery to 49.83 < trigger + hysteresis: stays active
  s = bess_update(b, s, 49.83, 0.01);
  CHECK(s.mode == BessMode::Active);
  // beyond 49.85: releases
  s = bess_update(b, s, 49.86, 0.01);
  CHECK(s.mode == BessMode::Armed);
  // a dip interrupted before the delay re-arms the timer
  s = bess_update(b, s, 49.75, 0.01);
  s = bess_update(b, s, 49.85, 0.01);
  CHECK(s.under_timer == 0.0);
}

TEST_CASE("DFIG equilibrium from dispatch") {
  const auto w = test_wind();
  const auto eq = init_dfig(w, 1.0, 0.8333, 0.1, false, 0.2, 50.0);
  CHECK(eq.state.omega_r > w.omega_min);
  CHECK(eq.state.omega_r < w.omega_max);
  CHECK(eq.wind_speed > 3.0);
  CHECK(eq.wind_speed < w.v_rated);
  const auto d = dfig_derivatives(w, eq.ctx, eq.state, 1.0, eq.wind_speed, 50.0, 50.0);
  for (double r : d) CHECK(std::abs(r) < 1e-9);
  // electrical power reproduces the dispatch
  const auto o = dfig_outputs(w, eq.ctx, eq.state, 1.0, eq.wind_speed, 50.0);
  CHECK(o.p_elec == doctest::Approx(0.8333).epsilon(1e-9));
  CHECK(o.q_elec == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("DFIG rejects an infeasible dispatch") {
  const auto w = test_wind();
  CHECK_THROWS_AS(init_dfig(w, 1.0, 1.2, 0.0, false, 0.2, 50.0), InitializationError);
  CHECK_THROWS_AS(init_dfig(w, 1.0, -0.1, 0.0, false, 0.2, 50.0), InitializationError);
}

// Standalone integration of the 5-state subsystem at fixed terminal voltage:
// the oracle for the wind-step and pitch examples.
namespace {
DfigState integrate_dfig(const WindParams& w, const DfigContext& ctx, DfigState s,
                         double v, double wind_speed, double t_end, double dt) {
  const int n = static_cast<int>(t_end / dt);
  for (int k = 0; k < n; ++k) {
    const auto d = dfig_derivatives(w, ctx, s, v, wind_speed, 50.0, 50.0);
    s.omega_r += dt * d[0];
    s.i_rd += dt * d[1];
    s.i_rq += dt * d[2];
    s.beta_deg = std::clamp(s.beta_deg + dt * d[3], 0.0, w.beta_max_deg);
    s.f_filt += dt * d[4];
  }
  return s;
}
}  // namespace

TEST_CASE("wind step below rated moves power monotonically to the new MPPT point") {
  const auto w = test_wind();
  const auto eq = init_dfig(w, 1.0, 0.7, 0.05, false, 0.2, 50.0);
  DfigState s = eq.state;
  const double v_new = eq.wind_speed + 1.0;
  double prev_p = 0.7;
  bool monotone = true;
  const double dt = 0.002;
  for (int k = 0; k < 40000; ++k) {
    const auto d = dfig_derivatives(w, eq.ctx, s, 1.0, v_new, 50.0, 50.0);
    s.omega_r += dt * d[0];
    s.i_rd += dt * d[1];
    s.i_rq += dt * d[2];
    s.beta_deg = std::clamp(s.beta_deg + dt * d[3], 0.0, w.beta_max_deg);
    s.f_filt += dt * d[4];
    const double p = 1.0 * s.i_rq;
    if (p < prev_p - 1e-6) monotone = false;
    prev_p = p;
  }
  CHECK(monotone);
  CHECK(prev_p > 0.7);
  // settled on the MPPT curve at the higher wind speed
  const double k_opt = w.p_rated / (w.omega_max * w.omega_max * w.omega_max);
  CHECK(prev_p == doctest::Approx(k_opt * std::pow(s.omega_r, 3.0)).epsilon(1e-3));
}

TEST_CASE("above-rated wind engages pitch and holds rated power within 2%") {
  const auto w = test_wind();
  // start at the rated point
  const auto eq = init_dfig(w, 1.0, 1.0, 0.0, false, 0.2, 50.0);
  const double v_above = w.v_rated + 3.0;
  const auto s = integrate_dfig(w, eq.ctx, eq.state, 1.0, v_above, 120.0, 0.002);
  CHECK(s.beta_deg > 0.5);
  CHECK(1.0 * s.i_rq == doctest::Approx(w.p_rated).epsilon(0.02));
}

TEST_CASE("load power composes noise and offsets and clamps at zero") {
  CHECK(load_power(1.0, 0.02, 0.1) == doctest::Approx(1.12));
  CHECK(load_power(1.0, -0.5, -0.6) == 0.0);
}

}  // TEST_SUITE
