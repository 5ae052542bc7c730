#pragma once

#include <array>

#include "fqsim/case.hpp"

namespace fqsim {

// Offset deadband: zero inside, excess beyond the edge outside. Continuous at
// the boundary.
double deadband_offset(double x, double half_width);

// ---------------------------------------------------------------------------
// Synchronous machine, two-axis model. States delta [rad], omega [pu],
// e'_q, e'_d [pu machine base]. Terminal quantities pu on machine voltage base.

struct MachineState {
  double delta = 0.0;
  double omega = 1.0;
  double eq_p = 0.0;
  double ed_p = 0.0;
  double efd = 0.0;    // exciter state
  double p_sv = 0.0;   // governor servo state, machine base
  double p_mech = 0.0; // turbine output, machine base
};

struct MachineCurrents {
  double i_d = 0.0;
  double i_q = 0.0;
  double v_d = 0.0;
  double v_q = 0.0;
  double p_e = 0.0;    // air-gap power, machine base
  double p_term = 0.0; // terminal injection, machine base
  double q_term = 0.0;
};

MachineCurrents machine_currents(const MachineParams& m, double delta, double eq_p,
                                 double ed_p, double v, double theta);

// d/dt of (delta, omega, e'_q, e'_d) given terminal voltage, mechanical power
// and field voltage. Pure function.
std::array<double, 4> machine_derivatives(const MachineParams& m, double delta,
                                          double omega, double eq_p, double ed_p,
                                          double v, double theta, double p_mech,
                                          double efd, double f_nom);

// d/dt of efd. Freezes against an active limit.
double exciter_derivative(const ExciterParams& e, double efd, double v, double v_ref);

// d/dt of (p_sv, p_mech). dp_agc is the held AGC share on machine base;
// p_sched the scheduled dispatch on machine base. Servo freezes at its limits.
std::array<double, 2> governor_derivatives(const GovernorParams& g, double p_sv,
                                           double p_mech, double omega, double p_sched,
                                           double dp_agc, double f_nom);

// Steady-state turbine output for a held speed deviation (test / documentation
// helper; the dynamic path integrates governor_derivatives).
double governor_steady_state(const GovernorParams& g, double omega, double p_sched,
                             double dp_agc, double f_nom);

struct MachineEquilibrium {
  MachineState state;
  double v_ref = 0.0;        // exciter reference
  double p_sched_mach = 0.0; // machine-base dispatch matching the power flow
};

// Back-solves machine, exciter and governor states from power-flow terminal
// conditions (p, q on machine base). Throws InitializationError if the
// operating point violates a limit.
MachineEquilibrium init_machine(const MachineParams& m, double v, double theta,
                                double p_mach, double q_mach);

// ---------------------------------------------------------------------------
// DFIG wind plant. States: rotor speed [pu], d/q rotor current states
// [pu machine base], pitch angle [deg], filtered frequency [Hz].

struct DfigState {
  double omega_r = 1.0;
  double i_rd = 0.0;
  double i_rq = 0.0;
  double beta_deg = 0.0;
  double f_filt = 50.0;
};

// Heier performance-coefficient approximation.
double wind_cp(double lambda, double beta_deg);

struct DfigDerived {
  double lambda = 0.0;
  double p_mech = 0.0; // pu machine base
  double p_elec = 0.0;
  double q_elec = 0.0;
  double p_ref = 0.0;  // commanded electrical power after MPPT/APC/limits
};

struct DfigContext {
  double aero_gain = 0.0;   // calibrated so the initial point is an equilibrium
  double v_ref = 1.0;       // terminal voltage reference
  double i_rd0 = 0.0;       // reactive current bias from the power flow
  double p_curtail = 0.0;   // upward headroom carried when APC is enabled
  bool apc_enabled = false;
  double apc_deadband_hz = 0.2;
};

DfigDerived dfig_outputs(const WindParams& w, const DfigContext& ctx, const DfigState& s,
                         double v, double wind_speed, double f_nom);

// APC droop response: zero inside the deadband, linear outside, clipped to
// [floor, headroom]. f in Hz, result pu on machine base.
double apc_power_offset(double f_hz, double deadband_hz, double r_apc, double headroom,
                        double floor_value, double f_nom);

// d/dt of the 5 DFIG states.
std::array<double, 5> dfig_derivatives(const WindParams& w, const DfigContext& ctx,
                                       const DfigState& s, double v, double wind_speed,
                                       double f_meas_hz, double f_nom);

struct DfigEquilibrium {
  DfigState state;
  DfigContext ctx;
  double wind_speed = 0.0; // equilibrium wind speed implied by the dispatch, m/s
};

// Back-solves rotor speed, currents and the equilibrium wind speed from the
// power-flow terminal conditions (p, q machine base). Throws
// InitializationError when the dispatch cannot sit on the turbine curve.
DfigEquilibrium init_dfig(const WindParams& w, double v, double p_mach, double q_mach,
                          bool apc_enabled, double apc_deadband_hz, double f_nom);

// ---------------------------------------------------------------------------
// BESS fast frequency response. Discrete trigger state, part of z.

enum class BessMode { Armed, Active };

struct BessState {
  BessMode mode = BessMode::Armed;
  double under_timer = 0.0; // s spent below trigger while armed
};

// Advances the trigger state machine across one step boundary.
BessState bess_update(const BessParams& b, const BessState& s, double f_hz, double dt);

// Injection for the current state, pu system base.
double bess_power(const BessParams& b, const BessState& s);

// ---------------------------------------------------------------------------
// Load with multiplicative noise and additive schedule offset.
// p = max(0, p0*(1 + eta) + offset), q held at q0.
double load_power(double p0, double eta, double offset);

}  // namespace fqsim
