#include "fqsim/devices.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "fqsim/errors.hpp"

namespace fqsim {

double deadband_offset(double x, double half_width) {
  if (x > half_width) return x - half_width;
  if (x < -half_width) return x + half_width;
  return 0.0;
}

// ---------------------------------------------------------------------------
// Synchronous machine

MachineCurrents machine_currents(const MachineParams& m, double delta, double eq_p,
                                 double ed_p, double v, double theta) {
  MachineCurrents out;
  const double ang = delta - theta;
  out.v_d = v * std::sin(ang);
  out.v_q = v * std::cos(ang);
  // Stator algebra with zero armature resistance:
  //   v_q = e'_q - x_d' i_d,  v_d = e'_d + x_q' i_q
  out.i_d = (eq_p - out.v_q) / m.x_d_p;
  out.i_q = (out.v_d - ed_p) / m.x_q_p;
  out.p_e = ed_p * out.i_d + eq_p * out.i_q + (m.x_q_p - m.x_d_p) * out.i_d * out.i_q;
  out.p_term = out.v_d * out.i_d + out.v_q * out.i_q;
  out.q_term = out.v_q * out.i_d - out.v_d * out.i_q;
  return out;
}

std::array<double, 4> machine_derivatives(const MachineParams& m, double delta,
                                          double omega, double eq_p, double ed_p,
                                          double v, double theta, double p_mech,
                                          double efd, double f_nom) {
  const auto c = machine_currents(m, delta, eq_p, ed_p, v, theta);
  const double omega_b = 2.0 * std::numbers::pi * f_nom;
  std::array<double, 4> d;
  d[0] = omega_b * (omega - 1.0);
  d[1] = (p_mech - c.p_e - m.d_pu * (omega - 1.0)) / (2.0 * m.h_s);
  d[2] = (-eq_p - (m.x_d - m.x_d_p) * c.i_d + efd) / m.t_d0_p;
  d[3] = (-ed_p + (m.x_q - m.x_q_p) * c.i_q) / m.t_q0_p;
  return d;
}

double exciter_derivative(const ExciterParams& e, double efd, double v, double v_ref) {
  double rate = (e.k_a * (v_ref - v) - efd) / e.t_a;
  if (efd >= e.efd_max && rate > 0) rate = 0.0; // windup freeze
  if (efd <= e.efd_min && rate < 0) rate = 0.0;
  return rate;
}

std::array<double, 2> governor_derivatives(const GovernorParams& g, double p_sv,
                                           double p_mech, double omega, double p_sched,
                                           double dp_agc, double f_nom) {
  const double db_pu = g.deadband_hz / f_nom;
  const double p_in = p_sched + dp_agc - deadband_offset(omega - 1.0, db_pu) / g.r;
  double sv_rate = (p_in - p_sv) / g.t_g;
  if (p_sv >= g.p_max && sv_rate > 0) sv_rate = 0.0;
  if (p_sv <= g.p_min && sv_rate < 0) sv_rate = 0.0;
  return {sv_rate, (p_sv - p_mech) / g.t_t};
}

double governor_steady_state(const GovernorParams& g, double omega, double p_sched,
                             double dp_agc, double f_nom) {
  const double db_pu = g.deadband_hz / f_nom;
  const double p = p_sched + dp_agc - deadband_offset(omega - 1.0, db_pu) / g.r;
  return std::clamp(p, g.p_min, g.p_max);
}

MachineEquilibrium init_machine(const MachineParams& m, double v, double theta,
                                double p_mach, double q_mach) {
  const std::string name = "machine at bus " + std::to_string(m.bus);
  if (v <= 0) throw InitializationError(name + ": terminal voltage must be > 0");

  using cplx = std::complex<double>;
  const cplx vt = std::polar(v, theta);
  const cplx s(p_mach, q_mach);
  const cplx it = std::conj(s / vt);
  // Rotor angle from the voltage behind x_q.
  const cplx e_int = vt + cplx(0.0, m.x_q) * it;
  const double delta = std::arg(e_int);

  const double ang = delta - theta;
  const double v_d = v * std::sin(ang);
  const double v_q = v * std::cos(ang);
  const double phi = std::arg(it);
  const double i_mag = std::abs(it);
  const double i_d = i_mag * std::sin(delta - phi);
  const double i_q = i_mag * std::cos(delta - phi);

  MachineEquilibrium eq;
  eq.state.delta = delta;
  eq.state.omega = 1.0;
  eq.state.eq_p = v_q + m.x_d_p * i_d;
  eq.state.ed_p = v_d - m.x_q_p * i_q;
  eq.state.efd = eq.state.eq_p + (m.x_d - m.x_d_p) * i_d;
  const double p_e = eq.state.ed_p * i_d + eq.state.eq_p * i_q +
                     (m.x_q_p - m.x_d_p) * i_d * i_q;
  eq.state.p_sv = p_e;
  eq.state.p_mech = p_e;
  eq.p_sched_mach = p_e;

  if (p_e > m.governor.p_max + 1e-9)
    throw InitializationError(name + ": scheduled power " + std::to_string(p_e) +
                              " exceeds governor p_max " +
                              std::to_string(m.governor.p_max));
  if (p_e < m.governor.p_min - 1e-9)
    throw InitializationError(name + ": scheduled power below governor p_min");
  if (eq.state.efd > m.exciter.efd_max || eq.state.efd < m.exciter.efd_min)
    throw InitializationError(name + ": field voltage " + std::to_string(eq.state.efd) +
                              " outside exciter limits");
  eq.v_ref = v + eq.state.efd / m.exciter.k_a;
  return eq;
}

// ---------------------------------------------------------------------------
// DFIG wind plant

double wind_cp(double lambda, double beta_deg) {
  // Heier coefficients, common in wind integration studies.
  const double c1 = 0.5176, c2 = 116.0, c3 = 0.4, c4 = 5.0, c5 = 21.0, c6 = 0.0068;
  const double li = 1.0 / (lambda + 0.08 * beta_deg) -
                    0.035 / (beta_deg * beta_deg * beta_deg + 1.0);
  const double cp = c1 * (c2 * li - c3 * beta_deg - c4) * std::exp(-c5 * li) + c6 * lambda;
  return std::max(cp, 0.0);
}

namespace {

double mppt_gain(const WindParams& w) {
  return w.k_mppt > 0 ? w.k_mppt
                      : w.p_rated / (w.omega_max * w.omega_max * w.omega_max);
}

}  // namespace

double apc_power_offset(double f_hz, double deadband_hz, double r_apc, double headroom,
                        double floor_value, double f_nom) {
  const double excess = deadband_offset(f_hz - f_nom, deadband_hz);
  if (excess == 0.0) return 0.0;
  // Under-frequency (negative excess) raises output.
  const double raw = -excess / f_nom / r_apc;
  return std::clamp(raw, floor_value, headroom);
}

DfigDerived dfig_outputs(const WindParams& w, const DfigContext& ctx, const DfigState& s,
                         double v, double wind_speed, double f_nom) {
  DfigDerived d;
  const double vw = std::max(wind_speed, 0.1);
  d.lambda = w.lambda_tip * s.omega_r / vw;
  d.p_mech = ctx.aero_gain * wind_cp(d.lambda, s.beta_deg) * vw * vw * vw;

  double p_ref = mppt_gain(w) * s.omega_r * s.omega_r * s.omega_r;
  if (ctx.apc_enabled) {
    p_ref -= ctx.p_curtail;
    p_ref += apc_power_offset(s.f_filt, ctx.apc_deadband_hz, w.r_apc, ctx.p_curtail,
                              -p_ref, f_nom);
  }
  d.p_ref = std::clamp(p_ref, 0.0, w.p_rated);

  d.p_elec = v * s.i_rq;
  d.q_elec = v * s.i_rd - v * v / w.x_m;
  return d;
}

std::array<double, 5> dfig_derivatives(const WindParams& w, const DfigContext& ctx,
                                       const DfigState& s, double v, double wind_speed,
                                       double f_meas_hz, double f_nom) {
  const auto d = dfig_outputs(w, ctx, s, v, wind_speed, f_nom);
  std::array<double, 5> out;

  // Torque balance; omega_r > 0 is a model invariant.
  const double t_m = d.p_mech / s.omega_r;
  const double t_e = d.p_elec / s.omega_r;
  out[0] = (t_m - t_e) / (2.0 * w.h_w);

  const double i_rd_ref = ctx.i_rd0 + w.k_voltage * (ctx.v_ref - v);
  out[1] = (i_rd_ref - s.i_rd) / w.t_voltage;

  const double i_rq_ref = d.p_ref / std::max(v, 0.2);
  out[2] = (i_rq_ref - s.i_rq) / w.t_power;

  const double beta_ref = w.k_pitch * std::max(0.0, s.omega_r - w.omega_max);
  double beta_rate = (beta_ref - s.beta_deg) / w.t_pitch;
  if (s.beta_deg >= w.beta_max_deg && beta_rate > 0) beta_rate = 0.0;
  if (s.beta_deg <= 0.0 && beta_rate < 0) beta_rate = 0.0;
  out[3] = beta_rate;

  out[4] = (f_meas_hz - s.f_filt) / w.t_fmeas;
  return out;
}

DfigEquilibrium init_dfig(const WindParams& w, double v, double p_mach, double q_mach,
                          bool apc_enabled, double apc_deadband_hz, double f_nom) {
  const std::string name = "wind plant at bus " + std::to_string(w.bus);
  if (p_mach <= 0)
    throw InitializationError(name + ": dispatch must be positive, got " +
                              std::to_string(p_mach));
  if (p_mach > w.p_rated + 1e-9)
    throw InitializationError(name + ": dispatch " + std::to_string(p_mach) +
                              " exceeds p_rated " + std::to_string(w.p_rated));

  DfigEquilibrium eq;
  eq.ctx.apc_enabled = apc_enabled;
  eq.ctx.apc_deadband_hz = apc_deadband_hz;
  eq.ctx.v_ref = v;
  eq.ctx.p_curtail = apc_enabled ? w.apc_headroom : 0.0;

  // The MPPT curve pins the rotor speed for the dispatched power. With APC the
  // plant runs curtailed, so the curve point sits at dispatch + headroom.
  const double p_curve = p_mach + eq.ctx.p_curtail;
  if (p_curve > w.p_rated + 1e-9)
    throw InitializationError(name + ": dispatch plus APC headroom exceeds p_rated");
  const double k = mppt_gain(w);
  double omega_r = std::cbrt(p_curve / k);
  if (omega_r < w.omega_min - 1e-9 || omega_r > w.omega_max + 1e-9)
    throw InitializationError(name + ": dispatch puts rotor speed " +
                              std::to_string(omega_r) + " outside [" +
                              std::to_string(w.omega_min) + ", " +
                              std::to_string(w.omega_max) + "]");
  omega_r = std::clamp(omega_r, w.omega_min, w.omega_max);
  eq.state.omega_r = omega_r;
  eq.state.beta_deg = 0.0;
  eq.state.f_filt = f_nom;
  eq.state.i_rq = p_mach / v;
  eq.state.i_rd = (q_mach + v * v / w.x_m) / v;
  eq.ctx.i_rd0 = eq.state.i_rd;

  // Calibrate the aerodynamic gain at rated conditions, then solve the
  // equilibrium wind speed p_mech(v_w) = p_mech_needed by bisection.
  const double lambda_rated = w.lambda_tip * w.omega_max / w.v_rated;
  eq.ctx.aero_gain =
      w.p_rated / (wind_cp(lambda_rated, 0.0) * w.v_rated * w.v_rated * w.v_rated);

  const double p_target = p_mach; // mechanical balances electrical at equilibrium
  auto p_mech_at = [&](double vw) {
    const double lambda = w.lambda_tip * omega_r / vw;
    return eq.ctx.aero_gain * wind_cp(lambda, 0.0) * vw * vw * vw;
  };
  double lo = 0.5, hi = w.v_rated * 1.5, f_lo = p_mech_at(lo) - p_target;
  // Scan up for a bracketing interval; the curve is not globally monotone.
  bool bracketed = false;
  const int scan_steps = 300;
  for (int i = 1; i <= scan_steps; ++i) {
    const double vw = 0.5 + (hi - 0.5) * i / scan_steps;
    const double f = p_mech_at(vw) - p_target;
    if (f_lo * f <= 0.0) {
      hi = vw;
      lo = vw - (hi - 0.5) / scan_steps;
      bracketed = true;
      break;
    }
    lo = vw;
    f_lo = f;
  }
  if (!bracketed)
    throw InitializationError(name + ": no equilibrium wind speed supports dispatch " +
                              std::to_string(p_mach));
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double f = p_mech_at(mid) - p_target;
    if (f_lo * f <= 0.0) hi = mid;
    else {
      lo = mid;
      f_lo = f;
    }
  }
  eq.wind_speed = 0.5 * (lo + hi);
  return eq;
}

// ---------------------------------------------------------------------------
// BESS

BessState bess_update(const BessParams& b, const BessState& s, double f_hz, double dt) {
  BessState next = s;
  if (s.mode == BessMode::Armed) {
    if (f_hz < b.f_trigger_hz) {
      next.under_timer = s.under_timer + dt;
      if (next.under_timer >= b.delay_s) {
        next.mode = BessMode::Active;
        next.under_timer = 0.0;
      }
    } else {
      next.under_timer = 0.0;
    }
  } else {
    if (f_hz > b.f_trigger_hz + b.hysteresis_hz) {
      next.mode = BessMode::Armed;
      next.under_timer = 0.0;
    }
  }
  return next;
}

double bess_power(const BessParams& b, const BessState& s) {
  return s.mode == BessMode::Active ? b.p_ffr : 0.0;
}

double load_power(double p0, double eta, double offset) {
  return std::max(0.0, p0 * (1.0 + eta) + offset);
}

}  // namespace fqsim
