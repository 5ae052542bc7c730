#include "fqsim/solver.hpp"

#include <bit>
#include <cmath>
#include <numbers>

#include "fqsim/errors.hpp"

namespace fqsim {

// ---------------------------------------------------------------------------
// Trapezoidal Newton core

void trapezoidal_step(const DaeSystem& sys, double dt, double tol, int max_iter,
                      Eigen::VectorXd& x, Eigen::VectorXd& y, NewtonWorkspace& ws) {
  const int nx = sys.n_states();
  const int ny = sys.n_algebraic();
  const int n = nx + ny;

  ws.f_old.resize(nx);
  sys.eval_f(x, y, ws.f_old);

  Eigen::VectorXd x_new = x + dt * ws.f_old; // explicit predictor
  Eigen::VectorXd y_new = y;
  ws.f_new.resize(nx);
  ws.g_new.resize(ny);
  ws.residual.resize(n);

  double norm = 0.0;
  for (int iter = 0; iter <= max_iter; ++iter) {
    sys.eval_f(x_new, y_new, ws.f_new);
    if (ny > 0) sys.eval_g(x_new, y_new, ws.g_new);
    ws.residual.head(nx) = x_new - x - 0.5 * dt * (ws.f_new + ws.f_old);
    if (ny > 0) ws.residual.tail(ny) = ws.g_new;
    norm = ws.residual.lpNorm<Eigen::Infinity>();
    if (norm < tol) {
      x = x_new;
      y = y_new;
      return;
    }
    if (iter == max_iter) break;

    ws.model_trip.clear();
    sys.jacobian(x_new, y_new, ws.model_trip);
    ws.step_trip.clear();
    ws.step_trip.reserve(ws.model_trip.size() + nx);
    for (const auto& t : ws.model_trip) {
      if (t.row() < nx)
        ws.step_trip.emplace_back(t.row(), t.col(), -0.5 * dt * t.value());
      else
        ws.step_trip.emplace_back(t.row(), t.col(), t.value());
    }
    for (int i = 0; i < nx; ++i) ws.step_trip.emplace_back(i, i, 1.0);

    ws.jac.resize(n, n);
    ws.jac.setFromTriplets(ws.step_trip.begin(), ws.step_trip.end());
    if (!ws.pattern_ready) {
      ws.lu.analyzePattern(ws.jac);
      ws.pattern_ready = true;
    }
    ws.lu.factorize(ws.jac);
    if (ws.lu.info() != Eigen::Success) {
      // Pattern may have shifted (e.g. discrete-state change); re-analyze once.
      ws.lu.analyzePattern(ws.jac);
      ws.lu.factorize(ws.jac);
      if (ws.lu.info() != Eigen::Success)
        throw ConvergenceError("step Jacobian is singular", norm);
    }
    ws.delta = ws.lu.solve(ws.residual);
    x_new -= ws.delta.head(nx);
    y_new -= ws.delta.tail(ny);
  }
  throw ConvergenceError("Newton iteration did not reach " + std::to_string(tol) +
                             " within " + std::to_string(max_iter) +
                             " iterations (residual " + std::to_string(norm) + ")",
                         norm);
}

// ---------------------------------------------------------------------------
// GridModel

namespace {

constexpr int kMachStates = 7;  // delta, omega, e'q, e'd, efd, p_sv, p_mech
constexpr int kWindStates = 5;  // omega_r, i_rd, i_rq, beta, f_filt

// delta, omega, eq_p, ed_p slot names for readability below
enum MachSlot { M_DELTA = 0, M_OMEGA, M_EQP, M_EDP, M_EFD, M_PSV, M_PM };
enum WindSlot { W_OMEGA = 0, W_IRD, W_IRQ, W_BETA, W_FFILT };

}  // namespace

GridModel::GridModel(const PowerSystemCase& c, const Scenario& sc)
    : case_(c), scenario_(sc) {
  pf_ = solve_power_flow(case_);
  ybus_ = build_ybus(case_);
  assemble_indices();

  // Generator terminal conditions: net injection plus co-located load.
  std::vector<double> p_gen(n_bus_, 0.0), q_gen(n_bus_, 0.0);
  for (int b = 0; b < n_bus_; ++b) {
    p_gen[b] = pf_.p_inj[b];
    q_gen[b] = pf_.q_inj[b];
  }
  for (const auto& l : case_.loads) {
    const int b = case_.bus_index(l.bus);
    p_gen[b] += l.p;
    q_gen[b] += l.q;
  }

  mach_eq_.reserve(case_.machines.size());
  for (const auto& m : case_.machines) {
    const int b = case_.bus_index(m.bus);
    const double k = m.s_mva / case_.base_mva;
    mach_eq_.push_back(init_machine(m, pf_.v[b], pf_.theta[b], p_gen[b] / k,
                                    q_gen[b] / k));
  }
  dfig_eq_.reserve(case_.wind_plants.size());
  for (const auto& w : case_.wind_plants) {
    const int b = case_.bus_index(w.bus);
    const double k = w.s_mva / case_.base_mva;
    dfig_eq_.push_back(init_dfig(w, pf_.v[b], p_gen[b] / k, q_gen[b] / k,
                                 scenario_.apc_enabled, scenario_.apc_deadband_hz,
                                 case_.f_nom));
  }
  load_v0_.reserve(case_.loads.size());
  for (const auto& l : case_.loads) load_v0_.push_back(pf_.v[case_.bus_index(l.bus)]);
}

void GridModel::assemble_indices() {
  n_bus_ = static_cast<int>(case_.buses.size());
  const int n_mach = static_cast<int>(case_.machines.size());
  const int n_wind = static_cast<int>(case_.wind_plants.size());
  mach_off_.resize(n_mach);
  for (int i = 0; i < n_mach; ++i) mach_off_[i] = kMachStates * i;
  wind_off_.resize(n_wind);
  for (int j = 0; j < n_wind; ++j)
    wind_off_[j] = kMachStates * n_mach + kWindStates * j;
  agc_off_ = kMachStates * n_mach + kWindStates * n_wind;
  n_x_ = agc_off_ + 1;
  n_y_ = 2 * n_bus_;

  eta_ = Eigen::VectorXd::Zero(case_.loads.size() + case_.wind_plants.size());
  z_.machine_in_service.assign(n_mach, true);
  z_.bess.assign(case_.bess_units.size(), BessState{});
  z_.agc_shares.assign(n_mach, 0.0);
  load_off_.assign(case_.loads.size(), 0.0);
  wind_off_ramp_.assign(case_.wind_plants.size(), 0.0);
}

void GridModel::set_step_context(const Eigen::VectorXd& eta, const DiscreteState& z,
                                 const std::vector<double>& load_offsets,
                                 const std::vector<double>& wind_offsets) {
  eta_ = eta;
  z_ = z;
  load_off_ = load_offsets;
  wind_off_ramp_ = wind_offsets;
}

double GridModel::coi_omega(const Eigen::VectorXd& x, const DiscreteState& z) const {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < case_.machines.size(); ++i) {
    if (!z.machine_in_service[i]) continue;
    const double w = case_.machines[i].h_s * case_.machines[i].s_mva;
    num += w * x[mach_off_[i] + M_OMEGA];
    den += w;
  }
  if (den <= 0)
    throw ValidationError("center-of-inertia frequency undefined: no machine in service");
  return num / den;
}

DroopRegistry GridModel::droop_registry(const DiscreteState& z) const {
  DroopRegistry reg;
  const auto& participants = scenario_.agc.participants;
  for (std::size_t i = 0; i < case_.machines.size(); ++i) {
    if (!z.machine_in_service[i]) continue;
    if (!participants.empty() &&
        std::find(participants.begin(), participants.end(), case_.machines[i].bus) ==
            participants.end())
      continue;
    reg.entries.push_back({static_cast<int>(i), case_.machines[i].governor.r,
                           case_.machines[i].s_mva});
  }
  return reg;
}

void GridModel::eval_f(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                       Eigen::VectorXd& f) const {
  f.setZero(n_x_);
  const double f_nom = case_.f_nom;
  const double w_coi = coi_omega(x, z_);

  for (std::size_t i = 0; i < case_.machines.size(); ++i) {
    if (!z_.machine_in_service[i]) continue; // frozen states
    const auto& m = case_.machines[i];
    const int off = mach_off_[i];
    const int b = case_.bus_index(m.bus);
    const double v = y[v_index(b)], th = y[theta_index(b)];
    const auto d4 = machine_derivatives(m, x[off + M_DELTA], x[off + M_OMEGA],
                                        x[off + M_EQP], x[off + M_EDP], v, th,
                                        x[off + M_PM], x[off + M_EFD], f_nom);
    f[off + M_DELTA] = d4[0];
    f[off + M_OMEGA] = d4[1];
    f[off + M_EQP] = d4[2];
    f[off + M_EDP] = d4[3];
    f[off + M_EFD] = exciter_derivative(m.exciter, x[off + M_EFD], v, mach_eq_[i].v_ref);
    const double dp_agc_mach = z_.agc_shares[i] * case_.base_mva / m.s_mva;
    const auto g2 = governor_derivatives(m.governor, x[off + M_PSV], x[off + M_PM],
                                         x[off + M_OMEGA], mach_eq_[i].p_sched_mach,
                                         dp_agc_mach, f_nom);
    f[off + M_PSV] = g2[0];
    f[off + M_PM] = g2[1];
  }

  for (std::size_t j = 0; j < case_.wind_plants.size(); ++j) {
    const auto& w = case_.wind_plants[j];
    const int off = wind_off_[j];
    const int b = case_.bus_index(w.bus);
    DfigState s{x[off + W_OMEGA], x[off + W_IRD], x[off + W_IRQ], x[off + W_BETA],
                x[off + W_FFILT]};
    const double wind_speed = dfig_eq_[j].wind_speed +
                              eta_[case_.loads.size() + j] + wind_off_ramp_[j];
    const double f_meas = f_nom * w_coi;
    const auto d5 = dfig_derivatives(w, dfig_eq_[j].ctx, s, y[v_index(b)], wind_speed,
                                     f_meas, f_nom);
    for (int k = 0; k < kWindStates; ++k) f[off + k] = d5[k];
  }

  if (scenario_.agc.enabled) {
    const auto& a = scenario_.agc;
    double rate = a.k_o * (1.0 - w_coi);
    const double dp = x[agc_off_];
    if ((dp >= a.dp_max && rate > 0) || (dp <= a.dp_min && rate < 0)) rate = 0.0;
    f[agc_off_] = rate;
  }
}

void GridModel::bus_power_balance(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                  std::vector<double>& p_bal,
                                  std::vector<double>& q_bal) const {
  p_bal.assign(n_bus_, 0.0);
  q_bal.assign(n_bus_, 0.0);

  // Network flow (absorption positive).
  for (int k = 0; k < ybus_.outerSize(); ++k) {
    for (Eigen::SparseMatrix<std::complex<double>>::InnerIterator it(ybus_, k); it; ++it) {
      const int i = static_cast<int>(it.row());
      const int jj = static_cast<int>(it.col());
      const double g = it.value().real(), b = it.value().imag();
      const double vi = y[v_index(i)], vj = y[v_index(jj)];
      const double th = y[theta_index(i)] - y[theta_index(jj)];
      p_bal[i] -= vi * vj * (g * std::cos(th) + b * std::sin(th));
      q_bal[i] -= vi * vj * (g * std::sin(th) - b * std::cos(th));
    }
  }

  for (std::size_t i = 0; i < case_.machines.size(); ++i) {
    if (!z_.machine_in_service[i]) continue;
    const auto& m = case_.machines[i];
    const int off = mach_off_[i];
    const int b = case_.bus_index(m.bus);
    const auto cur = machine_currents(m, x[off + M_DELTA], x[off + M_EQP],
                                      x[off + M_EDP], y[v_index(b)], y[theta_index(b)]);
    const double k = m.s_mva / case_.base_mva;
    p_bal[b] += k * cur.p_term;
    q_bal[b] += k * cur.q_term;
  }

  for (std::size_t j = 0; j < case_.wind_plants.size(); ++j) {
    const auto& w = case_.wind_plants[j];
    const int off = wind_off_[j];
    const int b = case_.bus_index(w.bus);
    const double v = y[v_index(b)];
    const double k = w.s_mva / case_.base_mva;
    p_bal[b] += k * v * x[off + W_IRQ];
    q_bal[b] += k * (v * x[off + W_IRD] - v * v / w.x_m);
  }

  for (std::size_t u = 0; u < case_.bess_units.size(); ++u) {
    const int b = case_.bus_index(case_.bess_units[u].bus);
    p_bal[b] += bess_power(case_.bess_units[u], z_.bess[u]);
  }

  for (std::size_t l = 0; l < case_.loads.size(); ++l) {
    const auto& ld = case_.loads[l];
    const int b = case_.bus_index(ld.bus);
    double p = load_power(ld.p, eta_[l], load_off_[l]);
    double q = ld.q;
    if (scenario_.constant_impedance_loads) {
      const double vr = y[v_index(b)] / load_v0_[l];
      p *= vr * vr;
      q *= vr * vr;
    }
    p_bal[b] -= p;
    q_bal[b] -= q;
  }
}

void GridModel::eval_g(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                       Eigen::VectorXd& g) const {
  std::vector<double> p_bal, q_bal;
  bus_power_balance(x, y, p_bal, q_bal);
  g.resize(n_y_);
  for (int b = 0; b < n_bus_; ++b) {
    g[theta_index(b)] = p_bal[b];
    g[v_index(b)] = q_bal[b];
  }
}

void GridModel::jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                         std::vector<Eigen::Triplet<double>>& out) const {
  const double f_nom = case_.f_nom;
  const int gx = n_x_; // g rows start here in the combined matrix
  const auto col_x = [](int idx) { return idx; };
  const auto col_th = [&](int b) { return n_x_ + theta_index(b); };
  const auto col_v = [&](int b) { return n_x_ + v_index(b); };

  double coi_den = 0.0;
  for (std::size_t i = 0; i < case_.machines.size(); ++i)
    if (z_.machine_in_service[i])
      coi_den += case_.machines[i].h_s * case_.machines[i].s_mva;

  // --- machine blocks ---
  // Entries are emitted for every machine, zero-valued when out of service or
  // frozen at a limit, so the sparsity pattern never changes mid-run.
  for (std::size_t i = 0; i < case_.machines.size(); ++i) {
    const auto& m = case_.machines[i];
    const int off = mach_off_[i];
    const int b = case_.bus_index(m.bus);
    const double act = z_.machine_in_service[i] ? 1.0 : 0.0;

    const double delta = x[off + M_DELTA], omega = x[off + M_OMEGA];
    const double eq_p = x[off + M_EQP], ed_p = x[off + M_EDP];
    const double efd = x[off + M_EFD], p_sv = x[off + M_PSV];
    const double v = y[v_index(b)], th = y[theta_index(b)];

    const double ang = delta - th;
    const double sa = std::sin(ang), ca = std::cos(ang);
    const double v_d = v * sa, v_q = v * ca;
    const double i_d = (eq_p - v_q) / m.x_d_p;
    const double i_q = (v_d - ed_p) / m.x_q_p;

    // partials of i_d, i_q wrt (delta, eq_p, ed_p, V, theta)
    const double did_dd = v_d / m.x_d_p, did_de = 1.0 / m.x_d_p;
    const double did_dv = -ca / m.x_d_p, did_dth = -v_d / m.x_d_p;
    const double diq_dd = v_q / m.x_q_p, diq_ded = -1.0 / m.x_q_p;
    const double diq_dv = sa / m.x_q_p, diq_dth = -v_q / m.x_q_p;

    const double omega_b = 2.0 * std::numbers::pi * f_nom;
    out.emplace_back(off + M_DELTA, col_x(off + M_OMEGA), act * omega_b);

    // swing row: (p_m - p_e - D(w-1)) / 2H
    const double A = ed_p + (m.x_q_p - m.x_d_p) * i_q; // dp_e/di_d
    const double B = eq_p + (m.x_q_p - m.x_d_p) * i_d; // dp_e/di_q
    const double two_h = 2.0 * m.h_s;
    const double dpe_dd = A * did_dd + B * diq_dd;
    const double dpe_deq = i_q + A * did_de;
    const double dpe_ded = i_d + B * diq_ded;
    const double dpe_dv = A * did_dv + B * diq_dv;
    const double dpe_dth = A * did_dth + B * diq_dth;
    out.emplace_back(off + M_OMEGA, col_x(off + M_DELTA), -act * dpe_dd / two_h);
    out.emplace_back(off + M_OMEGA, col_x(off + M_OMEGA), -act * m.d_pu / two_h);
    out.emplace_back(off + M_OMEGA, col_x(off + M_EQP), -act * dpe_deq / two_h);
    out.emplace_back(off + M_OMEGA, col_x(off + M_EDP), -act * dpe_ded / two_h);
    out.emplace_back(off + M_OMEGA, col_x(off + M_PM), act / two_h);
    out.emplace_back(off + M_OMEGA, col_v(b), -act * dpe_dv / two_h);
    out.emplace_back(off + M_OMEGA, col_th(b), -act * dpe_dth / two_h);

    // e'_q row
    const double xd_diff = m.x_d - m.x_d_p;
    out.emplace_back(off + M_EQP, col_x(off + M_DELTA),
                     -act * xd_diff * did_dd / m.t_d0_p);
    out.emplace_back(off + M_EQP, col_x(off + M_EQP),
                     act * (-1.0 - xd_diff * did_de) / m.t_d0_p);
    out.emplace_back(off + M_EQP, col_x(off + M_EFD), act / m.t_d0_p);
    out.emplace_back(off + M_EQP, col_v(b), -act * xd_diff * did_dv / m.t_d0_p);
    out.emplace_back(off + M_EQP, col_th(b), -act * xd_diff * did_dth / m.t_d0_p);

    // e'_d row
    const double xq_diff = m.x_q - m.x_q_p;
    out.emplace_back(off + M_EDP, col_x(off + M_DELTA),
                     act * xq_diff * diq_dd / m.t_q0_p);
    out.emplace_back(off + M_EDP, col_x(off + M_EDP),
                     act * (-1.0 + xq_diff * diq_ded) / m.t_q0_p);
    out.emplace_back(off + M_EDP, col_v(b), act * xq_diff * diq_dv / m.t_q0_p);
    out.emplace_back(off + M_EDP, col_th(b), act * xq_diff * diq_dth / m.t_q0_p);

    // exciter row (zero when frozen at a limit)
    const double ex_rate = (m.exciter.k_a * (mach_eq_[i].v_ref - v) - efd) / m.exciter.t_a;
    const bool ex_frozen = (efd >= m.exciter.efd_max && ex_rate > 0) ||
                           (efd <= m.exciter.efd_min && ex_rate < 0);
    const double ex_act = ex_frozen ? 0.0 : act;
    out.emplace_back(off + M_EFD, col_x(off + M_EFD), -ex_act / m.exciter.t_a);
    out.emplace_back(off + M_EFD, col_v(b), -ex_act * m.exciter.k_a / m.exciter.t_a);

    // governor rows
    const auto& gov = m.governor;
    const double db_pu = gov.deadband_hz / f_nom;
    const double dev = omega - 1.0;
    const double dp_agc_mach = z_.agc_shares[i] * case_.base_mva / m.s_mva;
    const double p_in = mach_eq_[i].p_sched_mach + dp_agc_mach -
                        deadband_offset(dev, db_pu) / gov.r;
    const double sv_rate = (p_in - p_sv) / gov.t_g;
    const bool sv_frozen = (p_sv >= gov.p_max && sv_rate > 0) ||
                           (p_sv <= gov.p_min && sv_rate < 0);
    const double sv_act = sv_frozen ? 0.0 : act;
    out.emplace_back(off + M_PSV, col_x(off + M_PSV), -sv_act / gov.t_g);
    const double db_slope = std::abs(dev) > db_pu ? 1.0 : 0.0;
    out.emplace_back(off + M_PSV, col_x(off + M_OMEGA),
                     -sv_act * db_slope / (gov.r * gov.t_g));
    out.emplace_back(off + M_PM, col_x(off + M_PSV), act / gov.t_t);
    out.emplace_back(off + M_PM, col_x(off + M_PM), -act / gov.t_t);

    // injection contributions to g at the machine bus
    const double k = m.s_mva / case_.base_mva;
    const double dvd_dd = v_q, dvd_dv = sa, dvd_dth = -v_q;
    const double dvq_dd = -v_d, dvq_dv = ca, dvq_dth = v_d;
    // p_term = v_d i_d + v_q i_q
    const double dp_dd = dvd_dd * i_d + v_d * did_dd + dvq_dd * i_q + v_q * diq_dd;
    const double dp_deq = v_d * did_de;
    const double dp_ded = v_q * diq_ded;
    const double dp_dv = dvd_dv * i_d + v_d * did_dv + dvq_dv * i_q + v_q * diq_dv;
    const double dp_dth = dvd_dth * i_d + v_d * did_dth + dvq_dth * i_q + v_q * diq_dth;
    // q_term = v_q i_d - v_d i_q
    const double dq_dd = dvq_dd * i_d + v_q * did_dd - dvd_dd * i_q - v_d * diq_dd;
    const double dq_deq = v_q * did_de;
    const double dq_ded = -v_d * diq_ded;
    const double dq_dv = dvq_dv * i_d + v_q * did_dv - dvd_dv * i_q - v_d * diq_dv;
    const double dq_dth = dvq_dth * i_d + v_q * did_dth - dvd_dth * i_q - v_d * diq_dth;

    const int rp = gx + theta_index(b), rq = gx + v_index(b);
    out.emplace_back(rp, col_x(off + M_DELTA), act * k * dp_dd);
    out.emplace_back(rp, col_x(off + M_EQP), act * k * dp_deq);
    out.emplace_back(rp, col_x(off + M_EDP), act * k * dp_ded);
    out.emplace_back(rp, col_v(b), act * k * dp_dv);
    out.emplace_back(rp, col_th(b), act * k * dp_dth);
    out.emplace_back(rq, col_x(off + M_DELTA), act * k * dq_dd);
    out.emplace_back(rq, col_x(off + M_EQP), act * k * dq_deq);
    out.emplace_back(rq, col_x(off + M_EDP), act * k * dq_ded);
    out.emplace_back(rq, col_v(b), act * k * dq_dv);
    out.emplace_back(rq, col_th(b), act * k * dq_dth);
  }

  // --- DFIG blocks: finite differences over own states and terminal voltage;
  //     the frequency-filter row couples analytically to machine speeds. ---
  for (std::size_t j = 0; j < case_.wind_plants.size(); ++j) {
    const auto& w = case_.wind_plants[j];
    const int off = wind_off_[j];
    const int b = case_.bus_index(w.bus);
    const double v = y[v_index(b)];
    const double wind_speed = dfig_eq_[j].wind_speed +
                              eta_[case_.loads.size() + j] + wind_off_ramp_[j];
    const double f_meas = f_nom * coi_omega(x, z_);

    DfigState s{x[off + W_OMEGA], x[off + W_IRD], x[off + W_IRQ], x[off + W_BETA],
                x[off + W_FFILT]};
    auto eval = [&](const DfigState& st, double vv) {
      return dfig_derivatives(w, dfig_eq_[j].ctx, st, vv, wind_speed, f_meas, f_nom);
    };
    // columns: 5 own states then V
    for (int col = 0; col < 6; ++col) {
      DfigState sp = s, sm = s;
      double vp = v, vm = v;
      double base = col < 5 ? (&s.omega_r)[col] : v;
      const double h = 1e-7 * std::max(1.0, std::abs(base));
      if (col < 5) {
        (&sp.omega_r)[col] += h;
        (&sm.omega_r)[col] -= h;
      } else {
        vp += h;
        vm -= h;
      }
      const auto dp = eval(sp, vp);
      const auto dm = eval(sm, vm);
      const int jc = col < 5 ? col_x(off + col) : col_v(b);
      for (int row = 0; row < 4; ++row) // f_filt row handled analytically
        out.emplace_back(off + row, jc, (dp[row] - dm[row]) / (2.0 * h));
    }
    out.emplace_back(off + W_FFILT, col_x(off + W_FFILT), -1.0 / w.t_fmeas);
    for (std::size_t i = 0; i < case_.machines.size(); ++i) {
      const double wgt = z_.machine_in_service[i]
                             ? case_.machines[i].h_s * case_.machines[i].s_mva / coi_den
                             : 0.0;
      out.emplace_back(off + W_FFILT, col_x(mach_off_[i] + M_OMEGA),
                       f_nom * wgt / w.t_fmeas);
    }

    // injection contributions
    const double k = w.s_mva / case_.base_mva;
    const int rp = gx + theta_index(b), rq = gx + v_index(b);
    out.emplace_back(rp, col_x(off + W_IRQ), k * v);
    out.emplace_back(rp, col_v(b), k * x[off + W_IRQ]);
    out.emplace_back(rq, col_x(off + W_IRD), k * v);
    out.emplace_back(rq, col_v(b), k * (x[off + W_IRD] - 2.0 * v / w.x_m));
  }

  // --- AGC row ---
  if (scenario_.agc.enabled) {
    const auto& a = scenario_.agc;
    const double w_coi = coi_omega(x, z_);
    const double rate = a.k_o * (1.0 - w_coi);
    const double dp = x[agc_off_];
    const bool frozen = (dp >= a.dp_max && rate > 0) || (dp <= a.dp_min && rate < 0);
    for (std::size_t i = 0; i < case_.machines.size(); ++i) {
      const double wgt = (!frozen && z_.machine_in_service[i])
                             ? case_.machines[i].h_s * case_.machines[i].s_mva / coi_den
                             : 0.0;
      out.emplace_back(agc_off_, col_x(mach_off_[i] + M_OMEGA), -a.k_o * wgt);
    }
  }

  // --- network rows ---
  for (int kk = 0; kk < ybus_.outerSize(); ++kk) {
    for (Eigen::SparseMatrix<std::complex<double>>::InnerIterator it(ybus_, kk); it; ++it) {
      const int i = static_cast<int>(it.row());
      const int jj = static_cast<int>(it.col());
      const double g = it.value().real(), bb = it.value().imag();
      const double vi = y[v_index(i)], vj = y[v_index(jj)];
      const double th = y[theta_index(i)] - y[theta_index(jj)];
      const int rp = gx + theta_index(i), rq = gx + v_index(i);
      if (i != jj) {
        const double dpdth = vi * vj * (g * std::sin(th) - bb * std::cos(th));
        const double dpdv = vi * (g * std::cos(th) + bb * std::sin(th));
        const double dqdth = -vi * vj * (g * std::cos(th) + bb * std::sin(th));
        const double dqdv = vi * (g * std::sin(th) - bb * std::cos(th));
        // g holds injections minus network flow, hence the sign flip.
        out.emplace_back(rp, col_th(jj), -dpdth);
        out.emplace_back(rp, col_v(jj), -dpdv);
        out.emplace_back(rq, col_th(jj), -dqdth);
        out.emplace_back(rq, col_v(jj), -dqdv);
      }
    }
  }
  // network self terms
  {
    Eigen::VectorXd p_net = Eigen::VectorXd::Zero(n_bus_), q_net = Eigen::VectorXd::Zero(n_bus_);
    for (int kk = 0; kk < ybus_.outerSize(); ++kk) {
      for (Eigen::SparseMatrix<std::complex<double>>::InnerIterator it(ybus_, kk); it; ++it) {
        const int i = static_cast<int>(it.row());
        const int jj = static_cast<int>(it.col());
        const double g = it.value().real(), bb = it.value().imag();
        const double vi = y[v_index(i)], vj = y[v_index(jj)];
        const double th = y[theta_index(i)] - y[theta_index(jj)];
        p_net[i] += vi * vj * (g * std::cos(th) + bb * std::sin(th));
        q_net[i] += vi * vj * (g * std::sin(th) - bb * std::cos(th));
      }
    }
    for (int i = 0; i < n_bus_; ++i) {
      const double vi = y[v_index(i)];
      double gii = 0.0, bii = 0.0;
      for (Eigen::SparseMatrix<std::complex<double>>::InnerIterator it(ybus_, i); it; ++it) {
        if (it.row() == i) {
          gii = it.value().real();
          bii = it.value().imag();
        }
      }
      const int rp = gx + theta_index(i), rq = gx + v_index(i);
      out.emplace_back(rp, col_th(i), -(-q_net[i] - bii * vi * vi));
      out.emplace_back(rp, col_v(i), -(p_net[i] / vi + gii * vi));
      out.emplace_back(rq, col_th(i), -(p_net[i] - gii * vi * vi));
      out.emplace_back(rq, col_v(i), -(q_net[i] / vi - bii * vi * vi));
    }
  }

  // --- impedance-load voltage sensitivity ---
  if (scenario_.constant_impedance_loads) {
    for (std::size_t l = 0; l < case_.loads.size(); ++l) {
      const auto& ld = case_.loads[l];
      const int b = case_.bus_index(ld.bus);
      const double v = y[v_index(b)];
      const double vr = v / load_v0_[l];
      const double p = load_power(ld.p, eta_[l], load_off_[l]) * vr * vr;
      const double q = ld.q * vr * vr;
      out.emplace_back(gx + theta_index(b), col_v(b), -2.0 * p / v);
      out.emplace_back(gx + v_index(b), col_v(b), -2.0 * q / v);
    }
  }
}

SystemState GridModel::initialize() {
  SystemState st;
  st.t = 0.0;
  st.x = Eigen::VectorXd::Zero(n_x_);
  st.y = Eigen::VectorXd::Zero(n_y_);
  st.eta = Eigen::VectorXd::Zero(case_.loads.size() + case_.wind_plants.size());
  st.z.machine_in_service.assign(case_.machines.size(), true);
  st.z.bess.assign(case_.bess_units.size(), BessState{});
  st.z.agc_shares.assign(case_.machines.size(), 0.0);

  for (int b = 0; b < n_bus_; ++b) {
    st.y[theta_index(b)] = pf_.theta[b];
    st.y[v_index(b)] = pf_.v[b];
  }
  for (std::size_t i = 0; i < case_.machines.size(); ++i) {
    const int off = mach_off_[i];
    const auto& s = mach_eq_[i].state;
    st.x[off + M_DELTA] = s.delta;
    st.x[off + M_OMEGA] = s.omega;
    st.x[off + M_EQP] = s.eq_p;
    st.x[off + M_EDP] = s.ed_p;
    st.x[off + M_EFD] = s.efd;
    st.x[off + M_PSV] = s.p_sv;
    st.x[off + M_PM] = s.p_mech;
  }
  for (std::size_t j = 0; j < case_.wind_plants.size(); ++j) {
    const int off = wind_off_[j];
    const auto& s = dfig_eq_[j].state;
    st.x[off + W_OMEGA] = s.omega_r;
    st.x[off + W_IRD] = s.i_rd;
    st.x[off + W_IRQ] = s.i_rq;
    st.x[off + W_BETA] = s.beta_deg;
    st.x[off + W_FFILT] = s.f_filt;
  }
  st.x[agc_off_] = 0.0;

  set_step_context(st.eta, st.z, std::vector<double>(case_.loads.size(), 0.0),
                   std::vector<double>(case_.wind_plants.size(), 0.0));
  Eigen::VectorXd f(n_x_), g(n_y_);
  eval_f(st.x, st.y, f);
  eval_g(st.x, st.y, g);
  const double fres = f.lpNorm<Eigen::Infinity>();
  const double gres = g.lpNorm<Eigen::Infinity>();
  if (fres > 1e-8)
    throw InitializationError("equilibrium residual ||f|| = " + std::to_string(fres) +
                              " exceeds 1e-8");
  if (gres > 1e-7)
    throw InitializationError("algebraic residual ||g|| = " + std::to_string(gres) +
                              " exceeds 1e-7 after power flow");
  return st;
}

double coi_frequency(const GridModel& model, const SystemState& state) {
  return model.coi_omega(state.x, state.z);
}

// ---------------------------------------------------------------------------
// Simulator

Simulator::Simulator(const PowerSystemCase& c, const Scenario& sc, const SolverConfig& cfg)
    : model_(std::make_unique<GridModel>(c, sc)), cfg_(cfg) {
  const auto& noise = sc.noise;
  std::uint32_t stream = 0;
  for (std::size_t l = 0; l < c.loads.size(); ++l, ++stream) {
    const double diffusion =
        noise.enabled ? noise.load.sigma * std::sqrt(2.0 * noise.load.alpha) : 0.0;
    load_noise_.emplace_back(noise.load.alpha, 0.0, diffusion,
                             derive_stream_seed(sc.seed, stream));
  }
  for (std::size_t j = 0; j < c.wind_plants.size(); ++j, ++stream) {
    const double diffusion =
        noise.enabled ? noise.wind.sigma * std::sqrt(2.0 * noise.wind.alpha) : 0.0;
    wind_noise_.emplace_back(noise.wind.alpha, 0.0, diffusion,
                             derive_stream_seed(sc.seed, stream));
  }
}

SystemState Simulator::initialize() { return model_->initialize(); }

std::vector<double> Simulator::schedule_load_offsets(double t) const {
  const auto& c = model_->system_case();
  std::vector<double> out(c.loads.size(), 0.0);
  for (std::size_t l = 0; l < c.loads.size(); ++l)
    out[l] = model_->scenario().schedule.value({TargetKind::Load, c.loads[l].bus}, t);
  return out;
}

std::vector<double> Simulator::schedule_wind_offsets(double t) const {
  const auto& c = model_->system_case();
  std::vector<double> out(c.wind_plants.size(), 0.0);
  for (std::size_t j = 0; j < c.wind_plants.size(); ++j)
    out[j] =
        model_->scenario().schedule.value({TargetKind::Wind, c.wind_plants[j].bus}, t);
  return out;
}

void Simulator::apply_trips(SystemState& state, double t_next) {
  const auto& c = model_->system_case();
  bool changed = false;
  for (std::size_t i = 0; i < c.machines.size(); ++i) {
    if (state.z.machine_in_service[i] &&
        model_->scenario().schedule.tripped(c.machines[i].bus, t_next)) {
      state.z.machine_in_service[i] = false;
      changed = true;
    }
  }
  if (changed && model_->scenario().agc.enabled) {
    // Registry shrinks on a trip; re-dispatch the held output immediately so
    // share conservation holds on the surviving set.
    const auto reg = model_->droop_registry(state.z);
    std::fill(state.z.agc_shares.begin(), state.z.agc_shares.end(), 0.0);
    if (!reg.entries.empty()) {
      const auto shares =
          agc_sample(model_->scenario().agc, reg, state.x[model_->agc_offset()]);
      for (std::size_t e = 0; e < reg.entries.size(); ++e)
        state.z.agc_shares[reg.entries[e].machine_index] = shares[e];
    }
  }
}

void Simulator::apply_agc_sampling(SystemState& state) {
  const auto& agc = model_->scenario().agc;
  if (!agc.enabled) return;
  const double t = state.t;
  const double n_periods = std::round(t / agc.t_sample_s);
  if (std::abs(t - n_periods * agc.t_sample_s) > cfg_.dt / 2.0) return;
  if (last_sample_t_ >= 0.0 && std::abs(t - last_sample_t_) < cfg_.dt / 2.0) return;
  last_sample_t_ = t;

  const auto reg = model_->droop_registry(state.z);
  std::fill(state.z.agc_shares.begin(), state.z.agc_shares.end(), 0.0);
  if (reg.entries.empty()) return;
  const auto shares = agc_sample(agc, reg, state.x[model_->agc_offset()]);
  for (std::size_t e = 0; e < reg.entries.size(); ++e)
    state.z.agc_shares[reg.entries[e].machine_index] = shares[e];
  state.z.agc_sample_count++;
}

void Simulator::step(SystemState& state) {
  const auto& c = model_->system_case();
  const double t_next = state.t + cfg_.dt;

  apply_trips(state, t_next);
  apply_agc_sampling(state);

  for (std::size_t l = 0; l < load_noise_.size(); ++l) {
    const double v = load_noise_[l].step(cfg_.dt);
    state.eta[l] = v;
    eta_digest_ = (eta_digest_ ^ std::bit_cast<std::uint64_t>(v)) * 1099511628211ULL;
  }
  for (std::size_t j = 0; j < wind_noise_.size(); ++j) {
    const double v = wind_noise_[j].step(cfg_.dt);
    state.eta[c.loads.size() + j] = v;
    eta_digest_ = (eta_digest_ ^ std::bit_cast<std::uint64_t>(v)) * 1099511628211ULL;
  }

  model_->set_step_context(state.eta, state.z, schedule_load_offsets(t_next),
                           schedule_wind_offsets(t_next));
  trapezoidal_step(*model_, cfg_.dt, cfg_.newton_tol, cfg_.newton_max_iter, state.x,
                   state.y, workspace_);
  state.t = t_next;

  // Hard state clamps; the derivative freezes make these no-ops except for
  // Newton round-off.
  const auto& agc = model_->scenario().agc;
  if (agc.enabled)
    state.x[model_->agc_offset()] =
        std::clamp(state.x[model_->agc_offset()], agc.dp_min, agc.dp_max);
  for (std::size_t i = 0; i < c.machines.size(); ++i) {
    const auto& gov = c.machines[i].governor;
    auto& psv = state.x[model_->machine_offset(static_cast<int>(i)) + M_PSV];
    psv = std::clamp(psv, gov.p_min, gov.p_max);
    auto& pm = state.x[model_->machine_offset(static_cast<int>(i)) + M_PM];
    pm = std::clamp(pm, gov.p_min, gov.p_max);
    auto& efd = state.x[model_->machine_offset(static_cast<int>(i)) + M_EFD];
    efd = std::clamp(efd, c.machines[i].exciter.efd_min, c.machines[i].exciter.efd_max);
  }
  for (std::size_t j = 0; j < c.wind_plants.size(); ++j) {
    auto& beta = state.x[model_->wind_offset(static_cast<int>(j)) + W_BETA];
    beta = std::clamp(beta, 0.0, c.wind_plants[j].beta_max_deg);
  }

  // BESS trigger evaluated on the post-step frequency; transition takes effect
  // from the next step.
  const double f_hz = c.f_nom * model_->coi_omega(state.x, state.z);
  for (std::size_t u = 0; u < c.bess_units.size(); ++u)
    state.z.bess[u] = bess_update(c.bess_units[u], state.z.bess[u], f_hz, cfg_.dt);

  if (cfg_.check_algebraic) {
    Eigen::VectorXd g;
    model_->eval_g(state.x, state.y, g);
    const double gn = g.lpNorm<Eigen::Infinity>();
    if (gn > cfg_.newton_tol)
      throw ConvergenceError("||g|| = " + std::to_string(gn) + " after accepted step",
                             gn);
  }
}

RunResult Simulator::run() {
  const auto& c = model_->system_case();
  const auto& sc = model_->scenario();
  RunResult out;
  eta_digest_ = 1469598103934665603ULL;
  last_sample_t_ = -1.0;

  SystemState state = initialize();
  const auto n_steps = static_cast<std::size_t>(std::llround(cfg_.horizon / cfg_.dt));

  out.trace.dt = cfg_.dt;
  out.trace.f_machine_hz.resize(c.machines.size());
  out.trace.p_bess_pu.resize(c.bess_units.size());
  for (const auto& e : sc.schedule.events()) {
    const char* kind = e.kind == EventKind::Step   ? "step"
                       : e.kind == EventKind::Ramp ? "ramp"
                                                   : "trip";
    out.trace.markers.push_back(
        {e.t_start, std::string(kind) + " " + device_ref_to_string(e.target)});
  }

  auto record = [&](const SystemState& st) {
    out.trace.t.push_back(st.t);
    out.trace.f_coi_hz.push_back(c.f_nom * model_->coi_omega(st.x, st.z));
    out.trace.dp_agc_pu.push_back(st.x[model_->agc_offset()]);
    for (std::size_t i = 0; i < c.machines.size(); ++i)
      out.trace.f_machine_hz[i].push_back(
          c.f_nom * st.x[model_->machine_offset(static_cast<int>(i)) + M_OMEGA]);
    for (std::size_t u = 0; u < c.bess_units.size(); ++u)
      out.trace.p_bess_pu[u].push_back(bess_power(c.bess_units[u], st.z.bess[u]));
  };

  record(state);
  try {
    for (std::size_t k = 1; k <= n_steps; ++k) {
      step(state);
      state.t = static_cast<double>(k) * cfg_.dt; // avoid accumulation drift
      record(state);
    }
    out.completed = true;
  } catch (const ConvergenceError& e) {
    out.completed = false;
    out.error = e.what();
  }
  out.eta_digest = eta_digest_;

  // Population standard deviation of the CoI channel.
  const auto& f = out.trace.f_coi_hz;
  if (f.size() >= 2) {
    double mean = 0.0;
    for (double v : f) mean += v;
    mean /= static_cast<double>(f.size());
    double var = 0.0;
    for (double v : f) var += (v - mean) * (v - mean);
    out.sigma_f_hz = std::sqrt(var / static_cast<double>(f.size()));
  }
  return out;
}

}  // namespace fqsim
