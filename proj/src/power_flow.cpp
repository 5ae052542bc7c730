#include "fqsim/power_flow.hpp"

#include <cmath>
#include <vector>

#include <Eigen/SparseLU>

#include "fqsim/errors.hpp"

namespace fqsim {

Eigen::SparseMatrix<std::complex<double>> build_ybus(const PowerSystemCase& c) {
  using cplx = std::complex<double>;
  const int n = static_cast<int>(c.buses.size());
  std::vector<Eigen::Triplet<cplx>> trip;
  trip.reserve(c.branches.size() * 4 + n);
  for (const auto& br : c.branches) {
    const int i = c.bus_index(br.from);
    const int j = c.bus_index(br.to);
    const cplx y_series = 1.0 / cplx(br.r, br.x);
    const cplx y_sh(0.0, br.b_shunt / 2.0);
    trip.emplace_back(i, i, y_series + y_sh);
    trip.emplace_back(j, j, y_series + y_sh);
    trip.emplace_back(i, j, -y_series);
    trip.emplace_back(j, i, -y_series);
  }
  Eigen::SparseMatrix<cplx> ybus(n, n);
  ybus.setFromTriplets(trip.begin(), trip.end());
  return ybus;
}

namespace {

// Net scheduled injection per bus: dispatch minus load.
void scheduled_injections(const PowerSystemCase& c, std::vector<double>& p,
                          std::vector<double>& q) {
  p.assign(c.buses.size(), 0.0);
  q.assign(c.buses.size(), 0.0);
  for (const auto& m : c.machines) p[c.bus_index(m.bus)] += m.p_sched;
  for (const auto& w : c.wind_plants) p[c.bus_index(w.bus)] += w.p_sched;
  for (const auto& l : c.loads) {
    p[c.bus_index(l.bus)] -= l.p;
    q[c.bus_index(l.bus)] -= l.q;
  }
}

}  // namespace

PowerFlowSolution solve_power_flow(const PowerSystemCase& c, const PowerFlowOptions& opt) {
  const int n = static_cast<int>(c.buses.size());
  const auto ybus = build_ybus(c);

  std::vector<double> v(n), theta(n);
  std::vector<bool> is_pv(n, false), is_slack(n, false);
  for (int i = 0; i < n; ++i) {
    v[i] = c.buses[i].v_init;
    theta[i] = c.buses[i].theta_init;
    is_pv[i] = c.buses[i].kind == BusKind::Generator;
    is_slack[i] = c.buses[i].kind == BusKind::Slack;
  }

  std::vector<double> p_spec, q_spec;
  scheduled_injections(c, p_spec, q_spec);

  // Unknown ordering: theta at non-slack buses, then V at PQ buses.
  std::vector<int> theta_pos(n, -1), v_pos(n, -1);
  int n_th = 0;
  for (int i = 0; i < n; ++i)
    if (!is_slack[i]) theta_pos[i] = n_th++;
  int n_v = 0;
  for (int i = 0; i < n; ++i)
    if (!is_slack[i] && !is_pv[i]) v_pos[i] = n_th + n_v++;
  const int n_unknown = n_th + n_v;

  Eigen::VectorXd p_calc(n), q_calc(n);
  auto compute_injections = [&]() {
    p_calc.setZero();
    q_calc.setZero();
    for (int k = 0; k < ybus.outerSize(); ++k) {
      for (Eigen::SparseMatrix<std::complex<double>>::InnerIterator it(ybus, k); it; ++it) {
        const int i = static_cast<int>(it.row());
        const int j = static_cast<int>(it.col());
        const double g = it.value().real(), b = it.value().imag();
        const double th = theta[i] - theta[j];
        p_calc[i] += v[i] * v[j] * (g * std::cos(th) + b * std::sin(th));
        q_calc[i] += v[i] * v[j] * (g * std::sin(th) - b * std::cos(th));
      }
    }
  };

  double max_mismatch = 0.0;
  int iter = 0;
  for (; iter <= opt.max_iter; ++iter) {
    compute_injections();

    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_unknown);
    max_mismatch = 0.0;
    for (int i = 0; i < n; ++i) {
      if (theta_pos[i] >= 0) {
        const double dp = p_spec[i] - p_calc[i];
        rhs[theta_pos[i]] = dp;
        max_mismatch = std::max(max_mismatch, std::abs(dp));
      }
      if (v_pos[i] >= 0) {
        const double dq = q_spec[i] - q_calc[i];
        rhs[v_pos[i]] = dq;
        max_mismatch = std::max(max_mismatch, std::abs(dq));
      }
    }
    if (max_mismatch < opt.tol) break;
    if (iter == opt.max_iter)
      throw ConvergenceError("power flow did not converge in " +
                                 std::to_string(opt.max_iter) +
                                 " iterations (max mismatch " +
                                 std::to_string(max_mismatch) + " pu)",
                             max_mismatch);

    std::vector<Eigen::Triplet<double>> jac;
    jac.reserve(static_cast<std::size_t>(ybus.nonZeros()) * 4);
    for (int k = 0; k < ybus.outerSize(); ++k) {
      for (Eigen::SparseMatrix<std::complex<double>>::InnerIterator it(ybus, k); it; ++it) {
        const int i = static_cast<int>(it.row());
        const int j = static_cast<int>(it.col());
        const double g = it.value().real(), b = it.value().imag();
        const double th = theta[i] - theta[j];
        double dpdth, dpdv, dqdth, dqdv;
        if (i == j) {
          dpdth = -q_calc[i] - b * v[i] * v[i];
          dpdv = p_calc[i] / v[i] + g * v[i];
          dqdth = p_calc[i] - g * v[i] * v[i];
          dqdv = q_calc[i] / v[i] - b * v[i] * v[i];
        } else {
          const double vivj = v[i] * v[j];
          dpdth = vivj * (g * std::sin(th) - b * std::cos(th));
          dpdv = v[i] * (g * std::cos(th) + b * std::sin(th));
          dqdth = -vivj * (g * std::cos(th) + b * std::sin(th));
          dqdv = v[i] * (g * std::sin(th) - b * std::cos(th));
        }
        if (theta_pos[i] >= 0 && theta_pos[j] >= 0)
          jac.emplace_back(theta_pos[i], theta_pos[j], dpdth);
        if (theta_pos[i] >= 0 && v_pos[j] >= 0)
          jac.emplace_back(theta_pos[i], v_pos[j], dpdv);
        if (v_pos[i] >= 0 && theta_pos[j] >= 0)
          jac.emplace_back(v_pos[i], theta_pos[j], dqdth);
        if (v_pos[i] >= 0 && v_pos[j] >= 0) jac.emplace_back(v_pos[i], v_pos[j], dqdv);
      }
    }

    Eigen::SparseMatrix<double> J(n_unknown, n_unknown);
    J.setFromTriplets(jac.begin(), jac.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(J);
    if (lu.info() != Eigen::Success)
      throw ConvergenceError("power flow Jacobian is singular", max_mismatch);
    const Eigen::VectorXd dx = lu.solve(rhs);

    for (int i = 0; i < n; ++i) {
      if (theta_pos[i] >= 0) theta[i] += dx[theta_pos[i]];
      if (v_pos[i] >= 0) v[i] += dx[v_pos[i]];
    }
  }

  compute_injections();
  PowerFlowSolution sol;
  sol.v = v;
  sol.theta = theta;
  sol.p_inj.assign(p_calc.data(), p_calc.data() + n);
  sol.q_inj.assign(q_calc.data(), q_calc.data() + n);
  sol.iterations = iter;
  sol.max_mismatch = max_mismatch;
  return sol;
}

}  // namespace fqsim
