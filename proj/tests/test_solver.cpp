#include <doctest.h>

#include <cmath>
#include <random>

#include "fqsim/errors.hpp"
#include "fqsim/solver.hpp"

using namespace fqsim;

namespace {

std::string data_path(const std::string& name) {
  return std::string(FQSIM_DATA_DIR) + "/" + name;
}

Scenario quiet_scenario(double horizon = 100.0) {
  Scenario sc;
  sc.case_path = data_path("ieee39_wind25.json");
  sc.horizon_s = horizon;
  sc.dt_s = 0.01;
  sc.noise.enabled = false;
  return sc;
}

SolverConfig config_for(const Scenario& sc) {
  SolverConfig cfg;
  cfg.dt = sc.dt_s;
  cfg.horizon = sc.horizon_s;
  return cfg;
}

// dx/dt = -x, no algebraic part.
class DecaySystem : public DaeSystem {
public:
  int n_states() const override { return 1; }
  int n_algebraic() const override { return 0; }
  void eval_f(const Eigen::VectorXd& x, const Eigen::VectorXd&,
              Eigen::VectorXd& f) const override {
    f[0] = -x[0];
  }
  void eval_g(const Eigen::VectorXd&, const Eigen::VectorXd&,
              Eigen::VectorXd&) const override {}
  void jacobian(const Eigen::VectorXd&, const Eigen::VectorXd&,
                std::vector<Eigen::Triplet<double>>& out) const override {
    out.emplace_back(0, 0, -1.0);
  }
};

// dx/dt = -y, 0 = y - x: same decay through an algebraic variable.
class DecayDae : public DaeSystem {
public:
  int n_states() const override { return 1; }
  int n_algebraic() const override { return 1; }
  void eval_f(const Eigen::VectorXd&, const Eigen::VectorXd& y,
              Eigen::VectorXd& f) const override {
    f[0] = -y[0];
  }
  void eval_g(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
              Eigen::VectorXd& g) const override {
    g[0] = y[0] - x[0];
  }
  void jacobian(const Eigen::VectorXd&, const Eigen::VectorXd&,
                std::vector<Eigen::Triplet<double>>& out) const override {
    out.emplace_back(0, 1, -1.0); // df/dy
    out.emplace_back(1, 0, -1.0); // dg/dx
    out.emplace_back(1, 1, 1.0);  // dg/dy
  }
};

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("trapezoidal rule reproduces exp(-1) on the linear test ODE") {
  DecaySystem sys;
  NewtonWorkspace ws;
  Eigen::VectorXd x(1), y(0);
  x[0] = 1.0;
  for (int k = 0; k < 100; ++k) trapezoidal_step(sys, 0.01, 1e-12, 20, x, y, ws);
  CHECK(std::abs(x[0] - 0.36787944117144233) < 1e-5);
}

TEST_CASE("the DAE route gives the same answer through the algebraic constraint") {
  DecayDae sys;
  NewtonWorkspace ws;
  Eigen::VectorXd x(1), y(1);
  x[0] = 1.0;
  y[0] = 1.0;
  for (int k = 0; k < 100; ++k) trapezoidal_step(sys, 0.01, 1e-12, 20, x, y, ws);
  CHECK(std::abs(x[0] - 0.36787944117144233) < 1e-5);
  CHECK(std::abs(y[0] - x[0]) < 1e-12);
}

TEST_CASE("39-bus initialization satisfies both residuals") {
  const auto sc = quiet_scenario();
  const auto c = load_case(sc.case_path);
  GridModel model(c, sc);
  auto st = model.initialize();

  Eigen::VectorXd f, g;
  model.eval_f(st.x, st.y, f);
  model.eval_g(st.x, st.y, g);
  CHECK(f.lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK(g.lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("initialization rejects a machine scheduled above p_max") {
  auto sc = quiet_scenario();
  auto c = load_case(sc.case_path);
  // Clamp one governor ceiling below its dispatch.
  c.machines[1].governor.p_max = 0.5;
  CHECK_THROWS_AS(GridModel(c, sc), InitializationError);
}

TEST_CASE("noise-free equilibrium is a per-step fixed point") {
  const auto sc = quiet_scenario();
  const auto c = load_case(sc.case_path);
  SolverConfig cfg = config_for(sc);
  Simulator sim(c, sc, cfg);
  auto st = sim.initialize();
  const Eigen::VectorXd x0 = st.x;
  sim.step(st);
  CHECK((st.x - x0).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("analytic Jacobian matches central finite differences of (f,g)") {
  auto sc = quiet_scenario();
  sc.agc.enabled = true;
  sc.agc.k_o = 50.0;
  const auto c = load_case(sc.case_path);
  GridModel model(c, sc);
  auto st = model.initialize();

  // Perturb away from the equilibrium but clear of deadbands and limits.
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> ur(-1e-3, 1e-3);
  Eigen::VectorXd x = st.x, y = st.y;
  for (int i = 0; i < x.size(); ++i) x[i] += ur(rng);
  for (int i = 0; i < y.size(); ++i) y[i] += ur(rng);

  const int nx = model.n_states(), ny = model.n_algebraic();
  std::vector<Eigen::Triplet<double>> trips;
  model.jacobian(x, y, trips);
  Eigen::MatrixXd J_an = Eigen::MatrixXd::Zero(nx + ny, nx + ny);
  for (const auto& t : trips) J_an(t.row(), t.col()) += t.value();

  Eigen::VectorXd fp(nx), fm(nx), gp(ny), gm(ny);
  Eigen::MatrixXd J_fd = Eigen::MatrixXd::Zero(nx + ny, nx + ny);
  for (int col = 0; col < nx + ny; ++col) {
    Eigen::VectorXd xp = x, xm = x, yp = y, ym = y;
    const double base = col < nx ? x[col] : y[col - nx];
    const double h = 1e-6 * std::max(1.0, std::abs(base));
    if (col < nx) {
      xp[col] += h;
      xm[col] -= h;
    } else {
      yp[col - nx] += h;
      ym[col - nx] -= h;
    }
    model.eval_f(xp, yp, fp);
    model.eval_f(xm, ym, fm);
    model.eval_g(xp, yp, gp);
    model.eval_g(xm, ym, gm);
    for (int r = 0; r < nx; ++r) J_fd(r, col) = (fp[r] - fm[r]) / (2.0 * h);
    for (int r = 0; r < ny; ++r) J_fd(nx + r, col) = (gp[r] - gm[r]) / (2.0 * h);
  }

  double worst = 0.0;
  for (int r = 0; r < nx + ny; ++r)
    for (int col = 0; col < nx + ny; ++col) {
      const double denom = std::max(1.0, std::abs(J_fd(r, col)));
      worst = std::max(worst, std::abs(J_an(r, col) - J_fd(r, col)) / denom);
    }
  CHECK(worst < 1e-5);
}

TEST_CASE("center-of-inertia weighting") {
  const auto sc = quiet_scenario();
  const auto c = load_case(sc.case_path);
  GridModel model(c, sc);
  auto st = model.initialize();

  SUBCASE("uniform speeds give exactly 1.0") {
    CHECK(model.coi_omega(st.x, st.z) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("weighted mean with one machine perturbed") {
    // Move machine 0's speed and verify the H*S weighting.
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < c.machines.size(); ++i) {
      const double w = c.machines[i].h_s * c.machines[i].s_mva;
      den += w;
      num += w * (i == 0 ? 1.002 : 1.0);
    }
    st.x[model.machine_offset(0) + 1] = 1.002;
    CHECK(model.coi_omega(st.x, st.z) == doctest::Approx(num / den).epsilon(1e-12));
  }

  SUBCASE("tripped machines drop out of the weighting") {
    st.x[model.machine_offset(0) + 1] = 1.002;
    st.z.machine_in_service[0] = false;
    CHECK(model.coi_omega(st.x, st.z) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < c.machines.size(); ++i)
      st.z.machine_in_service[i] = false;
    CHECK_THROWS_AS(model.coi_omega(st.x, st.z), ValidationError);
  }
}

TEST_CASE("machine trip keeps the algebraic constraint satisfied") {
  auto sc = quiet_scenario(80.0);
  sc.schedule = PerturbationSchedule(
      {{60.0, {TargetKind::Machine, 37}, EventKind::Trip, 0.0, 0.0}});
  const auto c = load_case(sc.case_path);
  SolverConfig cfg = config_for(sc);
  cfg.check_algebraic = true; // residual oracle on every accepted step
  Simulator sim(c, sc, cfg);
  const auto result = sim.run();
  CHECK(result.completed);
  // frequency fell after the trip
  CHECK(result.trace.f_coi_hz.back() < 49.95);
}

TEST_CASE("initial RoCoF after a trip matches the aggregated swing equation") {
  auto sc = quiet_scenario(62.0);
  sc.schedule = PerturbationSchedule(
      {{60.0, {TargetKind::Machine, 37}, EventKind::Trip, 0.0, 0.0}});
  const auto c = load_case(sc.case_path);
  Simulator sim(c, sc, config_for(sc));
  const auto result = sim.run();
  REQUIRE(result.completed);

  // Tripped dispatch from the power-flow-consistent schedule.
  GridModel model(c, sc);
  int trip_idx = -1;
  for (std::size_t i = 0; i < c.machines.size(); ++i)
    if (c.machines[i].bus == 37) trip_idx = static_cast<int>(i);
  REQUIRE(trip_idx >= 0);
  const double dp_pu = c.machines[trip_idx].p_sched; // system base

  double hs_survivors = 0.0;
  for (std::size_t i = 0; i < c.machines.size(); ++i)
    if (c.machines[i].bus != 37)
      hs_survivors += c.machines[i].h_s * c.machines[i].s_mva / c.base_mva;

  const double expected = -dp_pu / (2.0 * hs_survivors); // pu/s

  const auto& t = result.trace.t;
  const auto& f = result.trace.f_coi_hz;
  std::size_t k0 = 0;
  for (std::size_t k = 0; k < t.size(); ++k)
    if (t[k] >= 60.0 - 1e-9) {
      k0 = k;
      break;
    }
  // slope over the first two steps after the event
  const double rocof_pu = (f[k0 + 2] - f[k0]) / (t[k0 + 2] - t[k0]) / c.f_nom;
  CHECK(rocof_pu == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("identical inputs give bit-identical traces") {
  auto sc = quiet_scenario(20.0);
  sc.noise.enabled = true;
  sc.seed = 1234;
  const auto c = load_case(sc.case_path);
  Simulator a(c, sc, config_for(sc)), b(c, sc, config_for(sc));
  const auto ra = a.run(), rb = b.run();
  REQUIRE(ra.completed);
  REQUIRE(rb.completed);
  CHECK(ra.eta_digest == rb.eta_digest);
  REQUIRE(ra.trace.f_coi_hz.size() == rb.trace.f_coi_hz.size());
  bool identical = true;
  for (std::size_t k = 0; k < ra.trace.f_coi_hz.size(); ++k)
    if (ra.trace.f_coi_hz[k] != rb.trace.f_coi_hz[k]) identical = false;
  CHECK(identical);
}

TEST_CASE("power bookkeeping: generation equals load plus losses each step") {
  auto sc = quiet_scenario(5.0);
  sc.noise.enabled = true;
  const auto c = load_case(sc.case_path);
  SolverConfig cfg = config_for(sc);
  Simulator sim(c, sc, cfg);
  auto st = sim.initialize();
  for (int k = 0; k < 200; ++k) {
    sim.step(st);
    std::vector<double> p_bal, q_bal;
    sim.model().bus_power_balance(st.x, st.y, p_bal, q_bal);
    double worst = 0.0;
    for (double v : p_bal) worst = std::max(worst, std::abs(v));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("Newton divergence raises a step error carrying the residual") {
  DecaySystem sys;
  NewtonWorkspace ws;
  Eigen::VectorXd x(1), y(0);
  x[0] = 1.0;
  // zero iterations allowed -> guaranteed failure
  CHECK_THROWS_AS(trapezoidal_step(sys, 0.5, 1e-16, 0, x, y, ws), ConvergenceError);
}

}  // TEST_SUITE
