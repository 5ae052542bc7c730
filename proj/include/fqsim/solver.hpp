#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "fqsim/agc.hpp"
#include "fqsim/case.hpp"
#include "fqsim/devices.hpp"
#include "fqsim/power_flow.hpp"
#include "fqsim/scenario.hpp"
#include "fqsim/stochastic.hpp"
#include "fqsim/trace.hpp"

namespace fqsim {

struct SolverConfig {
  double dt = 0.01;          // s
  double newton_tol = 1e-8;  // infinity norm of the combined residual
  int newton_max_iter = 20;
  double horizon = 300.0;    // s
  bool check_algebraic = false; // re-verify ||g||_inf after every accepted step
};

// Implicit-trapezoidal target: x' = f(x, y), 0 = g(x, y) with discrete inputs
// held constant over a step. Implementations fill the continuous Jacobian
// d(f,g)/d(x,y) as triplets.
class DaeSystem {
public:
  virtual ~DaeSystem() = default;
  virtual int n_states() const = 0;
  virtual int n_algebraic() const = 0;
  virtual void eval_f(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                      Eigen::VectorXd& f) const = 0;
  virtual void eval_g(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                      Eigen::VectorXd& g) const = 0;
  virtual void jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                        std::vector<Eigen::Triplet<double>>& out) const = 0;
};

// Reusable Newton scratch space. The Jacobian sparsity pattern is analyzed on
// first use and kept while the triplet structure stays identical.
class NewtonWorkspace {
public:
  Eigen::VectorXd f_old, f_new, g_new, residual, delta;
  std::vector<Eigen::Triplet<double>> model_trip, step_trip;
  Eigen::SparseMatrix<double> jac;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  bool pattern_ready = false;
};

// One implicit trapezoidal step with Newton iteration on the combined
// (f, g) residual. The step-start derivative is evaluated under the current
// step context, so discrete inputs advanced beforehand act as a constant
// forcing across the step. Throws ConvergenceError on failure.
void trapezoidal_step(const DaeSystem& sys, double dt, double tol, int max_iter,
                      Eigen::VectorXd& x, Eigen::VectorXd& y, NewtonWorkspace& ws);

// Discrete portion z of the system state.
struct DiscreteState {
  std::vector<bool> machine_in_service;
  std::vector<BessState> bess;
  std::vector<double> agc_shares;   // held dispatch per machine, pu system base
  std::uint64_t agc_sample_count = 0;
};

struct SystemState {
  double t = 0.0;
  Eigen::VectorXd x;     // device dynamic states + AGC integrator
  Eigen::VectorXd y;     // theta then v, per bus
  Eigen::VectorXd eta;   // load multipliers then wind-speed deviations
  DiscreteState z;
};

// Assembled dynamic model of one case + scenario: index maps, equilibrium
// contexts and the residual/Jacobian of Eq-style f and g over (x, y).
class GridModel : public DaeSystem {
public:
  GridModel(const PowerSystemCase& c, const Scenario& sc);

  int n_states() const override { return n_x_; }
  int n_algebraic() const override { return n_y_; }
  void eval_f(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
              Eigen::VectorXd& f) const override;
  void eval_g(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
              Eigen::VectorXd& g) const override;
  void jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                std::vector<Eigen::Triplet<double>>& out) const override;

  // Equilibrium construction from the power flow. Throws InitializationError.
  SystemState initialize();

  // Step-scoped inputs (advanced noise, schedule offsets, discrete state).
  void set_step_context(const Eigen::VectorXd& eta, const DiscreteState& z,
                        const std::vector<double>& load_offsets,
                        const std::vector<double>& wind_offsets);

  double coi_omega(const Eigen::VectorXd& x, const DiscreteState& z) const;

  DroopRegistry droop_registry(const DiscreteState& z) const;

  // State vector layout.
  int machine_offset(int machine_index) const { return mach_off_[machine_index]; }
  int wind_offset(int wind_index) const { return wind_off_[wind_index]; }
  int agc_offset() const { return agc_off_; }
  int theta_index(int bus_pos) const { return bus_pos; }
  int v_index(int bus_pos) const { return n_bus_ + bus_pos; }

  const PowerSystemCase& system_case() const { return case_; }
  const Scenario& scenario() const { return scenario_; }
  const PowerFlowSolution& power_flow() const { return pf_; }
  const std::vector<DfigEquilibrium>& dfig_equilibria() const { return dfig_eq_; }

  // Total device injection minus network flow, per bus (test oracle hook).
  void bus_power_balance(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                         std::vector<double>& p_bal, std::vector<double>& q_bal) const;

private:
  void assemble_indices();
  void machine_rows(int mi, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                    Eigen::VectorXd& f) const;

  PowerSystemCase case_;
  Scenario scenario_;
  PowerFlowSolution pf_;
  Eigen::SparseMatrix<std::complex<double>> ybus_;

  int n_bus_ = 0, n_x_ = 0, n_y_ = 0;
  std::vector<int> mach_off_, wind_off_;
  int agc_off_ = 0;

  std::vector<MachineEquilibrium> mach_eq_;
  std::vector<DfigEquilibrium> dfig_eq_;
  std::vector<double> load_v0_;   // power-flow voltage at load buses

  // Step context
  Eigen::VectorXd eta_;
  DiscreteState z_;
  std::vector<double> load_off_, wind_off_ramp_;

  friend class Simulator;
};

// omega_CoI over in-service machines; throws ValidationError when none remain.
double coi_frequency(const GridModel& model, const SystemState& state);

struct RunResult {
  SimTrace trace;
  bool completed = false;
  std::string error;            // set when a step aborted the run
  std::uint64_t eta_digest = 0; // hash of every noise draw, for paired-seed checks
  double sigma_f_hz = 0.0;      // population std dev of the CoI trace
};

class Simulator {
public:
  Simulator(const PowerSystemCase& c, const Scenario& sc, const SolverConfig& cfg);

  SystemState initialize();
  // Advances one step in place; applies schedule/noise/AGC/z transitions.
  void step(SystemState& state);
  RunResult run();

  GridModel& model() { return *model_; }

private:
  void apply_agc_sampling(SystemState& state);
  void apply_trips(SystemState& state, double t_next);
  std::vector<double> schedule_load_offsets(double t) const;
  std::vector<double> schedule_wind_offsets(double t) const;

  std::unique_ptr<GridModel> model_;
  SolverConfig cfg_;
  std::vector<OuProcess> load_noise_;
  std::vector<OuProcess> wind_noise_;
  NewtonWorkspace workspace_;
  double last_sample_t_ = -1.0;
  std::uint64_t eta_digest_ = 0;
};

}  // namespace fqsim
