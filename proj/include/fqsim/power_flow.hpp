#pragma once

#include <complex>
#include <vector>

#include <Eigen/SparseCore>

#include "fqsim/case.hpp"

namespace fqsim {

// Bus admittance matrix in case bus order.
Eigen::SparseMatrix<std::complex<double>> build_ybus(const PowerSystemCase& c);

struct PowerFlowSolution {
  std::vector<double> v;        // pu
  std::vector<double> theta;    // rad
  std::vector<double> p_inj;    // net injection per bus, pu system base
  std::vector<double> q_inj;
  int iterations = 0;
  double max_mismatch = 0.0;    // pu, after convergence
};

struct PowerFlowOptions {
  double tol = 1e-8;
  int max_iter = 20;
};

// Newton-Raphson in polar coordinates. Buses hosting a machine or wind plant
// hold V at v_init (PV); the slack bus holds V and angle. Throws
// ConvergenceError with the final mismatch if the iteration budget runs out.
PowerFlowSolution solve_power_flow(const PowerSystemCase& c,
                                   const PowerFlowOptions& opt = {});

}  // namespace fqsim
