#pragma once

#include <optional>
#include <string>
#include <vector>

namespace fqsim {

enum class BusKind { Slack, Generator, Load };

struct Bus {
  int id = 0;
  BusKind kind = BusKind::Load;
  double v_init = 1.0;      // pu voltage magnitude used as PV setpoint / flat start
  double theta_init = 0.0;  // rad
};

struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;       // pu
  double x = 0.0;       // pu, nonzero
  double b_shunt = 0.0; // total line charging, pu
};

struct GovernorParams {
  double r = 0.05;        // droop, pu on machine base
  double deadband_hz = 0.015;
  double t_g = 0.2;       // servo time constant, s
  double t_t = 0.5;       // turbine time constant, s
  double p_min = 0.0;     // pu on machine base
  double p_max = 1.0;
};

struct ExciterParams {
  double k_a = 200.0;
  double t_a = 0.02;      // s
  double efd_min = 0.0;   // pu
  double efd_max = 7.0;
};

// Two-axis synchronous machine. Impedances and time constants on machine base.
struct MachineParams {
  int bus = 0;
  double s_mva = 0.0;     // rating
  double h_s = 0.0;       // inertia, s on machine base
  double d_pu = 0.0;      // damping torque coefficient
  double x_d = 0.0;
  double x_d_p = 0.0;
  double x_q = 0.0;
  double x_q_p = 0.0;
  double t_d0_p = 0.0;    // s
  double t_q0_p = 0.0;    // s
  double p_sched = 0.0;   // scheduled active dispatch, pu on SYSTEM base
  GovernorParams governor;
  ExciterParams exciter;
};

// DFIG wind plant. Electrical quantities on machine base.
struct WindParams {
  int bus = 0;
  double s_mva = 0.0;
  double h_w = 4.0;           // rotor inertia, s
  double x_m = 3.0;           // magnetizing reactance, pu
  double p_rated = 1.0;       // converter power limit, pu machine base
  double omega_max = 1.2;     // rated rotor speed, pu
  double omega_min = 0.7;
  double k_mppt = 0.0;        // MPPT curve gain; 0 means p_rated/omega_max^3
  double lambda_tip = 85.0;   // blade tip speed at omega_r = 1, m/s
  double v_rated = 12.0;      // rated wind speed, m/s
  double t_power = 0.1;       // active-current tracking lag, s
  double t_voltage = 0.05;    // reactive-current tracking lag, s
  double k_voltage = 10.0;    // terminal voltage control gain
  double t_pitch = 2.0;       // pitch servo, s
  double k_pitch = 80.0;      // deg per pu overspeed
  double beta_max_deg = 30.0;
  double t_fmeas = 0.1;       // frequency measurement filter, s
  double r_apc = 0.04;        // APC droop, pu on machine base
  double apc_headroom = 0.0;  // upward reserve carried when APC enabled, pu machine base
  double p_sched = 0.0;       // pu on SYSTEM base
};

struct BessParams {
  int bus = 0;
  double p_ffr = 0.0;         // injection when active, pu on SYSTEM base
  double f_trigger_hz = 49.8;
  double delay_s = 0.15;
  double hysteresis_hz = 0.05;
};

struct LoadParams {
  int bus = 0;
  double p = 0.0;  // pu on system base, consumption positive
  double q = 0.0;
};

struct PowerSystemCase {
  double base_mva = 100.0;
  double f_nom = 50.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<MachineParams> machines;
  std::vector<WindParams> wind_plants;
  std::vector<BessParams> bess_units;
  std::vector<LoadParams> loads;
  std::string notes;  // free-form provenance/assumption notes carried through round trips

  int bus_index(int bus_id) const;                 // position in buses, -1 if absent
  const Bus& bus_by_id(int bus_id) const;
  int slack_index() const;
};

// Parses and validates a case file. Throws SchemaError on malformed JSON or
// missing/ill-typed fields, ValidationError on invariant violations.
PowerSystemCase load_case(const std::string& path);

PowerSystemCase parse_case_json(const std::string& text);

// Emits a case file that reloads bit-identically.
void save_case(const PowerSystemCase& c, const std::string& path);
std::string case_to_json(const PowerSystemCase& c);

// Invariant checks shared by load_case and save_case callers.
void validate_case(const PowerSystemCase& c);

bool cases_identical(const PowerSystemCase& a, const PowerSystemCase& b);

}  // namespace fqsim
