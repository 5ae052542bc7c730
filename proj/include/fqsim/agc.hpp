#pragma once

#include <string>
#include <vector>

namespace fqsim {

enum class AgcShareRule { Droop, InverseDroop, Rating };

AgcShareRule parse_share_rule(const std::string& text);

struct AgcConfig {
  bool enabled = false;
  double k_o = 25.0;        // integrator gain, pu/pu/s on system base
  double t_sample_s = 4.0;  // dispatch interval
  double dp_min = -0.5;     // output clamp, pu system base
  double dp_max = 0.5;
  AgcShareRule share_rule = AgcShareRule::Droop;
  std::vector<int> participants; // machine buses; empty = all in-service machines
};

struct DroopEntry {
  int machine_index = 0; // position in the case machine list
  double r = 0.0;        // droop, pu machine base
  double s_mva = 0.0;
};

// Participating in-service machines. Rebuilt whenever a trip changes the set.
struct DroopRegistry {
  std::vector<DroopEntry> entries;
  double r_tot() const;
};

// Continuous integrator update with anti-windup: integration freezes while the
// output is pinned against an active limit.
double agc_integrate(const AgcConfig& cfg, double dp, double omega_coi, double dt);

// Sampled dispatch: splits the held integrator output across the registry.
// Shares are in registry order. Throws ValidationError on an empty registry.
std::vector<double> agc_sample(const AgcConfig& cfg, const DroopRegistry& reg, double dp);

}  // namespace fqsim
