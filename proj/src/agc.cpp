#include "fqsim/agc.hpp"

#include <algorithm>

#include "fqsim/errors.hpp"

namespace fqsim {

AgcShareRule parse_share_rule(const std::string& text) {
  if (text == "droop") return AgcShareRule::Droop;
  if (text == "inverse_droop") return AgcShareRule::InverseDroop;
  if (text == "rating") return AgcShareRule::Rating;
  throw SchemaError("agc share_rule '" + text + "' must be droop|inverse_droop|rating");
}

double DroopRegistry::r_tot() const {
  double total = 0.0;
  for (const auto& e : entries) total += e.r;
  return total;
}

double agc_integrate(const AgcConfig& cfg, double dp, double omega_coi, double dt) {
  const double rate = cfg.k_o * (1.0 - omega_coi);
  if (dp >= cfg.dp_max && rate > 0) return cfg.dp_max;
  if (dp <= cfg.dp_min && rate < 0) return cfg.dp_min;
  return std::clamp(dp + rate * dt, cfg.dp_min, cfg.dp_max);
}

std::vector<double> agc_sample(const AgcConfig& cfg, const DroopRegistry& reg, double dp) {
  if (reg.entries.empty())
    throw ValidationError("AGC sampling with no participating machines");
  std::vector<double> weights;
  weights.reserve(reg.entries.size());
  double total = 0.0;
  for (const auto& e : reg.entries) {
    double w = 0.0;
    switch (cfg.share_rule) {
      case AgcShareRule::Droop: w = e.r; break;
      case AgcShareRule::InverseDroop: w = 1.0 / e.r; break;
      case AgcShareRule::Rating: w = e.s_mva; break;
    }
    weights.push_back(w);
    total += w;
  }
  if (total <= 0) throw ValidationError("AGC share weights sum to zero");
  std::vector<double> shares(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) shares[i] = dp * weights[i] / total;
  return shares;
}

}  // namespace fqsim
