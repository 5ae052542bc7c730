#include "fqsim/scenario.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fqsim/errors.hpp"

namespace fqsim {

using nlohmann::json;

namespace {

template <typename T>
T field(const json& j, const char* name, const std::string& where) {
  if (!j.contains(name))
    throw SchemaError("missing field '" + std::string(name) + "' in " + where);
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw SchemaError("field '" + std::string(name) + "' in " + where +
                      " has the wrong type");
  }
}

template <typename T>
T field_or(const json& j, const char* name, const std::string& where, T fallback) {
  if (!j.contains(name)) return fallback;
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw SchemaError("field '" + std::string(name) + "' in " + where +
                      " has the wrong type");
  }
}

}  // namespace

Scenario parse_scenario_json(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("scenario file is not valid JSON: ") + e.what());
  }

  Scenario s;
  s.schema_version = field_or<int>(j, "schema_version", "scenario", 1);
  if (s.schema_version != 1)
    throw SchemaError("unsupported scenario schema_version " +
                      std::to_string(s.schema_version));
  s.case_path = field<std::string>(j, "case", "scenario");
  if (!base_dir.empty() && !std::filesystem::path(s.case_path).is_absolute())
    s.case_path = (std::filesystem::path(base_dir) / s.case_path).string();
  s.horizon_s = field<double>(j, "horizon_s", "scenario");
  s.dt_s = field_or<double>(j, "dt_s", "scenario", 0.01);
  s.seed = field_or<std::uint64_t>(j, "seed", "scenario", 1);
  if (s.horizon_s <= 0) throw ValidationError("scenario horizon_s must be > 0");
  if (s.dt_s <= 0) throw ValidationError("scenario dt_s must be > 0");

  if (j.contains("noise")) {
    const json& nj = j.at("noise");
    s.noise.enabled = field_or<bool>(nj, "enabled", "noise", true);
    if (nj.contains("load")) {
      s.noise.load.alpha = field_or<double>(nj.at("load"), "alpha_per_s", "noise.load", 0.5);
      s.noise.load.sigma = field_or<double>(nj.at("load"), "sigma_rel", "noise.load", 0.01);
    }
    if (nj.contains("wind")) {
      s.noise.wind.alpha = field_or<double>(nj.at("wind"), "alpha_per_s", "noise.wind", 0.5);
      s.noise.wind.sigma = field_or<double>(nj.at("wind"), "sigma_mps", "noise.wind", 0.15);
    }
  }

  if (j.contains("schedule")) {
    std::vector<PerturbationEvent> events;
    for (const auto& ej : j.at("schedule")) {
      PerturbationEvent e;
      e.t_start = field<double>(ej, "t_s", "schedule event");
      const std::string where = "schedule event at t=" + std::to_string(e.t_start);
      e.target = parse_device_ref(field<std::string>(ej, "target", where));
      const std::string kind = field<std::string>(ej, "kind", where);
      if (kind == "step") e.kind = EventKind::Step;
      else if (kind == "ramp") e.kind = EventKind::Ramp;
      else if (kind == "trip") e.kind = EventKind::Trip;
      else throw SchemaError("event kind '" + kind + "' in " + where +
                             " must be step|ramp|trip");
      if (e.kind != EventKind::Trip)
        e.magnitude = field<double>(ej, "magnitude", where);
      if (e.kind == EventKind::Ramp)
        e.ramp_duration = field<double>(ej, "ramp_duration_s", where);
      if (e.kind == EventKind::Trip && e.t_start <= 0)
        throw ValidationError(where + ": trips must occur after t=0");
      events.push_back(e);
    }
    s.schedule = PerturbationSchedule(std::move(events));
  }

  if (j.contains("agc")) {
    const json& aj = j.at("agc");
    s.agc.enabled = field_or<bool>(aj, "enabled", "agc", false);
    s.agc.k_o = field_or<double>(aj, "k_o", "agc", 25.0);
    s.agc.t_sample_s = field_or<double>(aj, "t_sample_s", "agc", 4.0);
    s.agc.dp_min = field_or<double>(aj, "dp_min", "agc", -0.5);
    s.agc.dp_max = field_or<double>(aj, "dp_max", "agc", 0.5);
    s.agc.share_rule =
        parse_share_rule(field_or<std::string>(aj, "share_rule", "agc", "droop"));
    if (aj.contains("participants"))
      for (const auto& p : aj.at("participants")) s.agc.participants.push_back(p.get<int>());
    if (s.agc.t_sample_s <= 0) throw ValidationError("agc t_sample_s must be > 0");
    if (s.agc.dp_min > s.agc.dp_max) throw ValidationError("agc output limits inverted");
  }

  s.apc_enabled = field_or<bool>(j, "apc_enabled", "scenario", false);
  s.apc_deadband_hz = field_or<double>(j, "apc_deadband_hz", "scenario", 0.2);
  if (s.apc_deadband_hz != 0.2 && s.apc_deadband_hz != 0.015)
    throw ValidationError("apc_deadband_hz must be 0.2 or 0.015");
  s.constant_impedance_loads =
      field_or<bool>(j, "constant_impedance_loads", "scenario", false);

  if (j.contains("outputs")) {
    const json& oj = j.at("outputs");
    s.outputs.trace_path = field_or<std::string>(oj, "trace", "outputs", "");
    s.outputs.report_path = field_or<std::string>(oj, "report", "outputs", "");
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open scenario file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario_json(buf.str(),
                             std::filesystem::path(path).parent_path().string());
}

std::string scenario_to_json(const Scenario& s) {
  json j;
  j["schema_version"] = s.schema_version;
  j["case"] = s.case_path;
  j["horizon_s"] = s.horizon_s;
  j["dt_s"] = s.dt_s;
  j["seed"] = s.seed;
  j["noise"] = {{"enabled", s.noise.enabled},
                {"load", {{"alpha_per_s", s.noise.load.alpha}, {"sigma_rel", s.noise.load.sigma}}},
                {"wind", {{"alpha_per_s", s.noise.wind.alpha}, {"sigma_mps", s.noise.wind.sigma}}}};
  j["schedule"] = json::array();
  for (const auto& e : s.schedule.events()) {
    json ej = {{"t_s", e.t_start},
               {"target", device_ref_to_string(e.target)},
               {"kind", e.kind == EventKind::Step   ? "step"
                        : e.kind == EventKind::Ramp ? "ramp"
                                                    : "trip"}};
    if (e.kind != EventKind::Trip) ej["magnitude"] = e.magnitude;
    if (e.kind == EventKind::Ramp) ej["ramp_duration_s"] = e.ramp_duration;
    j["schedule"].push_back(ej);
  }
  json participants = json::array();
  for (int p : s.agc.participants) participants.push_back(p);
  const char* rule = s.agc.share_rule == AgcShareRule::Droop          ? "droop"
                     : s.agc.share_rule == AgcShareRule::InverseDroop ? "inverse_droop"
                                                                      : "rating";
  j["agc"] = {{"enabled", s.agc.enabled},   {"k_o", s.agc.k_o},
              {"t_sample_s", s.agc.t_sample_s}, {"dp_min", s.agc.dp_min},
              {"dp_max", s.agc.dp_max},     {"share_rule", rule},
              {"participants", participants}};
  j["apc_enabled"] = s.apc_enabled;
  j["apc_deadband_hz"] = s.apc_deadband_hz;
  j["constant_impedance_loads"] = s.constant_impedance_loads;
  j["outputs"] = {{"trace", s.outputs.trace_path}, {"report", s.outputs.report_path}};
  return j.dump(2) + "\n";
}

}  // namespace fqsim
