#include "fqsim/case.hpp"

#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fqsim/errors.hpp"

namespace fqsim {

using nlohmann::json;

namespace {

// Typed field access that names the offending location on failure.
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

BusKind parse_kind(const std::string& s, const std::string& where) {
  if (s == "slack") return BusKind::Slack;
  if (s == "generator") return BusKind::Generator;
  if (s == "load") return BusKind::Load;
  throw SchemaError("field 'kind' in " + where + " must be slack|generator|load");
}

const char* kind_name(BusKind k) {
  switch (k) {
    case BusKind::Slack: return "slack";
    case BusKind::Generator: return "generator";
    default: return "load";
  }
}

}  // namespace

int PowerSystemCase::bus_index(int bus_id) const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].id == bus_id) return static_cast<int>(i);
  return -1;
}

const Bus& PowerSystemCase::bus_by_id(int bus_id) const {
  int idx = bus_index(bus_id);
  if (idx < 0) throw ValidationError("unknown bus id " + std::to_string(bus_id));
  return buses[idx];
}

int PowerSystemCase::slack_index() const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].kind == BusKind::Slack) return static_cast<int>(i);
  return -1;
}

void validate_case(const PowerSystemCase& c) {
  if (c.base_mva <= 0) throw ValidationError("base_mva must be > 0");
  if (c.f_nom <= 0) throw ValidationError("f_nom must be > 0");
  if (c.buses.empty()) throw ValidationError("case has no buses");

  std::set<int> ids;
  int slack_count = 0;
  for (const auto& b : c.buses) {
    if (!ids.insert(b.id).second)
      throw ValidationError("duplicate bus id " + std::to_string(b.id));
    if (b.v_init <= 0)
      throw ValidationError("bus " + std::to_string(b.id) + ": v_init must be > 0");
    if (b.kind == BusKind::Slack) ++slack_count;
  }
  if (slack_count != 1)
    throw ValidationError("case must declare exactly one slack bus, found " +
                          std::to_string(slack_count));

  for (const auto& br : c.branches) {
    if (!ids.count(br.from) || !ids.count(br.to))
      throw ValidationError("branch " + std::to_string(br.from) + "-" +
                            std::to_string(br.to) + " references a missing bus");
    if (br.x == 0.0)
      throw ValidationError("branch " + std::to_string(br.from) + "-" +
                            std::to_string(br.to) + ": x must be nonzero");
  }

  // Connectivity over the branch graph.
  std::set<int> reached;
  std::queue<int> frontier;
  frontier.push(c.buses.front().id);
  reached.insert(c.buses.front().id);
  while (!frontier.empty()) {
    int u = frontier.front();
    frontier.pop();
    for (const auto& br : c.branches) {
      int other = -1;
      if (br.from == u) other = br.to;
      else if (br.to == u) other = br.from;
      if (other >= 0 && reached.insert(other).second) frontier.push(other);
    }
  }
  for (const auto& b : c.buses)
    if (!reached.count(b.id))
      throw ValidationError("network is not connected: bus " + std::to_string(b.id) +
                            " is unreachable from bus " +
                            std::to_string(c.buses.front().id));

  std::set<int> gen_buses;
  auto claim_bus = [&](int bus, const char* what) {
    if (!ids.count(bus))
      throw ValidationError(std::string(what) + " references missing bus " +
                            std::to_string(bus));
    if (!gen_buses.insert(bus).second)
      throw ValidationError("bus " + std::to_string(bus) +
                            " hosts more than one generating device");
  };

  for (const auto& m : c.machines) {
    claim_bus(m.bus, "machine");
    const std::string where = "machine at bus " + std::to_string(m.bus);
    if (m.s_mva <= 0) throw ValidationError(where + ": s_mva must be > 0");
    if (m.h_s <= 0) throw ValidationError(where + ": h_s must be > 0");
    if (m.t_d0_p <= 0 || m.t_q0_p <= 0)
      throw ValidationError(where + ": transient time constants must be > 0");
    if (!(m.x_d >= m.x_d_p && m.x_d_p > 0))
      throw ValidationError(where + ": requires x_d >= x_d' > 0");
    if (!(m.x_q >= m.x_q_p && m.x_q_p > 0))
      throw ValidationError(where + ": requires x_q >= x_q' > 0");
    if (m.governor.r <= 0) throw ValidationError(where + ": governor droop must be > 0");
    if (m.governor.p_min > m.governor.p_max)
      throw ValidationError(where + ": governor limits inverted");
  }
  for (const auto& w : c.wind_plants) {
    claim_bus(w.bus, "wind plant");
    const std::string where = "wind plant at bus " + std::to_string(w.bus);
    if (w.s_mva <= 0) throw ValidationError(where + ": s_mva must be > 0");
    if (w.h_w <= 0) throw ValidationError(where + ": h_w must be > 0");
    if (w.omega_min <= 0 || w.omega_max <= w.omega_min)
      throw ValidationError(where + ": rotor speed limits invalid");
    if (w.r_apc <= 0) throw ValidationError(where + ": r_apc must be > 0");
  }
  for (const auto& b : c.bess_units) {
    if (!ids.count(b.bus))
      throw ValidationError("bess references missing bus " + std::to_string(b.bus));
    if (b.p_ffr < 0)
      throw ValidationError("bess at bus " + std::to_string(b.bus) +
                            ": p_ffr must be >= 0");
  }
  for (const auto& l : c.loads)
    if (!ids.count(l.bus))
      throw ValidationError("load references missing bus " + std::to_string(l.bus));
}

PowerSystemCase parse_case_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("case file is not valid JSON: ") + e.what());
  }

  PowerSystemCase c;
  c.base_mva = field<double>(j, "base_mva", "case");
  c.f_nom = field<double>(j, "f_nom", "case");
  c.notes = field_or<std::string>(j, "notes", "case", "");

  for (const auto& bj : field<json>(j, "buses", "case")) {
    Bus b;
    b.id = field<int>(bj, "id", "bus");
    const std::string where = "bus " + std::to_string(b.id);
    b.kind = parse_kind(field<std::string>(bj, "kind", where), where);
    b.v_init = field<double>(bj, "v_init", where);
    b.theta_init = field_or<double>(bj, "theta_init", where, 0.0);
    c.buses.push_back(b);
  }

  for (const auto& bj : field<json>(j, "branches", "case")) {
    Branch br;
    br.from = field<int>(bj, "from", "branch");
    br.to = field<int>(bj, "to", "branch");
    const std::string where =
        "branch " + std::to_string(br.from) + "-" + std::to_string(br.to);
    br.r = field<double>(bj, "r", where);
    br.x = field<double>(bj, "x", where);
    br.b_shunt = field_or<double>(bj, "b_shunt", where, 0.0);
    c.branches.push_back(br);
  }

  for (const auto& mj : field<json>(j, "machines", "case")) {
    MachineParams m;
    m.bus = field<int>(mj, "bus", "machine");
    const std::string where = "machine at bus " + std::to_string(m.bus);
    m.s_mva = field<double>(mj, "s_mva", where);
    m.h_s = field<double>(mj, "h_s", where);
    m.d_pu = field_or<double>(mj, "d_pu", where, 0.0);
    m.x_d = field<double>(mj, "x_d", where);
    m.x_d_p = field<double>(mj, "x_d_p", where);
    m.x_q = field<double>(mj, "x_q", where);
    m.x_q_p = field<double>(mj, "x_q_p", where);
    m.t_d0_p = field<double>(mj, "t_d0_p", where);
    m.t_q0_p = field<double>(mj, "t_q0_p", where);
    m.p_sched = field<double>(mj, "p_sched", where);
    if (mj.contains("governor")) {
      const json& gj = mj.at("governor");
      m.governor.r = field<double>(gj, "r", where + " governor");
      m.governor.deadband_hz = field_or<double>(gj, "deadband_hz", where, 0.015);
      m.governor.t_g = field_or<double>(gj, "t_g", where, 0.2);
      m.governor.t_t = field_or<double>(gj, "t_t", where, 0.5);
      m.governor.p_min = field_or<double>(gj, "p_min", where, 0.0);
      m.governor.p_max = field_or<double>(gj, "p_max", where, 1.0);
    }
    if (mj.contains("exciter")) {
      const json& ej = mj.at("exciter");
      m.exciter.k_a = field_or<double>(ej, "k_a", where, 200.0);
      m.exciter.t_a = field_or<double>(ej, "t_a", where, 0.02);
      m.exciter.efd_min = field_or<double>(ej, "efd_min", where, 0.0);
      m.exciter.efd_max = field_or<double>(ej, "efd_max", where, 7.0);
    }
    c.machines.push_back(m);
  }

  for (const auto& wj : field<json>(j, "wind", "case")) {
    WindParams w;
    w.bus = field<int>(wj, "bus", "wind plant");
    const std::string where = "wind plant at bus " + std::to_string(w.bus);
    w.s_mva = field<double>(wj, "s_mva", where);
    w.h_w = field_or<double>(wj, "h_w", where, 4.0);
    w.x_m = field_or<double>(wj, "x_m", where, 3.0);
    w.p_rated = field_or<double>(wj, "p_rated", where, 1.0);
    w.omega_max = field_or<double>(wj, "omega_max", where, 1.2);
    w.omega_min = field_or<double>(wj, "omega_min", where, 0.7);
    w.k_mppt = field_or<double>(wj, "k_mppt", where, 0.0);
    w.lambda_tip = field_or<double>(wj, "lambda_tip", where, 85.0);
    w.v_rated = field_or<double>(wj, "v_rated", where, 12.0);
    w.t_power = field_or<double>(wj, "t_power", where, 0.1);
    w.t_voltage = field_or<double>(wj, "t_voltage", where, 0.05);
    w.k_voltage = field_or<double>(wj, "k_voltage", where, 10.0);
    w.t_pitch = field_or<double>(wj, "t_pitch", where, 2.0);
    w.k_pitch = field_or<double>(wj, "k_pitch", where, 80.0);
    w.beta_max_deg = field_or<double>(wj, "beta_max_deg", where, 30.0);
    w.t_fmeas = field_or<double>(wj, "t_fmeas", where, 0.1);
    w.r_apc = field_or<double>(wj, "r_apc", where, 0.04);
    w.apc_headroom = field_or<double>(wj, "apc_headroom", where, 0.0);
    w.p_sched = field<double>(wj, "p_sched", where);
    c.wind_plants.push_back(w);
  }

  for (const auto& bj : field<json>(j, "bess", "case")) {
    BessParams b;
    b.bus = field<int>(bj, "bus", "bess");
    const std::string where = "bess at bus " + std::to_string(b.bus);
    b.p_ffr = field<double>(bj, "p_ffr", where);
    b.f_trigger_hz = field_or<double>(bj, "f_trigger_hz", where, 49.8);
    b.delay_s = field_or<double>(bj, "delay_s", where, 0.15);
    b.hysteresis_hz = field_or<double>(bj, "hysteresis_hz", where, 0.05);
    c.bess_units.push_back(b);
  }

  for (const auto& lj : field<json>(j, "loads", "case")) {
    LoadParams l;
    l.bus = field<int>(lj, "bus", "load");
    const std::string where = "load at bus " + std::to_string(l.bus);
    l.p = field<double>(lj, "p", where);
    l.q = field<double>(lj, "q", where);
    c.loads.push_back(l);
  }

  validate_case(c);
  return c;
}

PowerSystemCase load_case(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open case file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_case_json(buf.str());
}

std::string case_to_json(const PowerSystemCase& c) {
  json j;
  j["base_mva"] = c.base_mva;
  j["f_nom"] = c.f_nom;
  if (!c.notes.empty()) j["notes"] = c.notes;

  j["buses"] = json::array();
  for (const auto& b : c.buses)
    j["buses"].push_back({{"id", b.id},
                          {"kind", kind_name(b.kind)},
                          {"v_init", b.v_init},
                          {"theta_init", b.theta_init}});

  j["branches"] = json::array();
  for (const auto& br : c.branches)
    j["branches"].push_back(
        {{"from", br.from}, {"to", br.to}, {"r", br.r}, {"x", br.x}, {"b_shunt", br.b_shunt}});

  j["machines"] = json::array();
  for (const auto& m : c.machines) {
    json gj = {{"r", m.governor.r},       {"deadband_hz", m.governor.deadband_hz},
               {"t_g", m.governor.t_g},   {"t_t", m.governor.t_t},
               {"p_min", m.governor.p_min}, {"p_max", m.governor.p_max}};
    json ej = {{"k_a", m.exciter.k_a},
               {"t_a", m.exciter.t_a},
               {"efd_min", m.exciter.efd_min},
               {"efd_max", m.exciter.efd_max}};
    j["machines"].push_back({{"bus", m.bus},     {"s_mva", m.s_mva},
                             {"h_s", m.h_s},     {"d_pu", m.d_pu},
                             {"x_d", m.x_d},     {"x_d_p", m.x_d_p},
                             {"x_q", m.x_q},     {"x_q_p", m.x_q_p},
                             {"t_d0_p", m.t_d0_p}, {"t_q0_p", m.t_q0_p},
                             {"p_sched", m.p_sched}, {"governor", gj},
                             {"exciter", ej}});
  }

  j["wind"] = json::array();
  for (const auto& w : c.wind_plants)
    j["wind"].push_back({{"bus", w.bus},
                         {"s_mva", w.s_mva},
                         {"h_w", w.h_w},
                         {"x_m", w.x_m},
                         {"p_rated", w.p_rated},
                         {"omega_max", w.omega_max},
                         {"omega_min", w.omega_min},
                         {"k_mppt", w.k_mppt},
                         {"lambda_tip", w.lambda_tip},
                         {"v_rated", w.v_rated},
                         {"t_power", w.t_power},
                         {"t_voltage", w.t_voltage},
                         {"k_voltage", w.k_voltage},
                         {"t_pitch", w.t_pitch},
                         {"k_pitch", w.k_pitch},
                         {"beta_max_deg", w.beta_max_deg},
                         {"t_fmeas", w.t_fmeas},
                         {"r_apc", w.r_apc},
                         {"apc_headroom", w.apc_headroom},
                         {"p_sched", w.p_sched}});

  j["bess"] = json::array();
  for (const auto& b : c.bess_units)
    j["bess"].push_back({{"bus", b.bus},
                         {"p_ffr", b.p_ffr},
                         {"f_trigger_hz", b.f_trigger_hz},
                         {"delay_s", b.delay_s},
                         {"hysteresis_hz", b.hysteresis_hz}});

  j["loads"] = json::array();
  for (const auto& l : c.loads)
    j["loads"].push_back({{"bus", l.bus}, {"p", l.p}, {"q", l.q}});

  return j.dump(2) + "\n";
}

void save_case(const PowerSystemCase& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write case file: " + path);
  out << case_to_json(c);
}

bool cases_identical(const PowerSystemCase& a, const PowerSystemCase& b) {
  return case_to_json(a) == case_to_json(b);
}

}  // namespace fqsim
