#include "fqsim/trace.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fqsim/errors.hpp"

namespace fqsim {

FrequencyTrace SimTrace::coi_trace() const {
  FrequencyTrace out;
  out.dt = dt;
  out.t0 = t.empty() ? 0.0 : t.front();
  out.f_hz = f_coi_hz;
  out.markers = markers;
  return out;
}

namespace {

void append_value(std::string& line, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  line += buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SchemaError("malformed number '" + s + "' in " + where);
  }
}

}  // namespace

void write_sim_trace_csv(const SimTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write trace file: " + path);

  std::string header = "t,f_coi_hz,delta_p_agc_pu";
  for (std::size_t i = 0; i < trace.f_machine_hz.size(); ++i)
    header += ",f_m" + std::to_string(i + 1) + "_hz";
  for (std::size_t u = 0; u < trace.p_bess_pu.size(); ++u)
    header += ",p_bess" + std::to_string(u + 1) + "_pu";
  out << header << "\n";

  std::string line;
  for (std::size_t k = 0; k < trace.t.size(); ++k) {
    line.clear();
    append_value(line, trace.t[k]);
    line += ',';
    append_value(line, trace.f_coi_hz[k]);
    line += ',';
    append_value(line, trace.dp_agc_pu[k]);
    for (const auto& col : trace.f_machine_hz) {
      line += ',';
      append_value(line, col[k]);
    }
    for (const auto& col : trace.p_bess_pu) {
      line += ',';
      append_value(line, col[k]);
    }
    out << line << "\n";
  }
}

SimTrace read_sim_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open trace file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("trace file is empty: " + path);
  const auto cols = split_csv(line);
  if (cols.size() < 3 || cols[0] != "t" || cols[1] != "f_coi_hz")
    throw SchemaError("trace file " + path + " lacks the t,f_coi_hz,... header");

  SimTrace tr;
  std::size_t n_mach = 0, n_bess = 0;
  for (const auto& c : cols) {
    if (c.rfind("f_m", 0) == 0) ++n_mach;
    if (c.rfind("p_bess", 0) == 0) ++n_bess;
  }
  tr.f_machine_hz.resize(n_mach);
  tr.p_bess_pu.resize(n_bess);

  std::size_t row = 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto vals = split_csv(line);
    if (vals.size() != cols.size())
      throw SchemaError("trace row " + std::to_string(row) + " has " +
                        std::to_string(vals.size()) + " columns, expected " +
                        std::to_string(cols.size()));
    const std::string where = "trace row " + std::to_string(row);
    std::size_t c = 0;
    tr.t.push_back(parse_double(vals[c++], where));
    tr.f_coi_hz.push_back(parse_double(vals[c++], where));
    tr.dp_agc_pu.push_back(parse_double(vals[c++], where));
    for (std::size_t i = 0; i < n_mach; ++i)
      tr.f_machine_hz[i].push_back(parse_double(vals[c++], where));
    for (std::size_t u = 0; u < n_bess; ++u)
      tr.p_bess_pu[u].push_back(parse_double(vals[c++], where));
    ++row;
  }
  if (tr.t.size() >= 2) tr.dt = tr.t[1] - tr.t[0];
  return tr;
}

FrequencyTrace read_frequency_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open trace file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("trace file is empty: " + path);
  const auto cols = split_csv(line);

  int f_col = -1;
  for (std::size_t c = 0; c < cols.size(); ++c)
    if (cols[c] == "f_coi_hz" || cols[c] == "f_hz") f_col = static_cast<int>(c);
  if (cols.empty() || cols[0] != "t" || f_col < 0)
    throw SchemaError("trace file " + path + " needs a t column and f_hz or f_coi_hz");

  FrequencyTrace tr;
  std::vector<double> ts;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto vals = split_csv(line);
    if (vals.size() != cols.size())
      throw SchemaError("trace row " + std::to_string(row) + " is ragged");
    const std::string where = "trace row " + std::to_string(row);
    ts.push_back(parse_double(vals[0], where));
    const double f = parse_double(vals[f_col], where);
    if (!std::isfinite(f)) throw ValidationError("non-finite frequency in " + where);
    tr.f_hz.push_back(f);
    ++row;
  }
  if (ts.size() < 2) throw ValidationError("trace has fewer than 2 samples");
  tr.t0 = ts.front();
  tr.dt = ts[1] - ts[0];
  if (tr.dt <= 0) throw ValidationError("trace time axis is not increasing");
  for (std::size_t i = 1; i < ts.size(); ++i) {
    const double expected = tr.t0 + static_cast<double>(i) * tr.dt;
    if (std::abs(ts[i] - expected) > 1e-6 * std::max(1.0, std::abs(expected)))
      throw ValidationError("trace sampling is not uniform near t=" +
                            std::to_string(ts[i]));
  }
  return tr;
}

void write_frequency_trace_csv(const FrequencyTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write trace file: " + path);
  out << "t,f_hz\n";
  std::string line;
  for (std::size_t i = 0; i < trace.f_hz.size(); ++i) {
    line.clear();
    append_value(line, trace.t(i));
    line += ',';
    append_value(line, trace.f_hz[i]);
    out << line << "\n";
  }
}

}  // namespace fqsim
