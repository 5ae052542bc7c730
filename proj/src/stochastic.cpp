#include "fqsim/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fqsim/errors.hpp"

namespace fqsim {

NormalStream::NormalStream(std::uint64_t seed) : engine_(seed) {}

double NormalStream::next() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 53-bit uniforms in (0, 1]; u1 stays away from zero for the log.
  const double inv = 0x1p-53;
  const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * inv;
  const double u2 = static_cast<double>(engine_() >> 11) * inv;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

OuProcess::OuProcess(double alpha, double mu, double sigma, std::uint64_t seed)
    : alpha_(alpha), mu_(mu), sigma_(sigma), eta_(mu), noise_(seed) {
  if (alpha <= 0) throw ValidationError("OU process requires alpha > 0");
  if (sigma < 0) throw ValidationError("OU process requires sigma >= 0");
}

double OuProcess::step(double dt) {
  const double xi = noise_.next(); // drawn even at sigma = 0 to keep streams aligned
  eta_ += alpha_ * (mu_ - eta_) * dt + sigma_ * std::sqrt(dt) * xi;
  return eta_;
}

std::uint64_t derive_stream_seed(std::uint64_t master_seed, std::uint32_t stream_index) {
  // splitmix64 over master ^ index keeps per-device streams decorrelated while
  // staying platform-stable.
  std::uint64_t z = master_seed + 0x9E3779B97F4A7C15ULL * (stream_index + 1ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

DeviceRef parse_device_ref(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos)
    throw SchemaError("device reference '" + text + "' must look like kind:bus");
  const std::string kind = text.substr(0, colon);
  DeviceRef ref;
  if (kind == "load") ref.kind = TargetKind::Load;
  else if (kind == "wind") ref.kind = TargetKind::Wind;
  else if (kind == "machine") ref.kind = TargetKind::Machine;
  else throw SchemaError("device reference kind '" + kind + "' must be load|wind|machine");
  try {
    ref.bus = std::stoi(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw SchemaError("device reference '" + text + "' has a malformed bus id");
  }
  return ref;
}

std::string device_ref_to_string(const DeviceRef& ref) {
  const char* kind = ref.kind == TargetKind::Load    ? "load"
                     : ref.kind == TargetKind::Wind ? "wind"
                                                    : "machine";
  return std::string(kind) + ":" + std::to_string(ref.bus);
}

PerturbationSchedule::PerturbationSchedule(std::vector<PerturbationEvent> events)
    : events_(std::move(events)) {
  for (const auto& e : events_) {
    if (e.kind == EventKind::Ramp && e.ramp_duration <= 0)
      throw ValidationError("ramp event at t=" + std::to_string(e.t_start) +
                            " requires ramp_duration > 0");
    if (e.kind == EventKind::Trip && e.target.kind != TargetKind::Machine)
      throw ValidationError("trip event at t=" + std::to_string(e.t_start) +
                            " must target a machine");
  }
  std::stable_sort(events_.begin(), events_.end(),
                   [](const PerturbationEvent& a, const PerturbationEvent& b) {
                     return a.t_start < b.t_start;
                   });
}

double PerturbationSchedule::value(const DeviceRef& device, double t) const {
  double total = 0.0;
  for (const auto& e : events_) {
    if (e.kind == EventKind::Trip || !(e.target == device)) continue;
    if (t < e.t_start) break; // events are time-ordered
    if (e.kind == EventKind::Step) {
      total += e.magnitude;
    } else {
      const double frac = std::min(1.0, (t - e.t_start) / e.ramp_duration);
      total += e.magnitude * frac;
    }
  }
  return total;
}

bool PerturbationSchedule::tripped(int machine_bus, double t) const {
  for (const auto& e : events_) {
    if (e.kind != EventKind::Trip) continue;
    if (t < e.t_start) break;
    if (e.target.bus == machine_bus) return true;
  }
  return false;
}

}  // namespace fqsim
