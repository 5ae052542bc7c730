#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace fqsim {

// Deterministic standard-normal stream. The Box-Muller transform is fixed here
// because std::normal_distribution's algorithm is implementation-defined and
// would break bit-identical traces across toolchains.
class NormalStream {
public:
  explicit NormalStream(std::uint64_t seed);
  double next();

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Mean-reverting Gaussian process, Euler-Maruyama discretization:
//   eta <- eta + alpha*(mu - eta)*dt + sigma*sqrt(dt)*xi
class OuProcess {
public:
  OuProcess(double alpha, double mu, double sigma, std::uint64_t seed);

  double step(double dt);
  double value() const { return eta_; }
  void reset(double eta0) { eta_ = eta0; }

  double alpha() const { return alpha_; }
  double mu() const { return mu_; }
  double sigma() const { return sigma_; }

private:
  double alpha_;
  double mu_;
  double sigma_;
  double eta_;
  NormalStream noise_;
};

// Stable derivation of one stream seed per device from the scenario master seed.
std::uint64_t derive_stream_seed(std::uint64_t master_seed, std::uint32_t stream_index);

enum class EventKind { Step, Ramp, Trip };

enum class TargetKind { Load, Wind, Machine };

struct DeviceRef {
  TargetKind kind = TargetKind::Load;
  int bus = 0;
  bool operator==(const DeviceRef&) const = default;
};

// Parses "load:12" / "wind:32" / "machine:37". Throws SchemaError otherwise.
DeviceRef parse_device_ref(const std::string& text);
std::string device_ref_to_string(const DeviceRef& ref);

struct PerturbationEvent {
  double t_start = 0.0;       // s
  DeviceRef target;
  EventKind kind = EventKind::Step;
  double magnitude = 0.0;     // pu for loads, m/s for wind
  double ramp_duration = 0.0; // s, > 0 for ramps
};

class PerturbationSchedule {
public:
  PerturbationSchedule() = default;
  explicit PerturbationSchedule(std::vector<PerturbationEvent> events);

  // Sum of completed steps plus linear interpolation inside active ramps.
  // Trips contribute nothing here; query tripped() instead.
  double value(const DeviceRef& device, double t) const;

  // True once a trip event for this machine has fired (t >= t_start).
  bool tripped(int machine_bus, double t) const;

  const std::vector<PerturbationEvent>& events() const { return events_; }

private:
  std::vector<PerturbationEvent> events_;
};

}  // namespace fqsim
