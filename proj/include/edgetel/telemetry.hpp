#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace edgetel {

enum class PlatformKind { SimulatedDPU };

const char* to_string(PlatformKind kind);
PlatformKind platform_kind_from_string(std::string_view s);

struct DeviceIdentity {
  std::string device_id;
  PlatformKind platform_kind = PlatformKind::SimulatedDPU;

  bool operator==(const DeviceIdentity&) const = default;
};

// True iff id matches [A-Za-z0-9_-]{1,64}.
bool is_valid_device_id(std::string_view id);

struct AppMetrics {
  double ee_latency_ms = 0.0;  // end-to-end per-frame latency
  double fps = 0.0;

  bool operator==(const AppMetrics&) const = default;
};

struct ModelMetrics {
  double accel_utilization = 0.0;
  double mem_throughput_gbps = 0.0;
  double cpu_utilization = 0.0;
  double mem_utilization = 0.0;
  double model_efficiency = 0.0;
  std::string model_id;

  bool operator==(const ModelMetrics&) const = default;
};

struct EnergyMetrics {
  double power_w = 0.0;  // whole-platform power
  double temp_c = 0.0;
  double fps_per_watt = 0.0;

  bool operator==(const EnergyMetrics&) const = default;
};

struct NetworkMetrics {
  double rssi_dbm = -70.0;
  double rsrq_db = -10.0;
  double rsrp_dbm = -90.0;
  double modem_temp_c = 40.0;
  double dl_mbps = 0.0;
  double ul_mbps = 0.0;

  bool operator==(const NetworkMetrics&) const = default;
};

// Standard LTE reporting ranges; synthesized network metrics stay inside.
inline constexpr double kRssiMinDbm = -120.0;
inline constexpr double kRssiMaxDbm = 0.0;
inline constexpr double kRsrpMinDbm = -140.0;
inline constexpr double kRsrpMaxDbm = -40.0;
inline constexpr double kRsrqMinDb = -25.0;
inline constexpr double kRsrqMaxDb = 0.0;

struct TelemetrySnapshot {
  DeviceIdentity device;
  std::uint64_t seq = 0;
  std::uint64_t device_time_ms = 0;
  AppMetrics app;
  ModelMetrics model;
  EnergyMetrics energy;
  NetworkMetrics network;

  bool operator==(const TelemetrySnapshot&) const = default;
};

// Share of the accelerator's peak compute the model achieves:
// fps / (peak / workload). Throws DomainError on non-positive workload or peak,
// or negative fps.
double model_efficiency(double fps, double workload_gops, double peak_gops_per_s);

// Throws DomainError when power_w <= 0.
double fps_per_watt(double fps, double power_w);

// Checks every snapshot invariant that can be checked without a model profile.
// Throws ValidationError naming the first offending field.
void validate(const TelemetrySnapshot& s);

// Canonical JSON: fixed key order, no whitespace, shortest round-trip numbers.
std::string encode_snapshot(const TelemetrySnapshot& s);

// Throws ParseError, SchemaError or ValidationError.
TelemetrySnapshot decode_snapshot(std::string_view bytes);

// Shortest decimal form that parses back to the same double. Negative zero is
// written as "-0.0" so it survives a JSON round trip.
std::string format_double(double v);

}  // namespace edgetel
