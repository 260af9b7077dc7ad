#include "edgetel/telemetry.hpp"

#include <charconv>
#include <cmath>
#include <string>

#include "edgetel/error.hpp"
#include "json_util.hpp"

namespace edgetel {

const char* to_string(PlatformKind kind) {
  switch (kind) {
    case PlatformKind::SimulatedDPU:
      return "SimulatedDPU";
  }
  return "unknown";
}

PlatformKind platform_kind_from_string(std::string_view s) {
  if (s == "SimulatedDPU") return PlatformKind::SimulatedDPU;
  throw ValidationError("platform_kind", "unknown platform kind '" + std::string(s) + "'");
}

bool is_valid_device_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id) {
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                    (c >= '0' && c <= '9') || c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

double model_efficiency(double fps, double workload_gops, double peak_gops_per_s) {
  if (!(workload_gops > 0.0)) throw DomainError("model_efficiency: workload_gops must be > 0");
  if (!(peak_gops_per_s > 0.0)) throw DomainError("model_efficiency: peak_gops_per_s must be > 0");
  if (!(fps >= 0.0)) throw DomainError("model_efficiency: fps must be >= 0");
  return fps * workload_gops / peak_gops_per_s;
}

double fps_per_watt(double fps, double power_w) {
  if (!(power_w > 0.0)) throw DomainError("fps_per_watt: power_w must be > 0");
  if (!(fps >= 0.0)) throw DomainError("fps_per_watt: fps must be >= 0");
  return fps / power_w;
}

namespace {

void require_finite(double v, const char* field) {
  if (!std::isfinite(v)) throw ValidationError(field, "must be finite");
}

void require_range(double v, double lo, double hi, const char* field) {
  require_finite(v, field);
  if (v < lo || v > hi) {
    throw ValidationError(field, "must be in [" + format_double(lo) + ", " + format_double(hi) +
                                     "], got " + format_double(v));
  }
}

void require_non_negative(double v, const char* field) {
  require_finite(v, field);
  if (v < 0.0) throw ValidationError(field, "must be non-negative, got " + format_double(v));
}

void require_positive(double v, const char* field) {
  require_finite(v, field);
  if (!(v > 0.0)) throw ValidationError(field, "must be positive, got " + format_double(v));
}

}  // namespace

void validate(const TelemetrySnapshot& s) {
  if (!is_valid_device_id(s.device.device_id)) {
    throw ValidationError("device_id", "must match [A-Za-z0-9_-]{1,64}");
  }

  require_positive(s.app.ee_latency_ms, "app.ee_latency_ms");
  require_non_negative(s.app.fps, "app.fps");
  if (s.app.fps > 0.0) {
    const double implied = 1000.0 / s.app.ee_latency_ms;
    if (std::abs(s.app.fps - implied) / s.app.fps > 0.05) {
      throw ValidationError("app.fps", "inconsistent with ee_latency_ms (more than 5% off)");
    }
  }

  require_range(s.model.accel_utilization, 0.0, 1.0, "model.accel_utilization");
  require_non_negative(s.model.mem_throughput_gbps, "model.mem_throughput_gbps");
  require_range(s.model.cpu_utilization, 0.0, 1.0, "model.cpu_utilization");
  require_range(s.model.mem_utilization, 0.0, 1.0, "model.mem_utilization");
  require_non_negative(s.model.model_efficiency, "model.model_efficiency");
  if (s.model.model_id.empty()) throw ValidationError("model.model_id", "must be non-empty");

  require_positive(s.energy.power_w, "energy.power_w");
  require_finite(s.energy.temp_c, "energy.temp_c");
  require_non_negative(s.energy.fps_per_watt, "energy.fps_per_watt");
  const double expected_fpw = s.app.fps / s.energy.power_w;
  const double scale = std::max(std::abs(expected_fpw), std::abs(s.energy.fps_per_watt));
  if (std::abs(expected_fpw - s.energy.fps_per_watt) > 1e-9 * scale) {
    throw ValidationError("energy.fps_per_watt", "must equal app.fps / energy.power_w");
  }

  require_range(s.network.rssi_dbm, kRssiMinDbm, kRssiMaxDbm, "network.rssi_dbm");
  require_range(s.network.rsrq_db, kRsrqMinDb, kRsrqMaxDb, "network.rsrq_db");
  require_range(s.network.rsrp_dbm, kRsrpMinDbm, kRsrpMaxDbm, "network.rsrp_dbm");
  require_finite(s.network.modem_temp_c, "network.modem_temp_c");
  require_non_negative(s.network.dl_mbps, "network.dl_mbps");
  require_non_negative(s.network.ul_mbps, "network.ul_mbps");
}

std::string format_double(double v) {
  if (v == 0.0 && std::signbit(v)) return "-0.0";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw DomainError("format_double: conversion failed");
  return std::string(buf, end);
}

namespace {

// Appends `"key":value` pairs; the caller supplies braces.
class ObjectWriter {
 public:
  explicit ObjectWriter(std::string& out) : out_(out) { out_ += '{'; }
  ~ObjectWriter() { out_ += '}'; }
  ObjectWriter(const ObjectWriter&) = delete;
  ObjectWriter& operator=(const ObjectWriter&) = delete;

  void number(std::string_view k, double v) { key(k) += format_double(v); }
  void integer(std::string_view k, std::uint64_t v) { key(k) += std::to_string(v); }
  void string(std::string_view k, std::string_view v) { key(k) += detail::quote(v); }
  std::string& key(std::string_view k) {
    if (!first_) out_ += ',';
    first_ = false;
    out_ += '"';
    out_ += k;
    out_ += "\":";
    return out_;
  }

 private:
  std::string& out_;
  bool first_ = true;
};

}  // namespace

std::string encode_snapshot(const TelemetrySnapshot& s) {
  validate(s);
  std::string out;
  out.reserve(512);
  {
    ObjectWriter root(out);
    root.string("device_id", s.device.device_id);
    root.string("platform_kind", to_string(s.device.platform_kind));
    root.integer("seq", s.seq);
    root.integer("device_time_ms", s.device_time_ms);
    root.key("app");
    {
      ObjectWriter w(out);
      w.number("ee_latency_ms", s.app.ee_latency_ms);
      w.number("fps", s.app.fps);
    }
    root.key("model");
    {
      ObjectWriter w(out);
      w.number("accel_utilization", s.model.accel_utilization);
      w.number("mem_throughput_gbps", s.model.mem_throughput_gbps);
      w.number("cpu_utilization", s.model.cpu_utilization);
      w.number("mem_utilization", s.model.mem_utilization);
      w.number("model_efficiency", s.model.model_efficiency);
      w.string("model_id", s.model.model_id);
    }
    root.key("energy");
    {
      ObjectWriter w(out);
      w.number("power_w", s.energy.power_w);
      w.number("temp_c", s.energy.temp_c);
      w.number("fps_per_watt", s.energy.fps_per_watt);
    }
    root.key("network");
    {
      ObjectWriter w(out);
      w.number("rssi_dbm", s.network.rssi_dbm);
      w.number("rsrq_db", s.network.rsrq_db);
      w.number("rsrp_dbm", s.network.rsrp_dbm);
      w.number("modem_temp_c", s.network.modem_temp_c);
      w.number("dl_mbps", s.network.dl_mbps);
      w.number("ul_mbps", s.network.ul_mbps);
    }
  }
  return out;
}

namespace {

using detail::check_keys;
using detail::get_double;
using detail::get_string;
using detail::get_u64;
using detail::json;

TelemetrySnapshot from_json(const json& doc) {
  check_keys(doc, "",
             {"device_id", "platform_kind", "seq", "device_time_ms", "app", "model", "energy",
              "network"});
  TelemetrySnapshot s;
  s.device.device_id = get_string(doc, "", "device_id");
  s.device.platform_kind = platform_kind_from_string(get_string(doc, "", "platform_kind"));
  s.seq = get_u64(doc, "", "seq");
  s.device_time_ms = get_u64(doc, "", "device_time_ms");

  const json& app = doc["app"];
  check_keys(app, "app", {"ee_latency_ms", "fps"});
  s.app.ee_latency_ms = get_double(app, "app", "ee_latency_ms");
  s.app.fps = get_double(app, "app", "fps");

  const json& model = doc["model"];
  check_keys(model, "model",
             {"accel_utilization", "mem_throughput_gbps", "cpu_utilization", "mem_utilization",
              "model_efficiency", "model_id"});
  s.model.accel_utilization = get_double(model, "model", "accel_utilization");
  s.model.mem_throughput_gbps = get_double(model, "model", "mem_throughput_gbps");
  s.model.cpu_utilization = get_double(model, "model", "cpu_utilization");
  s.model.mem_utilization = get_double(model, "model", "mem_utilization");
  s.model.model_efficiency = get_double(model, "model", "model_efficiency");
  s.model.model_id = get_string(model, "model", "model_id");

  const json& energy = doc["energy"];
  check_keys(energy, "energy", {"power_w", "temp_c", "fps_per_watt"});
  s.energy.power_w = get_double(energy, "energy", "power_w");
  s.energy.temp_c = get_double(energy, "energy", "temp_c");
  s.energy.fps_per_watt = get_double(energy, "energy", "fps_per_watt");

  const json& net = doc["network"];
  check_keys(net, "network",
             {"rssi_dbm", "rsrq_db", "rsrp_dbm", "modem_temp_c", "dl_mbps", "ul_mbps"});
  s.network.rssi_dbm = get_double(net, "network", "rssi_dbm");
  s.network.rsrq_db = get_double(net, "network", "rsrq_db");
  s.network.rsrp_dbm = get_double(net, "network", "rsrp_dbm");
  s.network.modem_temp_c = get_double(net, "network", "modem_temp_c");
  s.network.dl_mbps = get_double(net, "network", "dl_mbps");
  s.network.ul_mbps = get_double(net, "network", "ul_mbps");

  validate(s);
  return s;
}

}  // namespace

TelemetrySnapshot decode_snapshot(std::string_view bytes) {
  return from_json(detail::parse_json(bytes));
}

}  // namespace edgetel
