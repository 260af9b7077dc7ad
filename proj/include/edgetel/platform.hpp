#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "edgetel/telemetry.hpp"

namespace edgetel {

struct FrequencyLevel {
  int index = 0;
  double ratio = 1.0;  // fraction of max clock; the top level is exactly 1.0

  bool operator==(const FrequencyLevel&) const = default;
};

struct ThermalConfig {
  double ambient_c = 25.0;
  double heating_coeff_c_per_w = 1.5;
  double time_constant_s = 30.0;
};

// Deployable model descriptor. `accel_utilization` and `mem_gbit_per_frame`
// are per-model calibration values for the simulator.
struct ModelProfile {
  std::string model_id;
  double workload_gops = 0.0;      // per frame
  double base_latency_ms = 0.0;    // end-to-end latency at the top frequency level
  std::string artifact_digest;     // sha256 of the model blob, lowercase hex
  std::uint64_t artifact_size_bytes = 0;
  double accel_utilization = 1.0;  // nominal accelerator busy fraction
  double mem_gbit_per_frame = 1.0;

  bool operator==(const ModelProfile&) const = default;
};

void validate(const ModelProfile& p);

struct PlatformConfig {
  // Accelerator peak compute. Not published for the target board; 4460 is a
  // configuration assumption, see README.
  double peak_gops_per_s = 4460.0;
  std::vector<double> level_ratios{0.25, 0.4, 0.55, 0.7, 0.85, 1.0};
  double static_power_w = 8.0;
  double dynamic_power_max_w = 14.98;
  double power_exponent = 3.0;
  double cpu_overhead_ms = 4.4;
  double mem_peak_gbps = 136.0;
  ThermalConfig thermal;
  std::uint64_t noise_seed = 1;
  double noise_amplitude = 0.02;  // multiplicative, utilizations only; 0 disables
  std::uint64_t epoch_ms = 0;     // device clock at sim_time 0
};

// Throws ConfigError naming the first invalid field.
void validate(const PlatformConfig& cfg);

PlatformConfig platform_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PlatformConfig& cfg);
ModelProfile model_profile_from_json(const nlohmann::json& j, std::string_view path = "model");
nlohmann::json to_json(const ModelProfile& p);

// Deterministic stand-in for a compiled model artifact.
std::string synthetic_model_blob(std::string_view model_id, std::size_t size_bytes);

// `yolov3` and `ssd_resnet50_fpn`, calibrated against the ZCU102 board
// figures (29.4 ms / 1.48 FPS/W and 200 ms / 0.37 FPS/W).
const std::vector<ModelProfile>& builtin_profiles();
const ModelProfile& builtin_profile(std::string_view model_id);

// Single-owner simulated edge platform.
class Platform {
 public:
  Platform(PlatformConfig cfg, ModelProfile initial_model, DeviceIdentity device);

  const PlatformConfig& config() const { return cfg_; }
  const DeviceIdentity& device() const { return device_; }
  FrequencyLevel level() const { return {level_, cfg_.level_ratios[level_]}; }
  int level_count() const { return static_cast<int>(cfg_.level_ratios.size()); }
  const ModelProfile& active_model() const { return model_; }
  std::uint64_t sim_time_ms() const { return sim_time_ms_; }
  double temp_c() const { return temp_c_; }
  double accel_utilization() const { return accel_util_; }
  double cpu_utilization() const { return cpu_util_; }
  double mem_throughput_gbps() const { return mem_gbps_; }
  double mem_utilization() const { return mem_util_; }
  std::uint64_t next_seq() const { return seq_; }

  // cpu_overhead + (base_latency - cpu_overhead) / ratio
  double inference_latency_ms() const;
  double fps() const { return 1000.0 / inference_latency_ms(); }
  // static + dynamic_max * ratio^exponent * nominal accelerator utilization
  double power_w() const;

  // Returns false when `index` is already the current level. Throws RangeError.
  bool set_frequency_level(int index);
  void load_model(const ModelProfile& profile);
  // Throws PreconditionError on dt_ms == 0.
  void advance(std::uint64_t dt_ms);
  // Throws PreconditionError if the platform has never been advanced.
  TelemetrySnapshot sample_metrics(const NetworkMetrics& net);

  // Full state (including RNG) as canonical JSON; used to check that rejected
  // actions leave the platform untouched.
  std::string encode_state() const;

 private:
  void update_utilizations();
  double noise_factor();

  PlatformConfig cfg_;
  ModelProfile model_;
  DeviceIdentity device_;
  int level_ = 0;
  std::uint64_t sim_time_ms_ = 0;
  double temp_c_ = 0.0;
  double accel_util_ = 0.0;
  double cpu_util_ = 0.0;
  double mem_gbps_ = 0.0;
  double mem_util_ = 0.0;
  std::uint64_t seq_ = 0;
  bool advanced_ = false;
  std::mt19937_64 rng_;
};

Platform init_platform(const PlatformConfig& cfg, const ModelProfile& initial_model,
                       DeviceIdentity device = {"sim0", PlatformKind::SimulatedDPU});

}  // namespace edgetel
