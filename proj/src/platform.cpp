#include "edgetel/platform.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "edgetel/error.hpp"
#include "edgetel/sha256.hpp"
#include "json_util.hpp"

namespace edgetel {

using detail::json;

void validate(const ModelProfile& p) {
  if (p.model_id.empty()) throw ValidationError("model_id", "must be non-empty");
  if (p.model_id.find('@') != std::string::npos) {
    throw ValidationError("model_id", "'@' is reserved for placement tags");
  }
  if (!(p.workload_gops > 0.0) || !std::isfinite(p.workload_gops)) {
    throw ValidationError("workload_gops", "must be positive");
  }
  if (!(p.base_latency_ms > 0.0) || !std::isfinite(p.base_latency_ms)) {
    throw ValidationError("base_latency_ms", "must be positive");
  }
  if (!is_sha256_hex(p.artifact_digest)) {
    throw ValidationError("artifact_digest", "must be 64 lowercase hex characters");
  }
  if (p.artifact_size_bytes == 0) throw ValidationError("artifact_size_bytes", "must be positive");
  if (!(p.accel_utilization >= 0.0 && p.accel_utilization <= 1.0)) {
    throw ValidationError("accel_utilization", "must be in [0, 1]");
  }
  if (!(p.mem_gbit_per_frame >= 0.0) || !std::isfinite(p.mem_gbit_per_frame)) {
    throw ValidationError("mem_gbit_per_frame", "must be non-negative");
  }
}

void validate(const PlatformConfig& cfg) {
  auto positive = [](double v, const char* field) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(field, "must be positive");
  };
  positive(cfg.peak_gops_per_s, "peak_gops_per_s");
  if (cfg.level_ratios.empty()) throw ConfigError("levels", "must not be empty");
  for (std::size_t i = 0; i < cfg.level_ratios.size(); ++i) {
    const double r = cfg.level_ratios[i];
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("levels", "ratios must be in (0, 1]");
    if (i > 0 && !(r > cfg.level_ratios[i - 1])) {
      throw ConfigError("levels", "ratios must strictly increase");
    }
  }
  if (cfg.level_ratios.back() != 1.0) throw ConfigError("levels", "top ratio must be exactly 1.0");
  positive(cfg.static_power_w, "static_power_w");
  positive(cfg.dynamic_power_max_w, "dynamic_power_max_w");
  if (!(cfg.power_exponent >= 1.0) || !std::isfinite(cfg.power_exponent)) {
    throw ConfigError("power_exponent", "must be >= 1");
  }
  if (!(cfg.cpu_overhead_ms >= 0.0) || !std::isfinite(cfg.cpu_overhead_ms)) {
    throw ConfigError("cpu_overhead_ms", "must be non-negative");
  }
  positive(cfg.mem_peak_gbps, "mem_peak_gbps");
  if (!std::isfinite(cfg.thermal.ambient_c)) throw ConfigError("thermal.ambient_c", "must be finite");
  if (!(cfg.thermal.heating_coeff_c_per_w >= 0.0)) {
    throw ConfigError("thermal.heating_coeff_c_per_w", "must be non-negative");
  }
  positive(cfg.thermal.time_constant_s, "thermal.time_constant_s");
  if (!(cfg.noise_amplitude >= 0.0 && cfg.noise_amplitude < 1.0)) {
    throw ConfigError("noise_amplitude", "must be in [0, 1)");
  }
}

PlatformConfig platform_config_from_json(const json& j) {
  using detail::value_or;
  detail::check_keys(j, "platform", {},
                     {"peak_gops_per_s", "levels", "static_power_w", "dynamic_power_max_w",
                      "power_exponent", "cpu_overhead_ms", "mem_peak_gbps", "thermal",
                      "noise_seed", "noise_amplitude", "epoch_ms"});
  PlatformConfig cfg;
  const std::string p = "platform";
  cfg.peak_gops_per_s = value_or(j, p, "peak_gops_per_s", cfg.peak_gops_per_s);
  if (auto it = j.find("levels"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("levels", "expected array of ratios");
    cfg.level_ratios.clear();
    for (const auto& r : *it) cfg.level_ratios.push_back(detail::as_double(r, "platform.levels"));
  }
  cfg.static_power_w = value_or(j, p, "static_power_w", cfg.static_power_w);
  cfg.dynamic_power_max_w = value_or(j, p, "dynamic_power_max_w", cfg.dynamic_power_max_w);
  cfg.power_exponent = value_or(j, p, "power_exponent", cfg.power_exponent);
  cfg.cpu_overhead_ms = value_or(j, p, "cpu_overhead_ms", cfg.cpu_overhead_ms);
  cfg.mem_peak_gbps = value_or(j, p, "mem_peak_gbps", cfg.mem_peak_gbps);
  if (auto it = j.find("thermal"); it != j.end()) {
    detail::check_keys(*it, "platform.thermal", {},
                       {"ambient_c", "heating_coeff_c_per_w", "time_constant_s"});
    const std::string tp = "platform.thermal";
    cfg.thermal.ambient_c = value_or(*it, tp, "ambient_c", cfg.thermal.ambient_c);
    cfg.thermal.heating_coeff_c_per_w =
        value_or(*it, tp, "heating_coeff_c_per_w", cfg.thermal.heating_coeff_c_per_w);
    cfg.thermal.time_constant_s = value_or(*it, tp, "time_constant_s", cfg.thermal.time_constant_s);
  }
  cfg.noise_seed = value_or<std::uint64_t>(j, p, "noise_seed", cfg.noise_seed);
  cfg.noise_amplitude = value_or(j, p, "noise_amplitude", cfg.noise_amplitude);
  cfg.epoch_ms = value_or<std::uint64_t>(j, p, "epoch_ms", cfg.epoch_ms);
  validate(cfg);
  return cfg;
}

json to_json(const PlatformConfig& cfg) {
  return json{{"peak_gops_per_s", cfg.peak_gops_per_s},
              {"levels", cfg.level_ratios},
              {"static_power_w", cfg.static_power_w},
              {"dynamic_power_max_w", cfg.dynamic_power_max_w},
              {"power_exponent", cfg.power_exponent},
              {"cpu_overhead_ms", cfg.cpu_overhead_ms},
              {"mem_peak_gbps", cfg.mem_peak_gbps},
              {"thermal",
               {{"ambient_c", cfg.thermal.ambient_c},
                {"heating_coeff_c_per_w", cfg.thermal.heating_coeff_c_per_w},
                {"time_constant_s", cfg.thermal.time_constant_s}}},
              {"noise_seed", cfg.noise_seed},
              {"noise_amplitude", cfg.noise_amplitude},
              {"epoch_ms", cfg.epoch_ms}};
}

ModelProfile model_profile_from_json(const json& j, std::string_view path) {
  detail::check_keys(j, path, {"model_id", "workload_gops", "base_latency_ms"},
                     {"artifact_digest", "artifact_size_bytes", "accel_utilization",
                      "mem_gbit_per_frame"});
  ModelProfile p;
  p.model_id = detail::get_string(j, path, "model_id");
  p.workload_gops = detail::get_double(j, path, "workload_gops");
  p.base_latency_ms = detail::get_double(j, path, "base_latency_ms");
  p.artifact_size_bytes = detail::value_or<std::uint64_t>(j, path, "artifact_size_bytes", 65536);
  p.accel_utilization = detail::value_or(j, path, "accel_utilization", 1.0);
  p.mem_gbit_per_frame = detail::value_or(j, path, "mem_gbit_per_frame", 1.0);
  if (j.contains("artifact_digest")) {
    p.artifact_digest = detail::get_string(j, path, "artifact_digest");
  } else {
    p.artifact_digest = sha256_hex(synthetic_model_blob(p.model_id, p.artifact_size_bytes));
  }
  try {
    validate(p);
  } catch (const ValidationError& e) {
    throw ConfigError(detail::join_path(path, e.field()), e.what());
  }
  return p;
}

json to_json(const ModelProfile& p) {
  return json{{"model_id", p.model_id},
              {"workload_gops", p.workload_gops},
              {"base_latency_ms", p.base_latency_ms},
              {"artifact_digest", p.artifact_digest},
              {"artifact_size_bytes", p.artifact_size_bytes},
              {"accel_utilization", p.accel_utilization},
              {"mem_gbit_per_frame", p.mem_gbit_per_frame}};
}

std::string synthetic_model_blob(std::string_view model_id, std::size_t size_bytes) {
  // Counter-mode expansion of the id so every model has distinct, stable bytes.
  std::string out;
  out.reserve(size_bytes + 64);
  std::uint64_t counter = 0;
  std::string seed = "edgetel-model:" + std::string(model_id) + ":";
  while (out.size() < size_bytes) {
    out += sha256_hex(seed + std::to_string(counter++));
  }
  out.resize(size_bytes);
  return out;
}

namespace {

ModelProfile make_builtin(std::string id, double workload, double latency, double util,
                          double mem_gbit) {
  ModelProfile p;
  p.model_id = std::move(id);
  p.workload_gops = workload;
  p.base_latency_ms = latency;
  p.artifact_size_bytes = 65536;
  p.accel_utilization = util;
  p.mem_gbit_per_frame = mem_gbit;
  p.artifact_digest = sha256_hex(synthetic_model_blob(p.model_id, p.artifact_size_bytes));
  return p;
}

}  // namespace

const std::vector<ModelProfile>& builtin_profiles() {
  // Utilizations are solved from the FPS/W targets with the default power
  // model: yolov3 needs 22.98 W at 34.01 fps, SSD needs 13.51 W at 5 fps.
  static const std::vector<ModelProfile> profiles{
      make_builtin("yolov3", 65.63, 29.4, 1.0, 1.2),
      make_builtin("ssd_resnet50_fpn", 178.4, 200.0, 0.368, 3.0),
  };
  return profiles;
}

const ModelProfile& builtin_profile(std::string_view model_id) {
  for (const auto& p : builtin_profiles()) {
    if (p.model_id == model_id) return p;
  }
  throw ConfigError("model_id", "no built-in profile '" + std::string(model_id) + "'");
}

Platform::Platform(PlatformConfig cfg, ModelProfile initial_model, DeviceIdentity device)
    : cfg_(std::move(cfg)), model_(std::move(initial_model)), device_(std::move(device)) {
  validate(cfg_);
  try {
    validate(model_);
  } catch (const ValidationError& e) {
    throw ConfigError("model." + e.field(), e.what());
  }
  if (!(model_.base_latency_ms > cfg_.cpu_overhead_ms)) {
    throw ConfigError("model.base_latency_ms", "must exceed cpu_overhead_ms");
  }
  if (!is_valid_device_id(device_.device_id)) {
    throw ConfigError("device_id", "must match [A-Za-z0-9_-]{1,64}");
  }
  level_ = level_count() - 1;
  temp_c_ = cfg_.thermal.ambient_c;
  rng_.seed(cfg_.noise_seed);
  update_utilizations();
}

double Platform::inference_latency_ms() const {
  const double ratio = cfg_.level_ratios[level_];
  return cfg_.cpu_overhead_ms + (model_.base_latency_ms - cfg_.cpu_overhead_ms) / ratio;
}

double Platform::power_w() const {
  const double ratio = cfg_.level_ratios[level_];
  return cfg_.static_power_w +
         cfg_.dynamic_power_max_w * std::pow(ratio, cfg_.power_exponent) * model_.accel_utilization;
}

bool Platform::set_frequency_level(int index) {
  if (index < 0 || index >= level_count()) {
    throw RangeError("frequency level " + std::to_string(index) + " outside [0, " +
                     std::to_string(level_count() - 1) + "]");
  }
  if (index == level_) return false;
  level_ = index;
  return true;
}

void Platform::load_model(const ModelProfile& profile) {
  validate(profile);
  if (!(profile.base_latency_ms > cfg_.cpu_overhead_ms)) {
    throw ValidationError("base_latency_ms", "must exceed cpu_overhead_ms");
  }
  model_ = profile;
}

double Platform::noise_factor() {
  if (cfg_.noise_amplitude == 0.0) return 1.0;
  const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;  // [0, 1)
  return 1.0 + cfg_.noise_amplitude * (2.0 * u - 1.0);
}

void Platform::update_utilizations() {
  const double latency = inference_latency_ms();
  const double fps = 1000.0 / latency;
  accel_util_ = std::clamp(model_.accel_utilization * noise_factor(), 0.0, 1.0);
  cpu_util_ = std::clamp((0.05 + cfg_.cpu_overhead_ms / latency) * noise_factor(), 0.0, 1.0);
  mem_gbps_ = std::min(fps * model_.mem_gbit_per_frame * noise_factor(), cfg_.mem_peak_gbps);
  mem_util_ = std::clamp(mem_gbps_ / cfg_.mem_peak_gbps, 0.0, 1.0);
}

void Platform::advance(std::uint64_t dt_ms) {
  if (dt_ms == 0) throw PreconditionError("advance: dt_ms must be positive");
  sim_time_ms_ += dt_ms;
  const double steady = cfg_.thermal.ambient_c + cfg_.thermal.heating_coeff_c_per_w * power_w();
  const double decay = std::exp(-static_cast<double>(dt_ms) / (1000.0 * cfg_.thermal.time_constant_s));
  temp_c_ = steady + (temp_c_ - steady) * decay;
  temp_c_ = std::max(temp_c_, cfg_.thermal.ambient_c);
  update_utilizations();
  advanced_ = true;
}

TelemetrySnapshot Platform::sample_metrics(const NetworkMetrics& net) {
  if (!advanced_) throw PreconditionError("sample_metrics: platform has not been advanced");
  TelemetrySnapshot s;
  s.device = device_;
  s.seq = seq_++;
  s.device_time_ms = cfg_.epoch_ms + sim_time_ms_;
  s.app.ee_latency_ms = inference_latency_ms();
  s.app.fps = 1000.0 / s.app.ee_latency_ms;
  s.model.accel_utilization = accel_util_;
  s.model.mem_throughput_gbps = mem_gbps_;
  s.model.cpu_utilization = cpu_util_;
  s.model.mem_utilization = mem_util_;
  s.model.model_efficiency =
      edgetel::model_efficiency(s.app.fps, model_.workload_gops, cfg_.peak_gops_per_s);
  s.model.model_id = model_.model_id;
  s.energy.power_w = power_w();
  s.energy.temp_c = temp_c_;
  s.energy.fps_per_watt = edgetel::fps_per_watt(s.app.fps, s.energy.power_w);
  s.network = net;
  return s;
}

std::string Platform::encode_state() const {
  std::ostringstream rng_text;
  rng_text << rng_;
  json j{{"config", to_json(cfg_)},
         {"model", to_json(model_)},
         {"device_id", device_.device_id},
         {"level", level_},
         {"sim_time_ms", sim_time_ms_},
         {"temp_c", format_double(temp_c_)},
         {"accel_utilization", format_double(accel_util_)},
         {"cpu_utilization", format_double(cpu_util_)},
         {"mem_throughput_gbps", format_double(mem_gbps_)},
         {"mem_utilization", format_double(mem_util_)},
         {"seq", seq_},
         {"advanced", advanced_},
         {"rng", rng_text.str()}};
  return j.dump();
}

Platform init_platform(const PlatformConfig& cfg, const ModelProfile& initial_model,
                       DeviceIdentity device) {
  return Platform(cfg, initial_model, std::move(device));
}

}  // namespace edgetel
