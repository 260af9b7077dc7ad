#pragma once

// Shared test helpers: random generators, scratch directories and the naive
// reference implementations the library is checked against.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "edgetel/lake.hpp"
#include "edgetel/rules.hpp"
#include "edgetel/telemetry.hpp"

namespace testsupport {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "edgetel") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline bool eventually(const std::function<bool()>& pred,
                       std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (!pred()) {
    if (std::chrono::steady_clock::now() > deadline) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  return true;
}

// A snapshot that satisfies every invariant, with full-precision random values.
inline edgetel::TelemetrySnapshot random_snapshot(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto pick = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  edgetel::TelemetrySnapshot s;
  static const char* kIds[] = {"sim0", "edge-01", "DEV_9", "a", "zcu102_b"};
  s.device.device_id = kIds[rng() % 5];
  s.seq = rng() % 1000000;
  s.device_time_ms = rng() % 4000000000000ULL;
  s.app.ee_latency_ms = pick(1.0, 500.0);
  s.app.fps = 1000.0 / s.app.ee_latency_ms * pick(0.96, 1.04);
  s.model.accel_utilization = (rng() % 10 == 0) ? 1.0 : u(rng);
  s.model.mem_throughput_gbps = pick(0.0, 136.0);
  s.model.cpu_utilization = u(rng);
  s.model.mem_utilization = u(rng);
  s.model.model_efficiency = pick(0.0, 1.0);
  static const char* kModels[] = {"yolov3", "ssd_resnet50_fpn", "yolov3@edge", "m\"odd\\name",
                                  "ssd_resnet50_fpn@device"};
  s.model.model_id = kModels[rng() % 5];
  s.energy.power_w = pick(0.5, 60.0);
  s.energy.temp_c = pick(-10.0, 110.0);
  s.energy.fps_per_watt = s.app.fps / s.energy.power_w;
  s.network.rssi_dbm = pick(-120.0, 0.0);
  s.network.rsrq_db = (rng() % 20 == 0) ? -0.0 : pick(-25.0, 0.0);
  s.network.rsrp_dbm = pick(-140.0, -40.0);
  s.network.modem_temp_c = pick(-20.0, 90.0);
  s.network.dl_mbps = (rng() % 10 == 0) ? 0.0 : pick(0.0, 150.0);
  s.network.ul_mbps = pick(0.0, 50.0);
  return s;
}

// ---------------------------------------------------------------------------
// Reference rule evaluator. Works from the whole snapshot history instead of
// carried counters: a rule fires at t when its predicate held on the last
// `consecutive_required` snapshots, none of which precede or coincide with its
// previous firing, and at least `cooldown_ticks` snapshots passed since then.
// ---------------------------------------------------------------------------

inline std::optional<double> naive_metric(const edgetel::TelemetrySnapshot& s,
                                          std::optional<double> predicted, const std::string& path) {
  const std::map<std::string, double> flat = {
      {"seq", double(s.seq)},
      {"device_time_ms", double(s.device_time_ms)},
      {"app.ee_latency_ms", s.app.ee_latency_ms},
      {"app.fps", s.app.fps},
      {"model.accel_utilization", s.model.accel_utilization},
      {"model.mem_throughput_gbps", s.model.mem_throughput_gbps},
      {"model.cpu_utilization", s.model.cpu_utilization},
      {"model.mem_utilization", s.model.mem_utilization},
      {"model.model_efficiency", s.model.model_efficiency},
      {"energy.power_w", s.energy.power_w},
      {"energy.temp_c", s.energy.temp_c},
      {"energy.fps_per_watt", s.energy.fps_per_watt},
      {"network.rssi_dbm", s.network.rssi_dbm},
      {"network.rsrq_db", s.network.rsrq_db},
      {"network.rsrp_dbm", s.network.rsrp_dbm},
      {"network.modem_temp_c", s.network.modem_temp_c},
      {"network.dl_mbps", s.network.dl_mbps},
      {"network.ul_mbps", s.network.ul_mbps},
  };
  if (path == "bandwidth.predicted_dl_mbps") return predicted;
  auto it = flat.find(path);
  if (it == flat.end()) return std::nullopt;
  return it->second;
}

inline bool naive_in_effect(const edgetel::ActionMessage& a, const edgetel::TelemetrySnapshot& s) {
  const std::string& id = s.model.model_id;
  const std::string base = id.substr(0, id.find('@'));
  const bool on_device = id.size() >= 7 && id.compare(id.size() - 7, 7, "@device") == 0;
  if (a.kind == edgetel::ActionKind::SwapModel) return base == a.model_id;
  if (a.kind == edgetel::ActionKind::SetPlacement) {
    return (a.placement == edgetel::Placement::Device) == on_device;
  }
  return false;
}

inline bool naive_held(const edgetel::Rule& r, const edgetel::TelemetrySnapshot& s,
                       std::optional<double> predicted) {
  const auto v = naive_metric(s, predicted, r.metric_path);
  if (!v) return false;
  bool cmp = false;
  if (r.comparator == edgetel::Comparator::GT) cmp = *v > r.threshold;
  if (r.comparator == edgetel::Comparator::LT) cmp = *v < r.threshold;
  if (r.comparator == edgetel::Comparator::GE) cmp = *v >= r.threshold;
  if (r.comparator == edgetel::Comparator::LE) cmp = *v <= r.threshold;
  return cmp && !naive_in_effect(r.action, s);
}

// Returns, per snapshot, the rule ids that fire, in rule_id order.
inline std::vector<std::vector<std::string>> naive_fire_sequence(
    const std::vector<edgetel::Rule>& rules, const std::vector<edgetel::TelemetrySnapshot>& snaps,
    const std::vector<std::optional<double>>& predicted) {
  std::vector<const edgetel::Rule*> order;
  for (const auto& r : rules) order.push_back(&r);
  std::sort(order.begin(), order.end(),
            [](const edgetel::Rule* a, const edgetel::Rule* b) { return a->rule_id < b->rule_id; });
  std::vector<std::vector<std::string>> out(snaps.size());
  for (const edgetel::Rule* r : order) {
    std::vector<bool> held(snaps.size());
    for (std::size_t t = 0; t < snaps.size(); ++t) held[t] = naive_held(*r, snaps[t], predicted[t]);
    long last_fire = -1;
    for (std::size_t t = 0; t < snaps.size(); ++t) {
      long run = 0;
      for (long k = static_cast<long>(t); k > last_fire && held[k]; --k) ++run;
      const bool cooled = last_fire < 0 || static_cast<long>(t) - last_fire >= long(r->cooldown_ticks);
      if (run >= long(r->consecutive_required) && cooled) {
        out[t].push_back(r->rule_id);
        last_fire = static_cast<long>(t);
      }
    }
  }
  for (auto& ids : out) std::sort(ids.begin(), ids.end());
  return out;
}

// ---------------------------------------------------------------------------
// Full-scan lake oracle: reads every file under the lake root line by line.
// ---------------------------------------------------------------------------

inline std::vector<std::uint64_t> full_scan_ids(const fs::path& root, const std::string& device,
                                                std::int64_t from, std::int64_t to) {
  std::vector<std::pair<std::uint64_t, std::int64_t>> all;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().extension() != ".jsonl") continue;
    if (e.path().filename() == "dead_letter.jsonl") continue;
    std::ifstream in(e.path());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (...) {
        continue;
      }
      if (!j.is_object() || !j.contains("snapshot")) continue;
      if (j["snapshot"]["device_id"] != device) continue;
      const auto t = j["ingest_time_ms"].get<std::int64_t>();
      if (t >= from && t < to) all.emplace_back(j["record_id"].get<std::uint64_t>(), t);
    }
  }
  std::sort(all.begin(), all.end());
  std::vector<std::uint64_t> ids;
  for (auto& [id, t] : all) ids.push_back(id);
  return ids;
}

// ---------------------------------------------------------------------------
// Random rules-engine cases: up to 5 rules over up to 100 snapshots, with
// thresholds drawn from the sequence's own values so rules actually fire.
// ---------------------------------------------------------------------------

struct RuleCase {
  std::vector<edgetel::Rule> rules;
  std::vector<edgetel::TelemetrySnapshot> snaps;
  std::vector<std::optional<double>> predicted;
};

inline RuleCase random_rule_case(std::mt19937_64& rng) {
  RuleCase c;
  const std::size_t n = 1 + rng() % 100;
  // Slowly drifting model ids keep SwapModel and SetPlacement suppression in play.
  static const char* kModels[] = {"yolov3", "yolov3@device", "ssd_resnet50_fpn",
                                  "ssd_resnet50_fpn@edge", "ssd_resnet50_fpn@device"};
  std::size_t model = rng() % 5;
  for (std::size_t i = 0; i < n; ++i) {
    edgetel::TelemetrySnapshot s = random_snapshot(rng);
    if (rng() % 8 == 0) model = rng() % 5;
    s.model.model_id = kModels[model];
    s.seq = i;
    c.snaps.push_back(s);
    c.predicted.push_back(rng() % 6 == 0 ? std::nullopt
                                         : std::optional<double>(double(rng() % 2000) / 100.0));
  }
  const auto& paths = edgetel::metric_paths();
  const std::size_t n_rules = rng() % 6;
  for (std::size_t k = 0; k < n_rules; ++k) {
    edgetel::Rule r;
    r.rule_id = "r" + std::to_string(rng() % 1000);
    bool dup = false;
    for (const auto& o : c.rules) dup |= o.rule_id == r.rule_id;
    if (dup) continue;
    r.metric_path = paths[rng() % paths.size()];
    r.comparator = static_cast<edgetel::Comparator>(rng() % 4);
    const auto& pick = c.snaps[rng() % n];
    const auto v = naive_metric(pick, c.predicted[rng() % n], r.metric_path);
    r.threshold = v ? *v : 5.0;
    r.action.kind = static_cast<edgetel::ActionKind>(rng() % 4);
    if (r.action.kind == edgetel::ActionKind::SwapModel) {
      r.action.model_id = rng() % 2 ? "yolov3" : "ssd_resnet50_fpn";
    }
    r.action.placement = rng() % 2 ? edgetel::Placement::Edge : edgetel::Placement::Device;
    r.cooldown_ticks = 1 + rng() % 6;
    r.consecutive_required = 1 + rng() % 4;
    c.rules.push_back(r);
  }
  return c;
}

// Runs the engine over a case; per snapshot, the fired rule ids.
inline std::vector<std::vector<std::string>> engine_fire_sequence(const RuleCase& c) {
  edgetel::RuleSet rs;
  rs.rules = c.rules;
  edgetel::validate(rs);
  edgetel::RuleState state;
  std::vector<std::vector<std::string>> out;
  for (std::size_t t = 0; t < c.snaps.size(); ++t) {
    edgetel::DerivedMetrics d{c.predicted[t]};
    auto ev = edgetel::evaluate_rules(c.snaps[t], d, rs, std::move(state));
    state = std::move(ev.state);
    std::vector<std::string> ids;
    for (const auto& a : ev.actions) ids.push_back(a.rule_id);
    out.push_back(std::move(ids));
  }
  return out;
}

}  // namespace testsupport
