#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "edgetel/action.hpp"
#include "edgetel/bandwidth.hpp"
#include "edgetel/clock.hpp"
#include "edgetel/http.hpp"
#include "edgetel/net.hpp"
#include "edgetel/platform.hpp"

namespace edgetel {

class Session;

struct AgentConfig {
  DeviceIdentity device{"sim0", PlatformKind::SimulatedDPU};
  std::uint64_t sample_period_ms = 1000;
  Address broker{"127.0.0.1", 1883};
  Address model_store{"127.0.0.1", 8080};
  std::string initial_model_id = "yolov3";
  std::optional<std::uint64_t> max_ticks;
  std::size_t buffer_capacity = 64;
  std::size_t action_queue_capacity = 256;
  std::uint64_t backoff_base_ms = 500;
  std::uint64_t backoff_cap_ms = 8000;
};

// Throws ConfigError.
void validate(const AgentConfig& cfg);
// "broker" and "model_store" are "host:port" strings.
AgentConfig agent_config_from_json(const nlohmann::json& j);

enum class ApplyStatus { Applied, RejectedAtBound, RejectedIntegrity, RejectedNotFound,
                         RejectedUnavailable };
const char* to_string(ApplyStatus s);

struct ApplyResult {
  ApplyStatus status = ApplyStatus::Applied;
  std::string detail;

  bool applied() const { return status == ApplyStatus::Applied; }
};

// (blob, server-claimed digest). Throws NetworkError(NotFound) for unknown ids
// and other NetworkErrors when the store is down.
using ModelFetcher = std::function<ModelBlob(const std::string& model_id)>;

ModelFetcher http_model_fetcher(const Address& store,
                                std::chrono::milliseconds timeout = std::chrono::seconds(5));

// Applies one action. Rejections leave `platform` and `placement` untouched.
// SwapModel looks the target up in `catalog`, downloads it through `fetch`
// and loads it only when the blob's SHA-256 equals the expected digest.
ApplyResult apply_action(Platform& platform, std::optional<Placement>& placement,
                         const ActionMessage& a, const std::vector<ModelProfile>& catalog,
                         const ModelFetcher& fetch);

// Exponential reconnect schedule: base, 2*base, ... capped.
class Backoff {
 public:
  Backoff(std::uint64_t base_ms, std::uint64_t cap_ms) : base_(base_ms), cap_(cap_ms) {}
  bool ready(std::int64_t now_ms) const { return now_ms >= next_ms_; }
  void failed(std::int64_t now_ms);
  void succeeded();
  std::uint64_t current_delay_ms() const { return delay_; }
  std::uint32_t failures() const { return failures_; }

 private:
  std::uint64_t base_;
  std::uint64_t cap_;
  std::uint64_t delay_ = 0;
  std::uint32_t failures_ = 0;
  std::int64_t next_ms_ = 0;
};

struct ActionLogEntry {
  ActionMessage action;
  std::uint64_t applied_before_tick = 0;  // index of the first snapshot reflecting it
  ApplyResult result;
};

struct AgentReport {
  std::uint64_t ticks = 0;
  std::uint64_t actions_received = 0;
  std::uint64_t actions_applied = 0;
  std::uint64_t actions_rejected = 0;
  std::uint64_t actions_pending = 0;  // arrived after the last tick
  std::uint64_t actions_invalid = 0;
  std::uint64_t actions_overflow = 0;
  std::uint64_t snapshots_published = 0;
  std::uint64_t snapshots_dropped = 0;  // evicted from a full buffer
  std::uint64_t reconnects = 0;
  double initial_fps = 0.0;
  double initial_power_w = 0.0;
  double final_fps = 0.0;
  double final_power_w = 0.0;
  std::string final_model_id;
  int final_level = 0;
  std::optional<Placement> placement;
  std::vector<ActionLogEntry> actions;
};

nlohmann::json to_json(const AgentReport& r);

// The edge-side loop. The caller owns the tick cadence: `tick()` performs one
// sampling period, `run()` ticks on the wall clock until max_ticks or stop().
class Agent {
 public:
  Agent(AgentConfig cfg, Platform platform, NetTrace trace, std::vector<ModelProfile> catalog,
        const Clock& clock, ModelFetcher fetch = {});
  ~Agent();
  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  // First connection. Throws NetworkError when the broker is unreachable.
  void start();
  // Apply queued actions, advance the platform one period, sample, publish
  // (or buffer). Returns the snapshot taken.
  TelemetrySnapshot tick();
  AgentReport run();
  void stop() { stop_.store(true); }
  // Disconnects; the report counts actions still queued as pending.
  AgentReport finish();

  const Platform& platform() const { return platform_; }
  std::optional<Placement> placement() const { return placement_; }
  std::uint64_t ticks() const { return ticks_; }
  std::uint64_t snapshots_published() const { return published_.load(); }
  std::uint64_t actions_received() const { return received_.load(); }
  std::size_t buffered() const { return buffer_.size(); }
  bool connected() const;

 private:
  void on_action(const std::string& payload);
  void try_connect();
  void flush_buffer();

  AgentConfig cfg_;
  Platform platform_;
  NetTrace trace_;
  std::vector<ModelProfile> catalog_;
  const Clock& clock_;
  ModelFetcher fetch_;
  std::optional<Placement> placement_;

  std::shared_ptr<Session> session_;
  Backoff backoff_;
  std::deque<std::string> buffer_;

  std::mutex queue_mu_;
  std::deque<ActionMessage> queue_;

  std::uint64_t ticks_ = 0;
  std::atomic<std::uint64_t> published_{0};
  std::atomic<std::uint64_t> received_{0};
  std::atomic<bool> stop_{false};
  AgentReport report_;
  bool initial_recorded_ = false;
};

}  // namespace edgetel
