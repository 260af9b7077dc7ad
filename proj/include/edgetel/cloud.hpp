#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "edgetel/action.hpp"
#include "edgetel/bandwidth.hpp"
#include "edgetel/clock.hpp"
#include "edgetel/http.hpp"
#include "edgetel/lake.hpp"
#include "edgetel/model_store.hpp"
#include "edgetel/net.hpp"
#include "edgetel/rules.hpp"

namespace edgetel {

class Session;

struct CloudConfig {
  std::filesystem::path lake_dir = "lake";
  RuleSet rules;
  std::size_t dispatch_queue_capacity = 256;
  std::string client_id = "cloud";
};

enum class DispatchOutcome { Sent, Dropped, QueueFull };
const char* to_string(DispatchOutcome o);

struct DispatchRecord {
  std::string device_id;
  ActionMessage action;
  DispatchOutcome outcome = DispatchOutcome::Sent;
};

struct CloudStats {
  std::uint64_t ingested = 0;
  std::uint64_t dead_letters = 0;
  std::uint64_t pubsub_processed = 0;  // telemetry messages handled, valid or not
  std::uint64_t http_processed = 0;
  std::uint64_t actions_fired = 0;
  std::uint64_t dispatched_sent = 0;
  std::uint64_t dispatched_dropped = 0;  // broker down at send time
  std::uint64_t dispatch_queue_full = 0;
  std::uint64_t unresolved_digest = 0;   // SwapModel target missing from the store
};

// Ingest, enrichment, lake persistence, rule evaluation and action dispatch.
// Telemetry arrives on `telemetry/+` and through `http_handler()`; actions go
// out on `actions/<device_id>` from a dispatcher thread.
class Cloud {
 public:
  // `store` fills in SwapModel digests the rule templates leave empty.
  Cloud(CloudConfig cfg, const Clock& clock, const ModelStore* store = nullptr);
  ~Cloud();
  Cloud(const Cloud&) = delete;
  Cloud& operator=(const Cloud&) = delete;

  // Shared ingest path. Undecodable or invalid payloads go to the dead-letter
  // file and the decode error is rethrown.
  LakeRecord ingest(std::string_view payload, Transport t);
  IngestHandler http_handler();

  // Throws NetworkError.
  void connect_bus(const Address& broker);
  // One reconnect attempt against the last broker address; false on failure.
  bool reconnect_bus();
  bool bus_alive() const;
  void disconnect_bus();

  DispatchOutcome dispatch(ActionMessage a, const std::string& device_id);
  // True once every queued action has been sent or dropped.
  bool wait_dispatch_idle(std::chrono::milliseconds timeout);

  CloudStats stats() const;
  std::vector<DispatchRecord> dispatch_log() const;
  const Lake& lake() const { return lake_; }
  const RuleSet& rules() const { return cfg_.rules; }
  // Latest bandwidth prediction for a device, if its predictor is warm.
  std::optional<double> predicted_dl_mbps(const std::string& device_id) const;

 private:
  struct DeviceState {
    RuleState rules;
    BandwidthPredictor predictor;
    std::int64_t last_ingest_ms = 0;
    std::optional<double> predicted;
  };
  struct Pending {
    std::string device_id;
    ActionMessage action;
  };

  LakeRecord ingest_impl(std::string_view payload, Transport t,
                         std::optional<std::string_view> topic_device);
  void on_telemetry(const std::string& topic, const std::string& payload);
  void dispatcher_loop();
  std::shared_ptr<Session> session() const;
  void record(const std::string& device, const ActionMessage& a, DispatchOutcome o);

  CloudConfig cfg_;
  const Clock& clock_;
  const ModelStore* store_;
  Lake lake_;

  mutable std::mutex ingest_mu_;
  std::map<std::string, DeviceState> devices_;
  std::uint64_t next_action_seq_ = 0;

  mutable std::mutex bus_mu_;
  std::shared_ptr<Session> session_;
  std::optional<Address> broker_;

  mutable std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<Pending> queue_;
  std::size_t in_flight_ = 0;
  bool stopping_ = false;
  std::vector<DispatchRecord> log_;

  mutable std::mutex stats_mu_;
  CloudStats stats_;

  std::thread dispatcher_;
};

}  // namespace edgetel
