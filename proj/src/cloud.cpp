#include "edgetel/cloud.hpp"

#include "edgetel/error.hpp"
#include "edgetel/session.hpp"
#include "log.hpp"

namespace edgetel {

const char* to_string(DispatchOutcome o) {
  switch (o) {
    case DispatchOutcome::Sent: return "sent";
    case DispatchOutcome::Dropped: return "dropped";
    case DispatchOutcome::QueueFull: return "queue_full";
  }
  return "unknown";
}

Cloud::Cloud(CloudConfig cfg, const Clock& clock, const ModelStore* store)
    : cfg_(std::move(cfg)), clock_(clock), store_(store), lake_(cfg_.lake_dir) {
  validate(cfg_.rules);
  if (cfg_.dispatch_queue_capacity == 0) {
    throw ConfigError("dispatch_queue_capacity", "must be positive");
  }
  dispatcher_ = std::thread([this] { dispatcher_loop(); });
}

Cloud::~Cloud() {
  disconnect_bus();
  {
    std::lock_guard lock(queue_mu_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  if (dispatcher_.joinable()) dispatcher_.join();
}

LakeRecord Cloud::ingest(std::string_view payload, Transport t) {
  return ingest_impl(payload, t, std::nullopt);
}

LakeRecord Cloud::ingest_impl(std::string_view payload, Transport t,
                              std::optional<std::string_view> topic_device) {
  std::unique_lock lock(ingest_mu_);
  const std::int64_t now = clock_.now_ms();
  TelemetrySnapshot snap;
  try {
    snap = decode_snapshot(payload);
    if (topic_device && snap.device.device_id != *topic_device) {
      throw ValidationError("device.device_id", "does not match the topic's device segment");
    }
  } catch (const Error& e) {
    lake_.append_dead_letter(payload, now, t, e.what());
    {
      std::lock_guard s(stats_mu_);
      ++stats_.dead_letters;
    }
    spdlog::warn("cloud: dead letter ({}): {}", to_string(t), e.what());
    throw;
  }

  auto it = devices_.find(snap.device.device_id);
  if (it == devices_.end()) {
    const PredictorConfig pc = cfg_.rules.placement ? cfg_.rules.placement->predictor : PredictorConfig{};
    it = devices_.emplace(snap.device.device_id, DeviceState{{}, BandwidthPredictor(pc), 0, {}}).first;
  }
  DeviceState& dev = it->second;
  const std::int64_t ingest_time = std::max(now, dev.last_ingest_ms);
  dev.last_ingest_ms = ingest_time;
  LakeRecord rec = lake_.append(snap, ingest_time, t);

  DerivedMetrics derived;
  if (cfg_.rules.placement) {
    const auto f = BandwidthFeatures::from(snap.network);
    try {
      dev.predictor.update(f, snap.network.dl_mbps);
      if (dev.predictor.is_warm()) dev.predicted = dev.predictor.predict(f);
    } catch (const Error& e) {
      spdlog::warn("cloud: bandwidth predictor for {}: {}", snap.device.device_id, e.what());
    }
    derived.predicted_dl_mbps = dev.predicted;
  }

  RuleEvaluation ev = evaluate_rules(snap, derived, cfg_.rules, std::move(dev.rules));
  dev.rules = std::move(ev.state);
  std::vector<ActionMessage> fired;
  for (ActionMessage& a : ev.actions) {
    if (a.kind == ActionKind::SwapModel && a.expected_digest.empty()) {
      auto d = store_ ? store_->digest(a.model_id) : std::nullopt;
      if (!d) {
        spdlog::error("cloud: rule {} wants model '{}' but the store has no digest for it",
                      a.rule_id, a.model_id);
        std::lock_guard s(stats_mu_);
        ++stats_.unresolved_digest;
        continue;
      }
      a.expected_digest = *d;
    }
    a.issued_at_ms = ingest_time;
    a.seq = next_action_seq_++;
    fired.push_back(std::move(a));
  }
  {
    std::lock_guard s(stats_mu_);
    ++stats_.ingested;
    stats_.actions_fired += fired.size();
  }
  for (ActionMessage& a : fired) dispatch(std::move(a), snap.device.device_id);
  return rec;
}

IngestHandler Cloud::http_handler() {
  return [this](const std::string& body) {
    struct Count {
      Cloud* c;
      ~Count() {
        std::lock_guard s(c->stats_mu_);
        ++c->stats_.http_processed;
      }
    } count{this};
    const LakeRecord r = ingest(body, Transport::Http);
    return IngestAck{r.record_id, r.ingest_time_ms};
  };
}

void Cloud::on_telemetry(const std::string& topic, const std::string& payload) {
  try {
    ingest_impl(payload, Transport::PubSub, std::string_view(topic).substr(10));  // "telemetry/"
  } catch (const Error&) {
  }
  std::lock_guard s(stats_mu_);
  ++stats_.pubsub_processed;
}

std::shared_ptr<Session> Cloud::session() const {
  std::lock_guard lock(bus_mu_);
  return session_;
}

void Cloud::connect_bus(const Address& broker) {
  std::shared_ptr<Session> s = Session::connect(broker, cfg_.client_id);
  s->subscribe("telemetry/+", [this](const std::string& topic, const std::string& payload) {
    on_telemetry(topic, payload);
  });
  std::shared_ptr<Session> old;
  {
    std::lock_guard lock(bus_mu_);
    broker_ = broker;
    old = std::exchange(session_, s);
  }
  if (old) old->disconnect();
}

bool Cloud::reconnect_bus() {
  std::optional<Address> addr;
  {
    std::lock_guard lock(bus_mu_);
    addr = broker_;
  }
  if (!addr) return false;
  try {
    connect_bus(*addr);
    return true;
  } catch (const Error& e) {
    spdlog::info("cloud: reconnect to {} failed: {}", addr->to_string(), e.what());
    return false;
  }
}

bool Cloud::bus_alive() const {
  auto s = session();
  return s && s->alive();
}

void Cloud::disconnect_bus() {
  std::shared_ptr<Session> s;
  {
    std::lock_guard lock(bus_mu_);
    s = std::move(session_);
  }
  if (s) s->disconnect();
}

void Cloud::record(const std::string& device, const ActionMessage& a, DispatchOutcome o) {
  log_.push_back({device, a, o});
  std::lock_guard s(stats_mu_);
  switch (o) {
    case DispatchOutcome::Sent: ++stats_.dispatched_sent; break;
    case DispatchOutcome::Dropped: ++stats_.dispatched_dropped; break;
    case DispatchOutcome::QueueFull: ++stats_.dispatch_queue_full; break;
  }
}

DispatchOutcome Cloud::dispatch(ActionMessage a, const std::string& device_id) {
  std::lock_guard lock(queue_mu_);
  if (queue_.size() >= cfg_.dispatch_queue_capacity) {
    spdlog::warn("cloud: dispatch queue full, dropping {} for {}", to_string(a.kind), device_id);
    record(device_id, a, DispatchOutcome::QueueFull);
    return DispatchOutcome::QueueFull;
  }
  queue_.push_back({device_id, std::move(a)});
  queue_cv_.notify_one();
  return DispatchOutcome::Sent;
}

void Cloud::dispatcher_loop() {
  while (true) {
    Pending p;
    {
      std::unique_lock lock(queue_mu_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      p = std::move(queue_.front());
      queue_.pop_front();
      ++in_flight_;
    }
    DispatchOutcome outcome = DispatchOutcome::Dropped;
    if (auto s = session(); s && s->alive()) {
      try {
        s->publish("actions/" + p.device_id, encode_action(p.action));
        outcome = DispatchOutcome::Sent;
      } catch (const Error& e) {
        spdlog::warn("cloud: dispatch to {} failed: {}", p.device_id, e.what());
      }
    }
    if (outcome == DispatchOutcome::Dropped) {
      spdlog::warn("cloud: broker down, dropped {} seq {} for {}", to_string(p.action.kind),
                   p.action.seq, p.device_id);
    }
    {
      std::lock_guard lock(queue_mu_);
      record(p.device_id, p.action, outcome);
      --in_flight_;
    }
    idle_cv_.notify_all();
  }
}

bool Cloud::wait_dispatch_idle(std::chrono::milliseconds timeout) {
  std::unique_lock lock(queue_mu_);
  return idle_cv_.wait_for(lock, timeout, [&] { return queue_.empty() && in_flight_ == 0; });
}

CloudStats Cloud::stats() const {
  std::lock_guard s(stats_mu_);
  return stats_;
}

std::vector<DispatchRecord> Cloud::dispatch_log() const {
  std::lock_guard lock(queue_mu_);
  return log_;
}

std::optional<double> Cloud::predicted_dl_mbps(const std::string& device_id) const {
  std::lock_guard lock(ingest_mu_);
  auto it = devices_.find(device_id);
  if (it == devices_.end()) return std::nullopt;
  return it->second.predicted;
}

}  // namespace edgetel
