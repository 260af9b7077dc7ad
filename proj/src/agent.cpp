#include "edgetel/agent.hpp"

#include <algorithm>
#include <thread>

#include "edgetel/error.hpp"
#include "edgetel/session.hpp"
#include "edgetel/sha256.hpp"
#include "json_util.hpp"
#include "log.hpp"

namespace edgetel {

using detail::json;

void validate(const AgentConfig& cfg) {
  if (!is_valid_device_id(cfg.device.device_id)) {
    throw ConfigError("device_id", "must match [A-Za-z0-9_-]{1,64}");
  }
  if (cfg.sample_period_ms < 10) throw ConfigError("sample_period_ms", "must be at least 10");
  if (cfg.initial_model_id.empty()) throw ConfigError("initial_model_id", "must not be empty");
  if (cfg.max_ticks && *cfg.max_ticks == 0) throw ConfigError("max_ticks", "must be positive");
  if (cfg.buffer_capacity == 0) throw ConfigError("buffer_capacity", "must be positive");
  if (cfg.action_queue_capacity == 0) throw ConfigError("action_queue_capacity", "must be positive");
  if (cfg.backoff_base_ms == 0 || cfg.backoff_cap_ms < cfg.backoff_base_ms) {
    throw ConfigError("backoff", "need 0 < backoff_base_ms <= backoff_cap_ms");
  }
}

AgentConfig agent_config_from_json(const json& j) {
  AgentConfig c;
  try {
    detail::check_keys(j, "", {},
                       {"device_id", "sample_period_ms", "broker", "model_store", "initial_model_id",
                        "max_ticks", "buffer_capacity", "action_queue_capacity", "backoff_base_ms",
                        "backoff_cap_ms"});
    c.device.device_id = detail::value_or<std::string>(j, "", "device_id", c.device.device_id);
    c.sample_period_ms = detail::value_or(j, "", "sample_period_ms", c.sample_period_ms);
    if (j.contains("broker")) c.broker = parse_address(detail::get_string(j, "", "broker"));
    if (j.contains("model_store")) {
      c.model_store = parse_address(detail::get_string(j, "", "model_store"));
    }
    c.initial_model_id = detail::value_or(j, "", "initial_model_id", c.initial_model_id);
    if (j.contains("max_ticks")) c.max_ticks = detail::get_u64(j, "", "max_ticks");
    c.buffer_capacity = detail::value_or(j, "", "buffer_capacity", c.buffer_capacity);
    c.action_queue_capacity = detail::value_or(j, "", "action_queue_capacity", c.action_queue_capacity);
    c.backoff_base_ms = detail::value_or(j, "", "backoff_base_ms", c.backoff_base_ms);
    c.backoff_cap_ms = detail::value_or(j, "", "backoff_cap_ms", c.backoff_cap_ms);
  } catch (const SchemaError& e) {
    throw ConfigError(e.field(), e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(e.field(), e.what());
  }
  validate(c);
  return c;
}

const char* to_string(ApplyStatus s) {
  switch (s) {
    case ApplyStatus::Applied: return "applied";
    case ApplyStatus::RejectedAtBound: return "rejected(at_bound)";
    case ApplyStatus::RejectedIntegrity: return "rejected(integrity)";
    case ApplyStatus::RejectedNotFound: return "rejected(not_found)";
    case ApplyStatus::RejectedUnavailable: return "rejected(unavailable)";
  }
  return "unknown";
}

ModelFetcher http_model_fetcher(const Address& store, std::chrono::milliseconds timeout) {
  return [store, timeout](const std::string& id) { return http_fetch_model(store, id, timeout); };
}

ApplyResult apply_action(Platform& platform, std::optional<Placement>& placement,
                         const ActionMessage& a, const std::vector<ModelProfile>& catalog,
                         const ModelFetcher& fetch) {
  switch (a.kind) {
    case ActionKind::StepFrequencyDown:
    case ActionKind::StepFrequencyUp: {
      const int target = platform.level().index + (a.kind == ActionKind::StepFrequencyUp ? 1 : -1);
      if (target < 0 || target >= platform.level_count()) {
        return {ApplyStatus::RejectedAtBound, "already at level " + std::to_string(platform.level().index)};
      }
      platform.set_frequency_level(target);
      return {ApplyStatus::Applied, "level " + std::to_string(target)};
    }
    case ActionKind::SwapModel: {
      const auto it = std::find_if(catalog.begin(), catalog.end(),
                                   [&](const ModelProfile& p) { return p.model_id == a.model_id; });
      if (it == catalog.end()) return {ApplyStatus::RejectedNotFound, "no profile for " + a.model_id};
      if (!fetch) return {ApplyStatus::RejectedUnavailable, "no model store configured"};
      ModelBlob blob;
      try {
        blob = fetch(a.model_id);
      } catch (const NetworkError& e) {
        if (e.kind() == NetErrorKind::NotFound) return {ApplyStatus::RejectedNotFound, e.what()};
        return {ApplyStatus::RejectedUnavailable, e.what()};
      }
      const std::string actual = sha256_hex(blob.blob);
      if (actual != a.expected_digest) {
        return {ApplyStatus::RejectedIntegrity,
                "digest " + actual + " != expected " + a.expected_digest};
      }
      platform.load_model(*it);
      return {ApplyStatus::Applied, "loaded " + a.model_id};
    }
    case ActionKind::SetPlacement:
      placement = a.placement;
      return {ApplyStatus::Applied, std::string("placement ") + to_string(a.placement)};
  }
  return {ApplyStatus::RejectedNotFound, "unknown action"};
}

void Backoff::failed(std::int64_t now_ms) {
  delay_ = delay_ == 0 ? base_ : std::min(cap_, delay_ * 2);
  ++failures_;
  next_ms_ = now_ms + static_cast<std::int64_t>(delay_);
}

void Backoff::succeeded() {
  delay_ = 0;
  failures_ = 0;
  next_ms_ = 0;
}

json to_json(const AgentReport& r) {
  json actions = json::array();
  for (const auto& e : r.actions) {
    json a = json::parse(encode_action(e.action));
    a["applied_before_tick"] = e.applied_before_tick;
    a["result"] = to_string(e.result.status);
    actions.push_back(std::move(a));
  }
  return {{"ticks", r.ticks},
          {"actions_received", r.actions_received},
          {"actions_applied", r.actions_applied},
          {"actions_rejected", r.actions_rejected},
          {"actions_pending", r.actions_pending},
          {"actions_invalid", r.actions_invalid},
          {"actions_overflow", r.actions_overflow},
          {"snapshots_published", r.snapshots_published},
          {"snapshots_dropped", r.snapshots_dropped},
          {"reconnects", r.reconnects},
          {"initial_fps", r.initial_fps},
          {"initial_power_w", r.initial_power_w},
          {"final_fps", r.final_fps},
          {"final_power_w", r.final_power_w},
          {"final_model_id", r.final_model_id},
          {"final_level", r.final_level},
          {"placement", r.placement ? json(to_string(*r.placement)) : json(nullptr)},
          {"actions", actions}};
}

Agent::Agent(AgentConfig cfg, Platform platform, NetTrace trace, std::vector<ModelProfile> catalog,
             const Clock& clock, ModelFetcher fetch)
    : cfg_(std::move(cfg)),
      platform_(std::move(platform)),
      trace_(std::move(trace)),
      catalog_(std::move(catalog)),
      clock_(clock),
      fetch_(fetch ? std::move(fetch) : http_model_fetcher(cfg_.model_store)),
      backoff_(cfg_.backoff_base_ms, cfg_.backoff_cap_ms) {
  validate(cfg_);
}

Agent::~Agent() {
  if (session_) session_->disconnect();
  session_.reset();
}

bool Agent::connected() const { return session_ && session_->alive(); }

void Agent::on_action(const std::string& payload) {
  try {
    ActionMessage a = decode_action(payload);
    std::lock_guard lock(queue_mu_);
    if (queue_.size() >= cfg_.action_queue_capacity) {
      ++report_.actions_overflow;
      spdlog::warn("agent {}: action queue full, dropping seq {}", cfg_.device.device_id, a.seq);
    } else {
      queue_.push_back(std::move(a));
    }
  } catch (const Error& e) {
    std::lock_guard lock(queue_mu_);
    ++report_.actions_invalid;
    spdlog::warn("agent {}: ignoring invalid action: {}", cfg_.device.device_id, e.what());
  }
  received_.fetch_add(1);
}

void Agent::start() {
  session_ = Session::connect(cfg_.broker, "agent-" + cfg_.device.device_id);
  session_->subscribe("actions/" + cfg_.device.device_id,
                      [this](const std::string&, const std::string& p) { on_action(p); });
}

void Agent::try_connect() {
  const std::int64_t now = clock_.now_ms();
  if (!backoff_.ready(now)) return;
  if (session_) {
    session_->disconnect();
    session_.reset();
  }
  try {
    start();
    backoff_.succeeded();
    ++report_.reconnects;
    spdlog::info("agent {}: reconnected to {}", cfg_.device.device_id, cfg_.broker.to_string());
  } catch (const Error& e) {
    if (session_) session_->disconnect();
    session_.reset();
    backoff_.failed(now);
    spdlog::info("agent {}: reconnect failed ({}), next try in {} ms", cfg_.device.device_id,
                 e.what(), backoff_.current_delay_ms());
  }
}

void Agent::flush_buffer() {
  while (!buffer_.empty()) {
    try {
      session_->publish("telemetry/" + cfg_.device.device_id, buffer_.front());
    } catch (const NetworkError& e) {
      spdlog::warn("agent {}: publish failed: {}", cfg_.device.device_id, e.what());
      backoff_.failed(clock_.now_ms());
      return;
    }
    buffer_.pop_front();
    published_.fetch_add(1);
  }
}

TelemetrySnapshot Agent::tick() {
  if (!initial_recorded_) {
    report_.initial_fps = platform_.fps();
    report_.initial_power_w = platform_.power_w();
    initial_recorded_ = true;
  }
  std::deque<ActionMessage> pending;
  {
    std::lock_guard lock(queue_mu_);
    pending.swap(queue_);
  }
  for (const ActionMessage& a : pending) {
    ApplyResult r = apply_action(platform_, placement_, a, catalog_, fetch_);
    (r.applied() ? report_.actions_applied : report_.actions_rejected) += 1;
    if (!r.applied()) {
      spdlog::warn("agent {}: {} seq {} {}: {}", cfg_.device.device_id, to_string(a.kind), a.seq,
                   to_string(r.status), r.detail);
    }
    report_.actions.push_back({a, ticks_, std::move(r)});
  }

  platform_.advance(cfg_.sample_period_ms);
  const TracePoint tp = trace_.next();
  TelemetrySnapshot snap = platform_.sample_metrics(tp.net);
  if (placement_) snap.model.model_id += std::string("@") + to_string(*placement_);

  buffer_.push_back(encode_snapshot(snap));
  if (buffer_.size() > cfg_.buffer_capacity) {
    buffer_.pop_front();
    ++report_.snapshots_dropped;
  }
  if (!connected()) try_connect();
  if (connected()) flush_buffer();
  ++ticks_;
  return snap;
}

AgentReport Agent::run() {
  if (!session_) start();
  using steady = std::chrono::steady_clock;
  auto next = steady::now();
  while (!stop_.load() && (!cfg_.max_ticks || ticks_ < *cfg_.max_ticks)) {
    tick();
    next += std::chrono::milliseconds(cfg_.sample_period_ms);
    std::this_thread::sleep_until(next);
  }
  return finish();
}

AgentReport Agent::finish() {
  if (session_) {
    session_->disconnect();
    session_.reset();
  }
  AgentReport r;
  {
    std::lock_guard lock(queue_mu_);
    r = report_;
    r.actions_pending = queue_.size();
  }
  r.ticks = ticks_;
  r.actions_received = received_.load();
  r.snapshots_published = published_.load();
  r.final_fps = platform_.fps();
  r.final_power_w = platform_.power_w();
  r.final_model_id = platform_.active_model().model_id;
  r.final_level = platform_.level().index;
  r.placement = placement_;
  return r;
}

}  // namespace edgetel
