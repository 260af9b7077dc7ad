#include "edgetel/scenario.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

#include "edgetel/broker.hpp"
#include "edgetel/cloud.hpp"
#include "edgetel/error.hpp"
#include "edgetel/http.hpp"
#include "edgetel/model_store.hpp"
#include "json_util.hpp"
#include "log.hpp"

namespace edgetel {

namespace fs = std::filesystem;
using detail::json;

const char* to_string(FaultSpec::Kind k) {
  switch (k) {
    case FaultSpec::Kind::BrokerDown: return "broker_down";
    case FaultSpec::Kind::CorruptModelBlob: return "corrupt_model_blob";
    case FaultSpec::Kind::DelayShim: return "delay_shim";
  }
  return "unknown";
}

void validate(const ScenarioSpec& s) {
  if (s.ticks == 0) throw ValidationError("ticks", "must be positive");
  validate(s.platform);
  validate(s.agent);
  validate(s.net_trace);
  RuleSet rules = s.rules;
  validate(rules);
  for (const ModelProfile& p : s.catalog) validate(p);
  for (std::size_t i = 0; i < s.faults.size(); ++i) {
    const FaultSpec& f = s.faults[i];
    const std::string p = "faults[" + std::to_string(i) + "]";
    if (f.at_tick >= s.ticks) {
      throw ValidationError(p + ".at_tick", "at_tick " + std::to_string(f.at_tick) +
                                                " must be below ticks " + std::to_string(s.ticks));
    }
    if (f.kind == FaultSpec::Kind::BrokerDown && (!f.duration_ticks || *f.duration_ticks == 0)) {
      throw ValidationError(p + ".duration_ticks", "broker_down needs a positive duration");
    }
  }
}

namespace {

json read_json_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError(p.string(), "cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return detail::parse_json(ss.str());
  } catch (const ParseError& e) {
    throw ConfigError(p.string(), e.what());
  }
}

// Inline object or a path to one.
json resolve_ref(const json& j, const char* key, const fs::path& base) {
  auto it = j.find(key);
  if (it == j.end()) return json::object();
  if (it->is_string()) return read_json_file(base / it->get<std::string>());
  if (!it->is_object()) throw ConfigError(key, "expected an object or a file path");
  return *it;
}

FaultSpec fault_from_json(const json& j, const std::string& path) {
  detail::check_keys(j, path, {"at_tick", "kind"}, {"duration_ticks", "dist"});
  FaultSpec f;
  f.at_tick = detail::get_u64(j, path, "at_tick");
  const std::string kind = detail::get_string(j, path, "kind");
  if (kind == "broker_down") {
    f.kind = FaultSpec::Kind::BrokerDown;
  } else if (kind == "corrupt_model_blob") {
    f.kind = FaultSpec::Kind::CorruptModelBlob;
  } else if (kind == "delay_shim") {
    f.kind = FaultSpec::Kind::DelayShim;
    f.dist = DelaySpec::parse(detail::get_string(j, path, "dist"));
  } else {
    throw ValidationError(path + ".kind", "unknown fault '" + kind + "'");
  }
  if (j.contains("duration_ticks")) f.duration_ticks = detail::get_u64(j, path, "duration_ticks");
  return f;
}

}  // namespace

ScenarioSpec scenario_from_json(const json& j, const fs::path& base_dir) {
  detail::check_keys(j, "", {"ticks"},
                     {"name", "seed", "start_time_ms", "platform", "models", "agent", "rules",
                      "net_trace", "faults"});
  ScenarioSpec s;
  s.name = detail::value_or<std::string>(j, "", "name", s.name);
  s.seed = detail::value_or<std::uint64_t>(j, "", "seed", s.seed);
  s.ticks = detail::get_u64(j, "", "ticks");
  s.start_time_ms = detail::value_or<std::int64_t>(j, "", "start_time_ms", s.start_time_ms);

  json pj = resolve_ref(j, "platform", base_dir);
  if (s.start_time_ms < 0) throw ValidationError("start_time_ms", "must be non-negative");
  if (!pj.contains("epoch_ms")) pj["epoch_ms"] = static_cast<std::uint64_t>(s.start_time_ms);
  s.platform = platform_config_from_json(pj);
  s.platform.noise_seed = s.seed;

  if (auto it = j.find("models"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("models", "expected array of model profiles");
    for (std::size_t i = 0; i < it->size(); ++i) {
      s.catalog.push_back(model_profile_from_json((*it)[i], "models[" + std::to_string(i) + "]"));
    }
  } else {
    s.catalog = builtin_profiles();
  }

  s.agent = agent_config_from_json(resolve_ref(j, "agent", base_dir));
  s.rules = rule_set_from_json(resolve_ref(j, "rules", base_dir));
  s.net_trace = net_trace_config_from_json(resolve_ref(j, "net_trace", base_dir));
  s.net_trace.seed = s.seed + 1;

  if (auto it = j.find("faults"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("faults", "expected array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      s.faults.push_back(fault_from_json((*it)[i], "faults[" + std::to_string(i) + "]"));
    }
  }
  validate(s);
  return s;
}

ScenarioSpec load_scenario(const fs::path& path) {
  return scenario_from_json(read_json_file(path), path.parent_path());
}

namespace {

using namespace std::chrono_literals;

bool wait_until(const std::function<bool()>& pred, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (!pred()) {
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(200us);
  }
  return true;
}

std::unique_ptr<Broker> serve_broker(std::uint16_t port) {
  // The old listener may take a moment to release the port.
  for (int attempt = 0;; ++attempt) {
    try {
      return Broker::serve({"127.0.0.1", port});
    } catch (const NetworkError&) {
      if (attempt >= 50) throw;
      std::this_thread::sleep_for(20ms);
    }
  }
}

json action_json(const ActionMessage& a) { return json::parse(encode_action(a)); }

}  // namespace

ScenarioResult run_scenario(const ScenarioSpec& spec, const fs::path& out_dir) {
  validate(spec);
  constexpr auto kSyncTimeout = 5000ms;
  ScenarioResult result;
  result.lake_path = out_dir / "lake";
  result.report_path = out_dir / "report.json";
  const fs::path models_dir = out_dir / "models";
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw StorageError(out_dir.string(), ec.message());
  fs::remove_all(result.lake_path);
  fs::remove_all(models_dir);

  const std::vector<ModelProfile>& catalog = spec.catalog.empty() ? builtin_profiles() : spec.catalog;
  ModelStore::write(models_dir, catalog);
  ModelStore store(models_dir);

  LogicalClock clock(spec.start_time_ms);
  auto broker = Broker::serve({"127.0.0.1", 0});
  const std::uint16_t broker_port = broker->port();

  HttpEndpoint http({"127.0.0.1", 0});
  http.set_model_lookup([&store](const std::string& id) { return store.get(id); });
  http.start();

  CloudConfig ccfg;
  ccfg.lake_dir = result.lake_path;
  ccfg.rules = spec.rules;
  auto cloud = std::make_unique<Cloud>(ccfg, clock, &store);
  http.set_ingest_handler(cloud->http_handler());
  cloud->connect_bus(broker->address());

  AgentConfig acfg = spec.agent;
  acfg.broker = broker->address();
  acfg.model_store = http.address();
  acfg.max_ticks = spec.ticks;
  const ModelProfile* initial = nullptr;
  for (const auto& p : catalog) {
    if (p.model_id == acfg.initial_model_id) initial = &p;
  }
  if (!initial) {
    throw ConfigError("agent.initial_model_id", "'" + acfg.initial_model_id + "' not in the catalog");
  }
  Agent agent(acfg, init_platform(spec.platform, *initial, acfg.device), NetTrace(spec.net_trace),
              catalog, clock);
  agent.start();

  std::vector<std::string> errors;
  bool partial = false;
  constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t broker_back_at = kNever;
  std::vector<std::pair<std::uint64_t, std::function<void()>>> restores;

  for (std::uint64_t tick = 0; tick < spec.ticks; ++tick) {
    if (broker_back_at == tick) {
      broker = serve_broker(broker_port);
      broker_back_at = kNever;
      if (!cloud->reconnect_bus()) errors.push_back("cloud could not reconnect at tick " + std::to_string(tick));
    }
    for (auto it = restores.begin(); it != restores.end();) {
      if (it->first == tick) {
        it->second();
        it = restores.erase(it);
      } else {
        ++it;
      }
    }
    for (const FaultSpec& f : spec.faults) {
      if (f.at_tick != tick) continue;
      switch (f.kind) {
        case FaultSpec::Kind::BrokerDown:
          if (!broker) break;
          broker->stop();
          broker.reset();
          if (!wait_until([&] { return !cloud->bus_alive() && !agent.connected(); }, kSyncTimeout)) {
            errors.push_back("sessions still alive after broker stop at tick " + std::to_string(tick));
          }
          broker_back_at = tick + *f.duration_ticks;
          break;
        case FaultSpec::Kind::CorruptModelBlob:
          store.set_truncate_blobs(true);
          if (f.duration_ticks) {
            restores.emplace_back(tick + *f.duration_ticks, [&store] { store.set_truncate_blobs(false); });
          }
          break;
        case FaultSpec::Kind::DelayShim:
          http.set_delay(f.dist, spec.seed + 2);
          if (f.duration_ticks) {
            restores.emplace_back(tick + *f.duration_ticks, [&http] { http.set_delay({}); });
          }
          break;
      }
    }

    clock.advance(static_cast<std::int64_t>(acfg.sample_period_ms));
    agent.tick();

    const bool synced =
        wait_until([&] { return cloud->stats().pubsub_processed == agent.snapshots_published(); },
                   kSyncTimeout) &&
        cloud->wait_dispatch_idle(kSyncTimeout) &&
        wait_until([&] { return agent.actions_received() == cloud->stats().dispatched_sent; },
                   kSyncTimeout);
    if (!synced) {
      partial = true;
      errors.push_back("components out of sync after tick " + std::to_string(tick));
      spdlog::error("scenario {}: components out of sync after tick {}", spec.name, tick);
    }
  }

  const AgentReport ar = agent.finish();
  cloud->disconnect_bus();
  const CloudStats cs = cloud->stats();
  const std::vector<DispatchRecord> dispatched = cloud->dispatch_log();
  cloud.reset();
  http.stop();
  if (broker) broker->stop();

  json actions = json::array();
  for (const DispatchRecord& d : dispatched) {
    json a = action_json(d.action);
    a["device_id"] = d.device_id;
    a["dispatch"] = to_string(d.outcome);
    for (const ActionLogEntry& e : ar.actions) {
      if (e.action.seq != d.action.seq) continue;
      a["applied_before_tick"] = e.applied_before_tick;
      a["result"] = to_string(e.result.status);
    }
    if (!a.contains("result")) a["result"] = d.outcome == DispatchOutcome::Sent ? "pending" : "not_delivered";
    actions.push_back(std::move(a));
  }

  const auto records = query_lake(result.lake_path, acfg.device.device_id,
                                  std::numeric_limits<std::int64_t>::min(),
                                  std::numeric_limits<std::int64_t>::max());
  result.ok = errors.empty() && !partial;
  json report{
      {"scenario", spec.name},
      {"seed", spec.seed},
      {"ticks", ar.ticks},
      {"start_time_ms", spec.start_time_ms},
      {"ok", result.ok},
      {"partial", partial},
      {"errors", errors},
      {"initial_fps", ar.initial_fps},
      {"initial_power_w", ar.initial_power_w},
      {"final_fps", ar.final_fps},
      {"final_power_w", ar.final_power_w},
      {"final_model_id", ar.final_model_id},
      {"final_level", ar.final_level},
      {"final_placement", ar.placement ? json(to_string(*ar.placement)) : json(nullptr)},
      {"actions", actions},
      {"actions_applied", ar.actions_applied},
      {"actions_rejected", ar.actions_rejected},
      {"actions_pending", ar.actions_pending},
      {"dispatched", cs.dispatched_sent},
      {"dispatch_dropped", cs.dispatched_dropped + cs.dispatch_queue_full},
      {"snapshots_published", ar.snapshots_published},
      {"snapshots_dropped", ar.snapshots_dropped},
      {"lake_path", result.lake_path.string()},
      {"lake_records", records.records.size()},
      {"dead_letters", cs.dead_letters},
  };
  result.report = report;
  std::ofstream out(result.report_path, std::ios::binary | std::ios::trunc);
  out << report.dump(2) << "\n";
  if (!out) throw StorageError(result.report_path.string(), "write failed");
  return result;
}

}  // namespace edgetel
