// edgetel: broker, cloud, agent, model store, scenario runner and tools.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "edgetel/agent.hpp"
#include "edgetel/broker.hpp"
#include "edgetel/cloud.hpp"
#include "edgetel/error.hpp"
#include "edgetel/http.hpp"
#include "edgetel/lake.hpp"
#include "edgetel/latency.hpp"
#include "edgetel/model_store.hpp"
#include "edgetel/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace edgetel;

namespace edgetel {
void init_logging();
}

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitNetwork = 2;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

void install_signal_handlers() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
}

void wait_for_signal() {
  while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError(p.string(), "cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError(p.string(), e.what());
  }
}

// Inline object, path to a JSON file, or absent.
json ref_or_empty(const json& j, const char* key, const fs::path& base) {
  auto it = j.find(key);
  if (it == j.end()) return json::object();
  if (it->is_string()) return read_json_file(base / it->get<std::string>());
  return *it;
}

std::vector<ModelProfile> load_catalog(const std::string& path) {
  if (path.empty()) return builtin_profiles();
  const json j = read_json_file(path);
  if (!j.is_array()) throw ConfigError(path, "expected an array of model profiles");
  std::vector<ModelProfile> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(model_profile_from_json(j[i], "models[" + std::to_string(i) + "]"));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct BrokerArgs {
  std::string bind = "127.0.0.1:1883";
};

int cmd_broker(const BrokerArgs& a) {
  auto broker = Broker::serve(parse_address(a.bind));
  spdlog::info("broker listening on {}", broker->address().to_string());
  std::fprintf(stderr, "broker listening on %s\n", broker->address().to_string().c_str());
  wait_for_signal();
  broker->stop();
  return 0;
}

struct CloudArgs {
  std::string config;
  std::string broker;
  std::string http;
  std::string lake;
  std::string rules;
  std::string models;
};

int cmd_cloud(const CloudArgs& a) {
  json cfg = a.config.empty() ? json::object() : read_json_file(a.config);
  const fs::path base = a.config.empty() ? fs::path(".") : fs::path(a.config).parent_path();
  const Address broker =
      parse_address(!a.broker.empty() ? a.broker : cfg.value("broker", std::string("127.0.0.1:1883")));
  const Address http_bind =
      parse_address(!a.http.empty() ? a.http : cfg.value("http", std::string("127.0.0.1:8080")));
  CloudConfig cc;
  cc.lake_dir = !a.lake.empty() ? a.lake : cfg.value("lake_dir", std::string("lake"));
  const json rules_json = !a.rules.empty() ? read_json_file(a.rules) : ref_or_empty(cfg, "rules", base);
  cc.rules = rules_json.empty() ? default_rule_set() : rule_set_from_json(rules_json);
  const std::string models_dir = !a.models.empty() ? a.models : cfg.value("model_store", std::string());

  std::unique_ptr<ModelStore> store;
  if (!models_dir.empty()) store = std::make_unique<ModelStore>(models_dir);
  WallClock clock;
  Cloud cloud(cc, clock, store.get());

  HttpEndpoint http(http_bind);
  http.set_ingest_handler(cloud.http_handler());
  if (store) {
    http.set_model_lookup([&store](const std::string& id) { return store->get(id); });
  }
  http.start();
  cloud.connect_bus(broker);
  std::fprintf(stderr, "cloud: broker %s, http %s, lake %s\n", broker.to_string().c_str(),
               http.address().to_string().c_str(), cc.lake_dir.string().c_str());

  Backoff backoff(500, 8000);
  while (!g_stop.load()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    if (cloud.bus_alive()) continue;
    const auto now = clock.now_ms();
    if (!backoff.ready(now)) continue;
    if (cloud.reconnect_bus()) {
      backoff.succeeded();
      spdlog::info("cloud: reconnected to broker");
    } else {
      backoff.failed(now);
    }
  }
  http.stop();
  cloud.disconnect_bus();
  const CloudStats s = cloud.stats();
  std::cout << json{{"ingested", s.ingested},
                    {"dead_letters", s.dead_letters},
                    {"dispatched", s.dispatched_sent},
                    {"dispatch_dropped", s.dispatched_dropped + s.dispatch_queue_full}}
                   .dump()
            << std::endl;
  return 0;
}

struct AgentArgs {
  std::string config;
  std::string platform;
  std::string net_trace;
  std::string models;
  std::string broker;
  std::string model_store;
  std::string device_id;
  std::string model;
  std::uint64_t period_ms = 0;
  std::uint64_t max_ticks = 0;
};

int cmd_agent(const AgentArgs& a) {
  json cfg = a.config.empty() ? json::object() : read_json_file(a.config);
  if (!a.broker.empty()) cfg["broker"] = a.broker;
  if (!a.model_store.empty()) cfg["model_store"] = a.model_store;
  if (!a.device_id.empty()) cfg["device_id"] = a.device_id;
  if (!a.model.empty()) cfg["initial_model_id"] = a.model;
  if (a.period_ms) cfg["sample_period_ms"] = a.period_ms;
  if (a.max_ticks) cfg["max_ticks"] = a.max_ticks;
  const AgentConfig ac = agent_config_from_json(cfg);
  const PlatformConfig pc =
      a.platform.empty() ? PlatformConfig{} : platform_config_from_json(read_json_file(a.platform));
  const NetTraceConfig tc =
      a.net_trace.empty() ? NetTraceConfig{} : net_trace_config_from_json(read_json_file(a.net_trace));
  const std::vector<ModelProfile> catalog = load_catalog(a.models);
  const ModelProfile* initial = nullptr;
  for (const auto& p : catalog) {
    if (p.model_id == ac.initial_model_id) initial = &p;
  }
  if (!initial) throw ConfigError("initial_model_id", "'" + ac.initial_model_id + "' is not in the catalog");

  WallClock clock;
  Agent agent(ac, init_platform(pc, *initial, ac.device), NetTrace(tc), catalog, clock);
  agent.start();
  std::atomic<bool> done{false};
  std::thread watcher([&] {
    while (!done.load()) {
      if (g_stop.load()) agent.stop();
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  });
  AgentReport r;
  try {
    r = agent.run();
  } catch (...) {
    done = true;
    watcher.join();
    throw;
  }
  done = true;
  watcher.join();
  std::cout << to_json(r).dump() << std::endl;
  return 0;
}

struct ModelStoreArgs {
  std::string root = "models";
  std::string bind = "127.0.0.1:8080";
  bool init = false;
};

int cmd_model_store(const ModelStoreArgs& a) {
  if (a.init) ModelStore::write(a.root, builtin_profiles());
  ModelStore store(a.root);
  HttpEndpoint http(parse_address(a.bind));
  http.set_model_lookup([&store](const std::string& id) { return store.get(id); });
  http.start();
  std::fprintf(stderr, "model store %s serving %zu models on %s\n", a.root.c_str(),
               store.manifest().size(), http.address().to_string().c_str());
  wait_for_signal();
  http.stop();
  return 0;
}

struct ScenarioArgs {
  std::string spec;
  std::string out;
};

int cmd_scenario(const ScenarioArgs& a) {
  const ScenarioSpec spec = load_scenario(a.spec);
  const fs::path out = a.out.empty() ? fs::path("scenario_out") / spec.name : fs::path(a.out);
  const ScenarioResult r = run_scenario(spec, out);
  std::cout << r.report.dump(2) << std::endl;
  return r.ok ? 0 : kExitNetwork;
}

struct BenchArgs {
  std::string transport = "pubsub";
  std::uint64_t n = 100;
  std::size_t payload = 256;
  std::string delay = "none";
  std::string target;
  std::uint64_t timeout_ms = 5000;
  std::uint64_t seed = 7;
  bool no_header = false;
};

int cmd_bench_latency(const BenchArgs& a) {
  if (a.n == 0) throw ConfigError("n", "must be positive");
  if (a.payload == 0) throw ConfigError("payload", "must be positive");
  const Transport t = transport_from_string(a.transport);
  const DelaySpec delay = DelaySpec::parse(a.delay);
  ProbeOptions opts;
  opts.transport = t;
  opts.n = a.n;
  opts.payload_bytes = a.payload;
  opts.timeout = std::chrono::milliseconds(a.timeout_ms);

  ProbeResult res;
  if (!a.target.empty()) {
    if (delay.kind != DelaySpec::Kind::None) {
      throw ConfigError("delay", "the delay shim only applies to the built-in loopback server");
    }
    res = latency_probe(parse_address(a.target), opts);
  } else if (t == Transport::PubSub) {
    auto broker = Broker::serve({"127.0.0.1", 0});
    ProbeResponder responder(broker->address(), delay, a.seed);
    res = latency_probe(broker->address(), opts);
  } else {
    HttpEndpoint http({"127.0.0.1", 0});
    http.set_delay(delay, a.seed);
    http.start();
    res = latency_probe(http.address(), opts);
  }
  if (!a.no_header) std::cout << stats_csv_header() << "\n";
  std::cout << stats_csv_row(t, a.payload, res.stats) << std::endl;
  return 0;
}

struct LakeExportArgs {
  std::string lake = "lake";
  std::string device;
  std::int64_t from = std::numeric_limits<std::int64_t>::min();
  std::int64_t to = std::numeric_limits<std::int64_t>::max();
};

int cmd_lake_export(const LakeExportArgs& a) {
  if (a.from > a.to) throw ConfigError("from", "--from must not exceed --to");
  if (!is_valid_device_id(a.device)) throw ConfigError("device", "invalid device id");
  const LakeQueryResult q = query_lake(a.lake, a.device, a.from, a.to);
  if (q.torn_lines || q.corrupt_lines) {
    spdlog::warn("lake export: skipped {} torn and {} corrupt lines", q.torn_lines, q.corrupt_lines);
  }
  std::cout << lake_csv_header() << "\n";
  for (const LakeRecord& r : q.records) std::cout << lake_csv_row(r) << "\n";
  std::cout.flush();
  return 0;
}

int guarded(const std::function<int()>& f) {
  try {
    return f();
  } catch (const NetworkError& e) {
    std::fprintf(stderr, "edgetel: %s\n", e.what());
    return kExitNetwork;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "edgetel: %s\n", e.what());
    return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  install_signal_handlers();

  CLI::App app{"Edge AI telemetry framework"};
  app.require_subcommand(1);
  std::function<int()> run;

  BrokerArgs broker_args;
  auto* broker = app.add_subcommand("broker", "Run the pub/sub broker");
  broker->add_option("--bind", broker_args.bind, "host:port to listen on");
  broker->callback([&] { run = [&] { return cmd_broker(broker_args); }; });

  CloudArgs cloud_args;
  auto* cloud = app.add_subcommand("cloud", "Run the cloud ingest, rules and dispatch service");
  cloud->add_option("--config", cloud_args.config, "cloud JSON config")->check(CLI::ExistingFile);
  cloud->add_option("--broker", cloud_args.broker, "broker host:port");
  cloud->add_option("--http", cloud_args.http, "host:port for ingest and model downloads");
  cloud->add_option("--lake", cloud_args.lake, "lake directory");
  cloud->add_option("--rules", cloud_args.rules, "rule set JSON")->check(CLI::ExistingFile);
  cloud->add_option("--models", cloud_args.models, "model store directory to serve");
  cloud->callback([&] { run = [&] { return cmd_cloud(cloud_args); }; });

  AgentArgs agent_args;
  auto* agent = app.add_subcommand("agent", "Run the edge telemetry agent");
  agent->add_option("--config", agent_args.config, "agent JSON config")->check(CLI::ExistingFile);
  agent->add_option("--platform", agent_args.platform, "platform JSON config")->check(CLI::ExistingFile);
  agent->add_option("--net-trace", agent_args.net_trace, "network trace JSON config")
      ->check(CLI::ExistingFile);
  agent->add_option("--models", agent_args.models, "model catalog JSON")->check(CLI::ExistingFile);
  agent->add_option("--broker", agent_args.broker, "broker host:port");
  agent->add_option("--model-store", agent_args.model_store, "model store host:port");
  agent->add_option("--device-id", agent_args.device_id, "device id");
  agent->add_option("--model", agent_args.model, "initial model id");
  agent->add_option("--period-ms", agent_args.period_ms, "sample period");
  agent->add_option("--max-ticks", agent_args.max_ticks, "stop after this many ticks");
  agent->callback([&] { run = [&] { return cmd_agent(agent_args); }; });

  ModelStoreArgs store_args;
  auto* store = app.add_subcommand("model-store", "Serve model blobs over HTTP");
  store->add_option("--root", store_args.root, "directory with <model_id>.bin and manifest.json");
  store->add_option("--bind", store_args.bind, "host:port to listen on");
  store->add_flag("--init", store_args.init, "write the built-in models into --root first");
  store->callback([&] { run = [&] { return cmd_model_store(store_args); }; });

  ScenarioArgs scenario_args;
  auto* scenario = app.add_subcommand("scenario", "Run a scripted end-to-end scenario");
  scenario->add_option("spec", scenario_args.spec, "scenario JSON")->required()->check(CLI::ExistingFile);
  scenario->add_option("--out", scenario_args.out, "output directory (default scenario_out/<name>)");
  scenario->callback([&] { run = [&] { return cmd_scenario(scenario_args); }; });

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench-latency", "Measure per-message round-trip latency");
  bench->add_option("--transport", bench_args.transport, "pubsub or http");
  bench->add_option("-n", bench_args.n, "number of messages");
  bench->add_option("--payload", bench_args.payload, "payload bytes");
  bench->add_option("--delay", bench_args.delay, "server delay: none|const:ms|normal:m,s|uniform:a,b");
  bench->add_option("--target", bench_args.target, "external broker or HTTP endpoint host:port");
  bench->add_option("--timeout-ms", bench_args.timeout_ms, "per-message timeout");
  bench->add_option("--seed", bench_args.seed, "delay sampler seed");
  bench->add_flag("--no-header", bench_args.no_header, "omit the CSV header");
  bench->callback([&] { run = [&] { return cmd_bench_latency(bench_args); }; });

  auto* lake = app.add_subcommand("lake", "Data lake tools");
  lake->require_subcommand(1);
  LakeExportArgs export_args;
  auto* lake_export = lake->add_subcommand("export", "Export one device's records as CSV");
  lake_export->add_option("--lake", export_args.lake, "lake directory");
  lake_export->add_option("--device", export_args.device, "device id")->required();
  lake_export->add_option("--from", export_args.from, "inclusive lower bound, ms");
  lake_export->add_option("--to", export_args.to, "exclusive upper bound, ms");
  lake_export->callback([&] { run = [&] { return cmd_lake_export(export_args); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  return guarded(run);
}
