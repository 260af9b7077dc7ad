#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "edgetel/agent.hpp"
#include "edgetel/bandwidth.hpp"
#include "edgetel/latency.hpp"
#include "edgetel/platform.hpp"
#include "edgetel/rules.hpp"

namespace edgetel {

struct FaultSpec {
  enum class Kind { BrokerDown, CorruptModelBlob, DelayShim } kind = Kind::BrokerDown;
  std::uint64_t at_tick = 0;
  std::optional<std::uint64_t> duration_ticks;  // required for BrokerDown
  DelaySpec dist;                               // DelayShim
};

const char* to_string(FaultSpec::Kind k);

struct ScenarioSpec {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  std::uint64_t ticks = 60;
  std::int64_t start_time_ms = 1767225600000;  // 2026-01-01T00:00:00Z
  PlatformConfig platform;
  std::vector<ModelProfile> catalog;  // model store contents; builtins when empty
  AgentConfig agent;
  RuleSet rules;
  NetTraceConfig net_trace;
  std::vector<FaultSpec> faults;
};

// Throws ValidationError (e.g. a fault at or past `ticks`) or ConfigError.
void validate(const ScenarioSpec& s);

// The platform, agent, rules and net_trace members may be inline objects or
// paths to JSON files, resolved against `base_dir`. The scenario seed
// overrides the platform noise seed (seed) and the trace seed (seed + 1).
ScenarioSpec scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
ScenarioSpec load_scenario(const std::filesystem::path& path);

struct ScenarioResult {
  nlohmann::json report;
  bool ok = true;
  std::filesystem::path report_path;
  std::filesystem::path lake_path;
};

// Runs broker, cloud, model store and agent in process on a logical clock
// that advances one sample period per tick. Between ticks the harness waits
// until every published snapshot is ingested and every dispatched action has
// reached the agent, so runs are reproducible. Writes <out_dir>/report.json,
// <out_dir>/lake/ and <out_dir>/models/ (the latter two are recreated).
ScenarioResult run_scenario(const ScenarioSpec& spec, const std::filesystem::path& out_dir);

}  // namespace edgetel
