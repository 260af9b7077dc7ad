#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "edgetel/action.hpp"
#include "edgetel/bandwidth.hpp"
#include "edgetel/telemetry.hpp"

namespace edgetel {

enum class Comparator { GT, LT, GE, LE };

const char* to_string(Comparator c);
Comparator comparator_from_string(std::string_view s);
bool compare(double value, Comparator c, double threshold);

// Values computed by the cloud and not carried by the snapshot itself.
struct DerivedMetrics {
  std::optional<double> predicted_dl_mbps;  // "bandwidth.predicted_dl_mbps"
};

// Every numeric path a rule may reference.
const std::vector<std::string>& metric_paths();
bool is_metric_path(std::string_view path);
// Empty when the path names a derived value that is not available yet.
std::optional<double> resolve_metric(const TelemetrySnapshot& s, const DerivedMetrics& d,
                                     std::string_view path);

struct Rule {
  std::string rule_id;
  std::string metric_path;
  Comparator comparator = Comparator::GT;
  double threshold = 0.0;
  ActionMessage action;  // template; rule_id, seq and issued_at_ms filled on fire
  std::uint32_t cooldown_ticks = 3;
  std::uint32_t consecutive_required = 2;
};

// Bandwidth-driven placement, expanded into a rule pair:
//   predicted < required           -> SetPlacement(Device)
//   predicted >= required * margin -> SetPlacement(Edge)
struct PlacementPolicy {
  PredictorConfig predictor;
  double required_mbps = 6.0;
  double reentry_margin = 1.25;
  std::uint32_t consecutive_required = 2;
  std::uint32_t cooldown_ticks = 3;
  std::string rule_id = "R3";
};

struct RuleSet {
  std::vector<Rule> rules;  // sorted by rule_id
  std::optional<PlacementPolicy> placement;
};

// Throws ConfigError (duplicate id, unknown metric path, zero counters,
// invalid template). Sorts rules by rule_id.
void validate(RuleSet& rs);

// {"rules": [...], "placement"?: {...}}. The placement section adds the rules
// "<id>" and "<id>_recover" to the list.
RuleSet rule_set_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RuleSet& rs);

// The three standard triggers with the default thresholds: R1 fps above 30,
// R2 model efficiency below 0.5 (swap to `swap_target`), R3 placement.
RuleSet default_rule_set(const std::string& swap_target = "ssd_resnet50_fpn");

struct RuleCounters {
  std::uint32_t consecutive_hits = 0;
  std::uint32_t ticks_since_fire = 0;

  bool operator==(const RuleCounters&) const = default;
};

// Per device; keyed by rule_id. A missing entry means "never seen": no hits,
// cooldown already elapsed.
using RuleState = std::map<std::string, RuleCounters>;

struct RuleEvaluation {
  std::vector<ActionMessage> actions;  // ordered by rule_id; seq/issued_at unset
  RuleState state;
};

// Pure. For each rule: the predicate holds when the metric resolves and the
// comparison is true, unless the action is already in effect (a SwapModel to
// the running model, a SetPlacement to the current placement). A rule fires
// when the predicate held for consecutive_required snapshots in a row and at
// least cooldown_ticks snapshots passed since it last fired; firing resets
// both counters.
RuleEvaluation evaluate_rules(const TelemetrySnapshot& s, const DerivedMetrics& d,
                              const RuleSet& rs, RuleState state);

// Model id without the placement suffix, and the placement the suffix names
// (Edge when absent).
std::string_view base_model_id(std::string_view model_id);
Placement placement_of(const TelemetrySnapshot& s);

}  // namespace edgetel
