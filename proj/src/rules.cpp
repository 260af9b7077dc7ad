#include "edgetel/rules.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "edgetel/error.hpp"
#include "json_util.hpp"

namespace edgetel {

using detail::json;

const char* to_string(Comparator c) {
  switch (c) {
    case Comparator::GT: return "GT";
    case Comparator::LT: return "LT";
    case Comparator::GE: return "GE";
    case Comparator::LE: return "LE";
  }
  return "GT";
}

Comparator comparator_from_string(std::string_view s) {
  if (s == "GT") return Comparator::GT;
  if (s == "LT") return Comparator::LT;
  if (s == "GE") return Comparator::GE;
  if (s == "LE") return Comparator::LE;
  throw ConfigError("comparator", "expected GT, LT, GE or LE, got '" + std::string(s) + "'");
}

bool compare(double value, Comparator c, double threshold) {
  switch (c) {
    case Comparator::GT: return value > threshold;
    case Comparator::LT: return value < threshold;
    case Comparator::GE: return value >= threshold;
    case Comparator::LE: return value <= threshold;
  }
  return false;
}

namespace {

struct PathEntry {
  const char* path;
  double (*get)(const TelemetrySnapshot&);
};

constexpr PathEntry kSnapshotPaths[] = {
    {"seq", [](const TelemetrySnapshot& s) { return static_cast<double>(s.seq); }},
    {"device_time_ms", [](const TelemetrySnapshot& s) { return static_cast<double>(s.device_time_ms); }},
    {"app.ee_latency_ms", [](const TelemetrySnapshot& s) { return s.app.ee_latency_ms; }},
    {"app.fps", [](const TelemetrySnapshot& s) { return s.app.fps; }},
    {"model.accel_utilization", [](const TelemetrySnapshot& s) { return s.model.accel_utilization; }},
    {"model.mem_throughput_gbps", [](const TelemetrySnapshot& s) { return s.model.mem_throughput_gbps; }},
    {"model.cpu_utilization", [](const TelemetrySnapshot& s) { return s.model.cpu_utilization; }},
    {"model.mem_utilization", [](const TelemetrySnapshot& s) { return s.model.mem_utilization; }},
    {"model.model_efficiency", [](const TelemetrySnapshot& s) { return s.model.model_efficiency; }},
    {"energy.power_w", [](const TelemetrySnapshot& s) { return s.energy.power_w; }},
    {"energy.temp_c", [](const TelemetrySnapshot& s) { return s.energy.temp_c; }},
    {"energy.fps_per_watt", [](const TelemetrySnapshot& s) { return s.energy.fps_per_watt; }},
    {"network.rssi_dbm", [](const TelemetrySnapshot& s) { return s.network.rssi_dbm; }},
    {"network.rsrq_db", [](const TelemetrySnapshot& s) { return s.network.rsrq_db; }},
    {"network.rsrp_dbm", [](const TelemetrySnapshot& s) { return s.network.rsrp_dbm; }},
    {"network.modem_temp_c", [](const TelemetrySnapshot& s) { return s.network.modem_temp_c; }},
    {"network.dl_mbps", [](const TelemetrySnapshot& s) { return s.network.dl_mbps; }},
    {"network.ul_mbps", [](const TelemetrySnapshot& s) { return s.network.ul_mbps; }},
};

constexpr const char* kPredictedDl = "bandwidth.predicted_dl_mbps";

}  // namespace

const std::vector<std::string>& metric_paths() {
  static const std::vector<std::string> paths = [] {
    std::vector<std::string> v;
    for (const auto& e : kSnapshotPaths) v.emplace_back(e.path);
    v.emplace_back(kPredictedDl);
    return v;
  }();
  return paths;
}

bool is_metric_path(std::string_view path) {
  const auto& v = metric_paths();
  return std::find(v.begin(), v.end(), path) != v.end();
}

std::optional<double> resolve_metric(const TelemetrySnapshot& s, const DerivedMetrics& d,
                                     std::string_view path) {
  for (const auto& e : kSnapshotPaths) {
    if (path == e.path) return e.get(s);
  }
  if (path == kPredictedDl) return d.predicted_dl_mbps;
  return std::nullopt;
}

std::string_view base_model_id(std::string_view model_id) {
  return model_id.substr(0, model_id.find('@'));
}

Placement placement_of(const TelemetrySnapshot& s) {
  const auto at = s.model.model_id.find('@');
  if (at == std::string::npos) return Placement::Edge;
  return s.model.model_id.substr(at + 1) == "device" ? Placement::Device : Placement::Edge;
}

namespace {

bool already_in_effect(const ActionMessage& a, const TelemetrySnapshot& s) {
  if (a.kind == ActionKind::SwapModel) return base_model_id(s.model.model_id) == a.model_id;
  if (a.kind == ActionKind::SetPlacement) return placement_of(s) == a.placement;
  return false;
}

std::string rules_path(std::size_t i) { return "rules[" + std::to_string(i) + "]"; }

}  // namespace

void validate(RuleSet& rs) {
  std::set<std::string> ids;
  for (std::size_t i = 0; i < rs.rules.size(); ++i) {
    const Rule& r = rs.rules[i];
    const std::string p = rules_path(i);
    if (r.rule_id.empty()) throw ConfigError(p + ".rule_id", "must not be empty");
    if (!ids.insert(r.rule_id).second) {
      throw ConfigError(p + ".rule_id", "duplicate rule id '" + r.rule_id + "'");
    }
    if (!is_metric_path(r.metric_path)) {
      throw ConfigError(p + ".metric_path", "'" + r.metric_path + "' does not name a snapshot metric");
    }
    if (!std::isfinite(r.threshold)) throw ConfigError(p + ".threshold", "must be finite");
    if (r.cooldown_ticks == 0) throw ConfigError(p + ".cooldown_ticks", "must be positive");
    if (r.consecutive_required == 0) {
      throw ConfigError(p + ".consecutive_required", "must be positive");
    }
    if (r.action.kind == ActionKind::SwapModel && r.action.model_id.empty()) {
      throw ConfigError(p + ".action.model_id", "SwapModel needs a model_id");
    }
  }
  if (rs.placement) {
    const PlacementPolicy& pp = *rs.placement;
    try {
      validate(pp.predictor);
    } catch (const Error& e) {
      throw ConfigError("placement", e.what());
    }
    if (!(pp.required_mbps > 0) || !std::isfinite(pp.required_mbps)) {
      throw ConfigError("placement.required_mbps", "must be positive");
    }
    if (!(pp.reentry_margin >= 1.0) || !std::isfinite(pp.reentry_margin)) {
      throw ConfigError("placement.reentry_margin", "must be >= 1");
    }
  }
  std::sort(rs.rules.begin(), rs.rules.end(),
            [](const Rule& a, const Rule& b) { return a.rule_id < b.rule_id; });
}

namespace {

Rule rule_from_json(const json& j, std::string_view path) {
  detail::check_keys(j, path, {"rule_id", "metric_path", "comparator", "threshold", "action"},
                     {"cooldown_ticks", "consecutive_required"});
  Rule r;
  r.rule_id = detail::get_string(j, path, "rule_id");
  r.metric_path = detail::get_string(j, path, "metric_path");
  r.comparator = comparator_from_string(detail::get_string(j, path, "comparator"));
  r.threshold = detail::get_double(j, path, "threshold");
  r.action = action_template_from_json(detail::member(j, path, "action"),
                                       detail::join_path(path, "action"));
  r.cooldown_ticks = detail::value_or<std::uint32_t>(j, path, "cooldown_ticks", 3);
  r.consecutive_required = detail::value_or<std::uint32_t>(j, path, "consecutive_required", 2);
  return r;
}

PlacementPolicy placement_from_json(const json& j, std::string_view path) {
  detail::check_keys(j, path, {},
                     {"rule_id", "window", "ridge_lambda", "ewma_alpha", "min_samples",
                      "required_mbps", "reentry_margin", "consecutive_required",
                      "cooldown_ticks"});
  PlacementPolicy p;
  p.rule_id = detail::value_or<std::string>(j, path, "rule_id", p.rule_id);
  p.predictor.window = detail::value_or<std::size_t>(j, path, "window", p.predictor.window);
  p.predictor.ridge_lambda = detail::value_or(j, path, "ridge_lambda", p.predictor.ridge_lambda);
  p.predictor.ewma_alpha = detail::value_or(j, path, "ewma_alpha", p.predictor.ewma_alpha);
  p.predictor.min_samples =
      detail::value_or<std::size_t>(j, path, "min_samples", p.predictor.min_samples);
  p.required_mbps = detail::value_or(j, path, "required_mbps", p.required_mbps);
  p.reentry_margin = detail::value_or(j, path, "reentry_margin", p.reentry_margin);
  p.consecutive_required =
      detail::value_or<std::uint32_t>(j, path, "consecutive_required", p.consecutive_required);
  p.cooldown_ticks = detail::value_or<std::uint32_t>(j, path, "cooldown_ticks", p.cooldown_ticks);
  return p;
}

void expand_placement(RuleSet& rs) {
  if (!rs.placement) return;
  const PlacementPolicy& p = *rs.placement;
  Rule to_device;
  to_device.rule_id = p.rule_id;
  to_device.metric_path = kPredictedDl;
  to_device.comparator = Comparator::LT;
  to_device.threshold = p.required_mbps;
  to_device.action.kind = ActionKind::SetPlacement;
  to_device.action.placement = Placement::Device;
  to_device.cooldown_ticks = p.cooldown_ticks;
  to_device.consecutive_required = p.consecutive_required;
  Rule to_edge = to_device;
  to_edge.rule_id = p.rule_id + "_recover";
  to_edge.comparator = Comparator::GE;
  to_edge.threshold = p.required_mbps * p.reentry_margin;
  to_edge.action.placement = Placement::Edge;
  rs.rules.push_back(std::move(to_device));
  rs.rules.push_back(std::move(to_edge));
}

}  // namespace

RuleSet rule_set_from_json(const json& j) {
  RuleSet rs;
  try {
    detail::check_keys(j, "", {}, {"rules", "placement"});
    if (j.contains("rules")) {
      const json& arr = j["rules"];
      if (!arr.is_array()) throw SchemaError("rules", "expected array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        rs.rules.push_back(rule_from_json(arr[i], rules_path(i)));
      }
    }
    if (j.contains("placement")) rs.placement = placement_from_json(j["placement"], "placement");
  } catch (const SchemaError& e) {
    throw ConfigError(e.field(), e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(e.field(), e.what());
  }
  expand_placement(rs);
  validate(rs);
  return rs;
}

json to_json(const RuleSet& rs) {
  json rules = json::array();
  std::set<std::string> synthesized;
  if (rs.placement) {
    synthesized = {rs.placement->rule_id, rs.placement->rule_id + "_recover"};
  }
  for (const Rule& r : rs.rules) {
    if (synthesized.count(r.rule_id)) continue;
    rules.push_back({{"rule_id", r.rule_id},
                     {"metric_path", r.metric_path},
                     {"comparator", to_string(r.comparator)},
                     {"threshold", r.threshold},
                     {"action", action_template_to_json(r.action)},
                     {"cooldown_ticks", r.cooldown_ticks},
                     {"consecutive_required", r.consecutive_required}});
  }
  json out{{"rules", rules}};
  if (rs.placement) {
    const PlacementPolicy& p = *rs.placement;
    out["placement"] = {{"rule_id", p.rule_id},
                        {"window", p.predictor.window},
                        {"ridge_lambda", p.predictor.ridge_lambda},
                        {"ewma_alpha", p.predictor.ewma_alpha},
                        {"min_samples", p.predictor.min_samples},
                        {"required_mbps", p.required_mbps},
                        {"reentry_margin", p.reentry_margin},
                        {"consecutive_required", p.consecutive_required},
                        {"cooldown_ticks", p.cooldown_ticks}};
  }
  return out;
}

RuleSet default_rule_set(const std::string& swap_target) {
  RuleSet rs;
  Rule r1;
  r1.rule_id = "R1";
  r1.metric_path = "app.fps";
  r1.comparator = Comparator::GT;
  r1.threshold = 30.0;
  r1.action.kind = ActionKind::StepFrequencyDown;
  Rule r2;
  r2.rule_id = "R2";
  r2.metric_path = "model.model_efficiency";
  r2.comparator = Comparator::LT;
  r2.threshold = 0.5;
  r2.action.kind = ActionKind::SwapModel;
  r2.action.model_id = swap_target;
  rs.rules = {r1, r2};
  rs.placement = PlacementPolicy{};
  expand_placement(rs);
  validate(rs);
  return rs;
}

RuleEvaluation evaluate_rules(const TelemetrySnapshot& s, const DerivedMetrics& d,
                              const RuleSet& rs, RuleState state) {
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  RuleEvaluation out;
  for (const Rule& r : rs.rules) {
    auto [it, inserted] = state.try_emplace(r.rule_id);
    RuleCounters& c = it->second;
    if (inserted) c.ticks_since_fire = r.cooldown_ticks;
    if (c.ticks_since_fire < kMax) ++c.ticks_since_fire;

    const auto v = resolve_metric(s, d, r.metric_path);
    const bool held = v && compare(*v, r.comparator, r.threshold) && !already_in_effect(r.action, s);
    if (!held) {
      c.consecutive_hits = 0;
      continue;
    }
    if (c.consecutive_hits < kMax) ++c.consecutive_hits;
    if (c.consecutive_hits >= r.consecutive_required && c.ticks_since_fire >= r.cooldown_ticks) {
      ActionMessage a = r.action;
      a.rule_id = r.rule_id;
      out.actions.push_back(std::move(a));
      c.consecutive_hits = 0;
      c.ticks_since_fire = 0;
    }
  }
  out.state = std::move(state);
  return out;
}

}  // namespace edgetel
