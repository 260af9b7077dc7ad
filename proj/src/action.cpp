#include "edgetel/action.hpp"

#include "edgetel/error.hpp"
#include "edgetel/sha256.hpp"
#include "json_util.hpp"

namespace edgetel {

using detail::json;

const char* to_string(ActionKind k) {
  switch (k) {
    case ActionKind::StepFrequencyDown: return "StepFrequencyDown";
    case ActionKind::StepFrequencyUp: return "StepFrequencyUp";
    case ActionKind::SwapModel: return "SwapModel";
    case ActionKind::SetPlacement: return "SetPlacement";
  }
  return "unknown";
}

ActionKind action_kind_from_string(std::string_view s) {
  if (s == "StepFrequencyDown") return ActionKind::StepFrequencyDown;
  if (s == "StepFrequencyUp") return ActionKind::StepFrequencyUp;
  if (s == "SwapModel") return ActionKind::SwapModel;
  if (s == "SetPlacement") return ActionKind::SetPlacement;
  throw ValidationError("action", "unknown action '" + std::string(s) + "'");
}

void validate(const ActionMessage& a) {
  if (a.kind == ActionKind::SwapModel) {
    if (a.model_id.empty()) throw ValidationError("model_id", "SwapModel needs a model_id");
    if (!is_sha256_hex(a.expected_digest)) {
      throw ValidationError("expected_digest", "must be 64 lowercase hex characters");
    }
  }
}

std::string encode_action(const ActionMessage& a) {
  validate(a);
  std::string out = "{\"action\":" + detail::quote(to_string(a.kind)) +
                    ",\"rule_id\":" + detail::quote(a.rule_id) +
                    ",\"issued_at_ms\":" + std::to_string(a.issued_at_ms) +
                    ",\"seq\":" + std::to_string(a.seq);
  if (a.kind == ActionKind::SwapModel) {
    out += ",\"model_id\":" + detail::quote(a.model_id) +
           ",\"expected_digest\":" + detail::quote(a.expected_digest);
  } else if (a.kind == ActionKind::SetPlacement) {
    out += ",\"placement\":" + detail::quote(to_string(a.placement));
  }
  out += '}';
  return out;
}

namespace {

void read_kind_fields(const json& j, std::string_view path, ActionMessage& a) {
  if (a.kind == ActionKind::SwapModel) {
    a.model_id = detail::get_string(j, path, "model_id");
    a.expected_digest = detail::value_or<std::string>(j, path, "expected_digest", "");
  } else if (j.contains("model_id") || j.contains("expected_digest")) {
    throw SchemaError(detail::join_path(path, "model_id"), "only valid for SwapModel");
  }
  if (a.kind == ActionKind::SetPlacement) {
    a.placement = placement_from_string(detail::get_string(j, path, "placement"));
  } else if (j.contains("placement")) {
    throw SchemaError(detail::join_path(path, "placement"), "only valid for SetPlacement");
  }
}

}  // namespace

ActionMessage decode_action(std::string_view bytes) {
  const json j = detail::parse_json(bytes);
  detail::check_keys(j, "", {"action", "rule_id", "issued_at_ms", "seq"},
                     {"model_id", "expected_digest", "placement"});
  ActionMessage a;
  a.kind = action_kind_from_string(detail::get_string(j, "", "action"));
  a.rule_id = detail::get_string(j, "", "rule_id");
  a.issued_at_ms = detail::as_i64(j["issued_at_ms"], "issued_at_ms");
  a.seq = detail::get_u64(j, "", "seq");
  read_kind_fields(j, "", a);
  validate(a);
  return a;
}

ActionMessage action_template_from_json(const json& j, std::string_view path) {
  detail::check_keys(j, path, {"action"}, {"model_id", "expected_digest", "placement"});
  ActionMessage a;
  a.kind = action_kind_from_string(detail::get_string(j, path, "action"));
  read_kind_fields(j, path, a);
  if (!a.expected_digest.empty() && !is_sha256_hex(a.expected_digest)) {
    throw ValidationError(detail::join_path(path, "expected_digest"), "must be 64 lowercase hex");
  }
  return a;
}

json action_template_to_json(const ActionMessage& a) {
  json j{{"action", to_string(a.kind)}};
  if (a.kind == ActionKind::SwapModel) {
    j["model_id"] = a.model_id;
    if (!a.expected_digest.empty()) j["expected_digest"] = a.expected_digest;
  } else if (a.kind == ActionKind::SetPlacement) {
    j["placement"] = to_string(a.placement);
  }
  return j;
}

}  // namespace edgetel
