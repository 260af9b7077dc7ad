#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "edgetel/bandwidth.hpp"

namespace edgetel {

enum class ActionKind { StepFrequencyDown, StepFrequencyUp, SwapModel, SetPlacement };

const char* to_string(ActionKind k);
ActionKind action_kind_from_string(std::string_view s);

// Feedback command sent from the cloud to one device.
struct ActionMessage {
  ActionKind kind = ActionKind::StepFrequencyDown;
  std::string model_id;         // SwapModel
  std::string expected_digest;  // SwapModel, 64 lowercase hex
  Placement placement = Placement::Edge;  // SetPlacement
  std::string rule_id;
  std::int64_t issued_at_ms = 0;
  std::uint64_t seq = 0;

  bool operator==(const ActionMessage&) const = default;
};

// Throws ValidationError.
void validate(const ActionMessage& a);

// Wire JSON: action, rule_id, issued_at_ms, seq, then model_id and
// expected_digest (SwapModel) or placement (SetPlacement).
std::string encode_action(const ActionMessage& a);
ActionMessage decode_action(std::string_view bytes);

// Rule-file action template: {"action": ..., "model_id"?, "expected_digest"?,
// "placement"?}. A SwapModel template may leave the digest empty for the
// cloud to fill in from the model store manifest.
ActionMessage action_template_from_json(const nlohmann::json& j, std::string_view path);
nlohmann::json action_template_to_json(const ActionMessage& a);

}  // namespace edgetel
