#pragma once

// Wire format of the pub/sub protocol (all integers big-endian):
//
//   +------+------------+----------------------+
//   | kind | body (u32) | body                 |
//   +------+------------+----------------------+
//
//   CONNECT     u16 len, client_id
//   CONNACK     u8 code
//   SUBSCRIBE   u16 len, filter
//   SUBACK      u8 code
//   PUBLISH     u16 len, topic, payload (rest of body)
//   PINGREQ, PINGRESP, DISCONNECT: empty body

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "edgetel/error.hpp"

namespace edgetel {

enum class FrameKind : std::uint8_t {
  Connect = 1,
  Connack = 2,
  Subscribe = 3,
  Suback = 4,
  Publish = 5,
  PingReq = 6,
  PingResp = 7,
  Disconnect = 8,
};

const char* to_string(FrameKind kind);

inline constexpr std::size_t kMaxTopicBytes = 256;
inline constexpr std::size_t kMaxPayloadBytes = 1u << 20;
inline constexpr std::size_t kMaxClientIdBytes = 128;
inline constexpr std::size_t kFrameHeaderBytes = 5;
inline constexpr std::size_t kMaxBodyBytes = 2 + kMaxTopicBytes + kMaxPayloadBytes;

// CONNACK codes.
inline constexpr std::uint8_t kConnAccepted = 0;
inline constexpr std::uint8_t kConnBadClientId = 1;
inline constexpr std::uint8_t kConnDuplicateClientId = 2;
// SUBACK codes.
inline constexpr std::uint8_t kSubAccepted = 0;
inline constexpr std::uint8_t kSubInvalidFilter = 1;

struct Frame {
  FrameKind kind = FrameKind::PingReq;
  std::string topic;      // PUBLISH topic or SUBSCRIBE filter
  std::string payload;    // PUBLISH only
  std::string client_id;  // CONNECT only
  std::uint8_t code = 0;  // CONNACK / SUBACK only

  bool operator==(const Frame&) const = default;

  static Frame connect(std::string client_id);
  static Frame connack(std::uint8_t code);
  static Frame subscribe(std::string filter);
  static Frame suback(std::uint8_t code);
  static Frame publish(std::string topic, std::string payload);
  static Frame of(FrameKind kind);
};

class FrameError : public Error {
 public:
  using Error::Error;
};

// Topic names: [A-Za-z0-9_/+-]+ with no empty segments. `+` is only legal in
// filters, and only as a whole segment.
bool is_valid_topic(std::string_view topic);
bool is_valid_filter(std::string_view filter);
bool topic_matches(std::string_view filter, std::string_view topic);

// Throws FrameError when the frame violates a size or topic constraint.
std::string encode_frame(const Frame& frame);
// Decodes exactly one frame occupying all of `bytes`.
Frame decode_frame(std::string_view bytes);

// Incremental decoder for a byte stream. A FrameError leaves the decoder
// poisoned; callers drop the connection.
class FrameDecoder {
 public:
  void feed(std::string_view bytes);
  std::optional<Frame> next();
  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
  bool failed_ = false;
};

}  // namespace edgetel
