#include "edgetel/frame.hpp"

namespace edgetel {

const char* to_string(FrameKind kind) {
  switch (kind) {
    case FrameKind::Connect: return "CONNECT";
    case FrameKind::Connack: return "CONNACK";
    case FrameKind::Subscribe: return "SUBSCRIBE";
    case FrameKind::Suback: return "SUBACK";
    case FrameKind::Publish: return "PUBLISH";
    case FrameKind::PingReq: return "PINGREQ";
    case FrameKind::PingResp: return "PINGRESP";
    case FrameKind::Disconnect: return "DISCONNECT";
  }
  return "UNKNOWN";
}

Frame Frame::connect(std::string client_id) {
  Frame f;
  f.kind = FrameKind::Connect;
  f.client_id = std::move(client_id);
  return f;
}

Frame Frame::connack(std::uint8_t code) {
  Frame f;
  f.kind = FrameKind::Connack;
  f.code = code;
  return f;
}

Frame Frame::subscribe(std::string filter) {
  Frame f;
  f.kind = FrameKind::Subscribe;
  f.topic = std::move(filter);
  return f;
}

Frame Frame::suback(std::uint8_t code) {
  Frame f;
  f.kind = FrameKind::Suback;
  f.code = code;
  return f;
}

Frame Frame::publish(std::string topic, std::string payload) {
  Frame f;
  f.kind = FrameKind::Publish;
  f.topic = std::move(topic);
  f.payload = std::move(payload);
  return f;
}

Frame Frame::of(FrameKind kind) {
  Frame f;
  f.kind = kind;
  return f;
}

namespace {

bool check_topic(std::string_view t, bool allow_wildcard) {
  if (t.empty() || t.size() > kMaxTopicBytes) return false;
  std::size_t seg_start = 0;
  for (std::size_t i = 0; i <= t.size(); ++i) {
    if (i == t.size() || t[i] == '/') {
      const std::string_view seg = t.substr(seg_start, i - seg_start);
      if (seg.empty()) return false;
      if (seg.find('+') != std::string_view::npos && (!allow_wildcard || seg != "+")) return false;
      seg_start = i + 1;
      continue;
    }
    const char c = t[i];
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '+';
    if (!ok) return false;
  }
  return true;
}

void put_u16(std::string& out, std::size_t v) {
  out += static_cast<char>((v >> 8) & 0xff);
  out += static_cast<char>(v & 0xff);
}

void put_u32(std::string& out, std::size_t v) {
  out += static_cast<char>((v >> 24) & 0xff);
  out += static_cast<char>((v >> 16) & 0xff);
  out += static_cast<char>((v >> 8) & 0xff);
  out += static_cast<char>(v & 0xff);
}

std::uint32_t get_u32(std::string_view b) {
  return (std::uint32_t{static_cast<unsigned char>(b[0])} << 24) |
         (std::uint32_t{static_cast<unsigned char>(b[1])} << 16) |
         (std::uint32_t{static_cast<unsigned char>(b[2])} << 8) |
         std::uint32_t{static_cast<unsigned char>(b[3])};
}

std::uint16_t get_u16(std::string_view b) {
  return static_cast<std::uint16_t>((static_cast<unsigned char>(b[0]) << 8) |
                                    static_cast<unsigned char>(b[1]));
}

// Reads a u16-length-prefixed string from the front of `body`.
std::string_view take_prefixed(std::string_view& body, const char* what) {
  if (body.size() < 2) throw FrameError(std::string("truncated ") + what + " length");
  const std::uint16_t len = get_u16(body);
  body.remove_prefix(2);
  if (body.size() < len) throw FrameError(std::string("truncated ") + what);
  std::string_view s = body.substr(0, len);
  body.remove_prefix(len);
  return s;
}

bool is_valid_client_id(std::string_view id) {
  if (id.empty() || id.size() > kMaxClientIdBytes) return false;
  for (char c : id) {
    if (static_cast<unsigned char>(c) < 0x21 || static_cast<unsigned char>(c) > 0x7e) return false;
  }
  return true;
}

Frame decode_body(std::uint8_t kind_byte, std::string_view body) {
  if (kind_byte < 1 || kind_byte > 8) {
    throw FrameError("unknown frame kind " + std::to_string(kind_byte));
  }
  Frame f;
  f.kind = static_cast<FrameKind>(kind_byte);
  switch (f.kind) {
    case FrameKind::Connect: {
      f.client_id = std::string(take_prefixed(body, "client_id"));
      if (!is_valid_client_id(f.client_id)) throw FrameError("invalid client_id");
      break;
    }
    case FrameKind::Connack:
    case FrameKind::Suback: {
      if (body.size() != 1) throw FrameError("ack body must be one byte");
      f.code = static_cast<std::uint8_t>(body[0]);
      body.remove_prefix(1);
      break;
    }
    case FrameKind::Subscribe: {
      f.topic = std::string(take_prefixed(body, "filter"));
      // The broker answers invalid filters with a SUBACK error, so only the
      // length is enforced here.
      if (f.topic.size() > kMaxTopicBytes) throw FrameError("filter too long");
      break;
    }
    case FrameKind::Publish: {
      f.topic = std::string(take_prefixed(body, "topic"));
      if (!is_valid_topic(f.topic)) throw FrameError("invalid topic");
      if (body.size() > kMaxPayloadBytes) throw FrameError("payload too large");
      f.payload = std::string(body);
      body = {};
      break;
    }
    case FrameKind::PingReq:
    case FrameKind::PingResp:
    case FrameKind::Disconnect:
      break;
  }
  if (!body.empty()) throw FrameError(std::string("trailing bytes in ") + to_string(f.kind));
  return f;
}

}  // namespace

bool is_valid_topic(std::string_view topic) { return check_topic(topic, false); }
bool is_valid_filter(std::string_view filter) { return check_topic(filter, true); }

bool topic_matches(std::string_view filter, std::string_view topic) {
  while (true) {
    const auto fs = filter.find('/');
    const auto ts = topic.find('/');
    const std::string_view fseg = filter.substr(0, fs);
    const std::string_view tseg = topic.substr(0, ts);
    if (fseg != "+" && fseg != tseg) return false;
    if (fs == std::string_view::npos || ts == std::string_view::npos) {
      return fs == std::string_view::npos && ts == std::string_view::npos;
    }
    filter.remove_prefix(fs + 1);
    topic.remove_prefix(ts + 1);
  }
}

std::string encode_frame(const Frame& f) {
  std::string body;
  switch (f.kind) {
    case FrameKind::Connect:
      if (!is_valid_client_id(f.client_id)) throw FrameError("invalid client_id");
      put_u16(body, f.client_id.size());
      body += f.client_id;
      break;
    case FrameKind::Connack:
    case FrameKind::Suback:
      body += static_cast<char>(f.code);
      break;
    case FrameKind::Subscribe:
      if (f.topic.size() > kMaxTopicBytes) throw FrameError("filter too long");
      put_u16(body, f.topic.size());
      body += f.topic;
      break;
    case FrameKind::Publish:
      if (!is_valid_topic(f.topic)) throw FrameError("invalid topic '" + f.topic + "'");
      if (f.payload.size() > kMaxPayloadBytes) throw FrameError("payload too large");
      put_u16(body, f.topic.size());
      body += f.topic;
      body += f.payload;
      break;
    case FrameKind::PingReq:
    case FrameKind::PingResp:
    case FrameKind::Disconnect:
      break;
  }
  std::string out;
  out.reserve(kFrameHeaderBytes + body.size());
  out += static_cast<char>(f.kind);
  put_u32(out, body.size());
  out += body;
  return out;
}

Frame decode_frame(std::string_view bytes) {
  if (bytes.size() < kFrameHeaderBytes) throw FrameError("truncated header");
  const std::uint32_t len = get_u32(bytes.substr(1));
  if (len > kMaxBodyBytes) throw FrameError("body too large");
  if (bytes.size() != kFrameHeaderBytes + len) throw FrameError("length mismatch");
  return decode_body(static_cast<std::uint8_t>(bytes[0]), bytes.substr(kFrameHeaderBytes));
}

void FrameDecoder::feed(std::string_view bytes) {
  if (pos_ > 0 && pos_ >= buf_.size() / 2) {
    buf_.erase(0, pos_);
    pos_ = 0;
  }
  buf_.append(bytes);
}

std::optional<Frame> FrameDecoder::next() {
  if (failed_) throw FrameError("decoder failed earlier");
  const std::string_view avail = std::string_view(buf_).substr(pos_);
  if (avail.size() < kFrameHeaderBytes) return std::nullopt;
  const auto kind = static_cast<std::uint8_t>(avail[0]);
  const std::uint32_t len = get_u32(avail.substr(1));
  if (kind < 1 || kind > 8 || len > kMaxBodyBytes) {
    failed_ = true;
    throw FrameError(kind < 1 || kind > 8 ? "unknown frame kind" : "body too large");
  }
  if (avail.size() < kFrameHeaderBytes + len) return std::nullopt;
  try {
    Frame f = decode_body(kind, avail.substr(kFrameHeaderBytes, len));
    pos_ += kFrameHeaderBytes + len;
    return f;
  } catch (const FrameError&) {
    failed_ = true;
    throw;
  }
}

}  // namespace edgetel
