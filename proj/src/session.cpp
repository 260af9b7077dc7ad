#include "edgetel/session.hpp"

#include "edgetel/error.hpp"
#include "edgetel/frame.hpp"
#include "log.hpp"
#include "socket.hpp"

namespace edgetel {

namespace {

// Reads until one complete frame is available or the deadline passes.
Frame read_one_frame(const detail::Socket& sock, FrameDecoder& decoder,
                     std::chrono::steady_clock::time_point deadline, const std::string& what) {
  std::vector<char> buf(4096);
  while (true) {
    if (auto f = decoder.next()) return *f;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw NetworkError(NetErrorKind::Timeout, what);
    const long n = detail::recv_some(sock, buf.data(), buf.size(), static_cast<int>(left.count()));
    if (n == -2) throw NetworkError(NetErrorKind::Timeout, what);
    if (n <= 0) throw NetworkError(NetErrorKind::ConnectionLost, what + ": connection closed");
    decoder.feed(std::string_view(buf.data(), static_cast<std::size_t>(n)));
  }
}

}  // namespace

std::unique_ptr<Session> Session::connect(const Address& broker, const std::string& client_id,
                                          std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  auto sock = std::make_unique<detail::Socket>(detail::connect_tcp(broker, timeout));
  if (!detail::send_all(*sock, encode_frame(Frame::connect(client_id)))) {
    throw NetworkError(NetErrorKind::ConnectionLost, "sending CONNECT");
  }
  FrameDecoder decoder;
  Frame ack;
  try {
    ack = read_one_frame(*sock, decoder, deadline, "waiting for CONNACK from " + broker.to_string());
  } catch (const FrameError& e) {
    throw NetworkError(NetErrorKind::Protocol, e.what());
  }
  if (ack.kind != FrameKind::Connack) {
    throw NetworkError(NetErrorKind::Protocol, "expected CONNACK");
  }
  if (ack.code == kConnDuplicateClientId) {
    throw NetworkError(NetErrorKind::DuplicateClientId, "client id '" + client_id + "' in use");
  }
  if (ack.code != kConnAccepted) {
    throw NetworkError(NetErrorKind::Protocol, "CONNACK code " + std::to_string(ack.code));
  }
  std::unique_ptr<Session> s(new Session(std::move(sock), client_id, timeout));
  // Frames the broker sent right behind the CONNACK would be lost otherwise;
  // none are expected before SUBSCRIBE, so the leftover buffer must be empty.
  if (decoder.buffered() != 0) throw NetworkError(NetErrorKind::Protocol, "unexpected data");
  return s;
}

Session::Session(std::unique_ptr<detail::Socket> sock, std::string client_id,
                 std::chrono::milliseconds timeout)
    : sock_(std::move(sock)), client_id_(std::move(client_id)), timeout_(timeout) {
  receiver_ = std::thread([this] { receive_loop(); });
}

Session::~Session() {
  disconnect();
  if (receiver_.joinable()) receiver_.join();
}

void Session::on_disconnect(std::function<void()> cb) {
  std::lock_guard lock(mu_);
  on_disconnect_ = std::move(cb);
}

bool Session::send_raw(const std::string& wire) {
  std::lock_guard lock(write_mu_);
  if (!alive_.load()) return false;
  if (!detail::send_all(*sock_, wire)) {
    sock_->shutdown();
    return false;
  }
  return true;
}

void Session::publish(const std::string& topic, const std::string& payload) {
  if (!is_valid_topic(topic)) throw ValidationError("topic", "invalid topic '" + topic + "'");
  if (payload.size() > kMaxPayloadBytes) throw ValidationError("payload", "exceeds 1 MiB");
  if (!alive_.load() || !send_raw(encode_frame(Frame::publish(topic, payload)))) {
    throw NetworkError(NetErrorKind::ConnectionLost, "publish on dead session " + client_id_);
  }
}

std::uint8_t Session::wait_ack(std::deque<std::uint8_t>& q, const char* what) {
  std::unique_lock lock(mu_);
  const bool got = cv_.wait_for(lock, timeout_, [&] { return !q.empty() || !alive_.load(); });
  if (!q.empty()) {
    const std::uint8_t code = q.front();
    q.pop_front();
    return code;
  }
  if (!got) throw NetworkError(NetErrorKind::Timeout, std::string("waiting for ") + what);
  throw NetworkError(NetErrorKind::ConnectionLost, std::string("waiting for ") + what);
}

void Session::subscribe(const std::string& filter, MessageHandler handler) {
  if (!is_valid_filter(filter)) throw ValidationError("filter", "invalid filter '" + filter + "'");
  std::lock_guard one_at_a_time(subscribe_mu_);
  auto h = std::make_shared<MessageHandler>(std::move(handler));
  {
    std::lock_guard lock(mu_);
    subs_.push_back({filter, h});
  }
  auto unregister = [&] {
    std::lock_guard lock(mu_);
    std::erase_if(subs_, [&](const Subscription& s) { return s.handler == h; });
  };
  if (!send_raw(encode_frame(Frame::subscribe(filter)))) {
    unregister();
    throw NetworkError(NetErrorKind::ConnectionLost, "subscribe on dead session " + client_id_);
  }
  std::uint8_t code;
  try {
    code = wait_ack(subacks_, "SUBACK");
  } catch (...) {
    unregister();
    throw;
  }
  if (code != kSubAccepted) {
    unregister();
    throw ValidationError("filter", "broker rejected filter '" + filter + "'");
  }
}

void Session::ping() {
  if (!send_raw(encode_frame(Frame::of(FrameKind::PingReq)))) {
    throw NetworkError(NetErrorKind::ConnectionLost, "ping on dead session " + client_id_);
  }
  wait_ack(pongs_, "PINGRESP");
}

void Session::disconnect() {
  if (closing_.exchange(true)) return;
  if (alive_.load()) send_raw(encode_frame(Frame::of(FrameKind::Disconnect)));
  sock_->shutdown();
}

void Session::mark_dead() {
  std::function<void()> cb;
  {
    std::lock_guard lock(mu_);
    alive_ = false;
    cb = on_disconnect_;
  }
  cv_.notify_all();
  if (cb) cb();
}

void Session::receive_loop() {
  FrameDecoder decoder;
  std::vector<char> buf(64 * 1024);
  std::vector<std::shared_ptr<MessageHandler>> targets;
  while (true) {
    const long n = detail::recv_some(*sock_, buf.data(), buf.size());
    if (n <= 0) break;
    decoder.feed(std::string_view(buf.data(), static_cast<std::size_t>(n)));
    try {
      while (auto f = decoder.next()) {
        switch (f->kind) {
          case FrameKind::Publish: {
            targets.clear();
            {
              std::lock_guard lock(mu_);
              for (const auto& s : subs_) {
                if (topic_matches(s.filter, f->topic)) targets.push_back(s.handler);
              }
            }
            for (const auto& h : targets) {
              try {
                (*h)(f->topic, f->payload);
              } catch (const std::exception& e) {
                spdlog::error("session {}: handler threw: {}", client_id_, e.what());
              }
            }
            break;
          }
          case FrameKind::Suback: {
            std::lock_guard lock(mu_);
            subacks_.push_back(f->code);
            cv_.notify_all();
            break;
          }
          case FrameKind::PingResp: {
            std::lock_guard lock(mu_);
            pongs_.push_back(0);
            cv_.notify_all();
            break;
          }
          default:
            spdlog::warn("session {}: unexpected {}", client_id_, to_string(f->kind));
            break;
        }
      }
    } catch (const FrameError& e) {
      spdlog::warn("session {}: protocol error: {}", client_id_, e.what());
      break;
    }
  }
  sock_->shutdown();
  mark_dead();
}

}  // namespace edgetel
