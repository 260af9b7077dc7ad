#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "edgetel/net.hpp"

namespace edgetel {

namespace detail {
class Socket;
}

using MessageHandler = std::function<void(const std::string& topic, const std::string& payload)>;

// Client side of the pub/sub protocol. Handlers run on the session's receive
// thread and must not block.
class Session {
 public:
  static constexpr std::chrono::milliseconds kDefaultTimeout{5000};

  // Throws NetworkError: Timeout, Refused, DuplicateClientId.
  static std::unique_ptr<Session> connect(const Address& broker, const std::string& client_id,
                                          std::chrono::milliseconds timeout = kDefaultTimeout);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& client_id() const { return client_id_; }
  bool alive() const { return alive_.load(); }

  // Fire-and-forget. Throws ValidationError on a bad topic and
  // NetworkError(ConnectionLost) on a dead session.
  void publish(const std::string& topic, const std::string& payload);
  // Blocks for the SUBACK. Throws ValidationError on an invalid filter.
  void subscribe(const std::string& filter, MessageHandler handler);
  // Round trip to the broker.
  void ping();
  // Sends DISCONNECT and closes. Idempotent.
  void disconnect();

  // Invoked once on the receive thread when the connection drops.
  void on_disconnect(std::function<void()> cb);

 private:
  explicit Session(std::unique_ptr<detail::Socket> sock, std::string client_id,
                   std::chrono::milliseconds timeout);
  void receive_loop();
  void mark_dead();
  bool send_raw(const std::string& wire);
  std::uint8_t wait_ack(std::deque<std::uint8_t>& q, const char* what);

  std::unique_ptr<detail::Socket> sock_;
  std::string client_id_;
  std::chrono::milliseconds timeout_;
  std::atomic<bool> alive_{true};
  std::atomic<bool> closing_{false};
  std::mutex write_mu_;
  std::mutex subscribe_mu_;  // one SUBSCRIBE in flight at a time

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::uint8_t> subacks_;
  std::deque<std::uint8_t> pongs_;
  struct Subscription {
    std::string filter;
    std::shared_ptr<MessageHandler> handler;
  };
  std::vector<Subscription> subs_;
  std::function<void()> on_disconnect_;

  std::thread receiver_;
};

}  // namespace edgetel
