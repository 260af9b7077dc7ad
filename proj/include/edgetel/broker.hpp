#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>

#include "edgetel/net.hpp"

namespace edgetel {

namespace detail {
struct BrokerConnection;
}

// Topic pub/sub broker, QoS 0. Filters match exactly or with `+` standing in
// for one segment. Messages from one connection are fanned out in arrival
// order.
class Broker {
 public:
  // Throws NetworkError(Bind). Port 0 picks a free port.
  static std::unique_ptr<Broker> serve(const Address& bind);
  ~Broker();
  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;

  std::uint16_t port() const { return port_; }
  Address address() const { return {host_, port_}; }
  // Closes the listener and every client connection. Idempotent.
  void stop();
  bool running() const { return running_.load(); }

  std::uint64_t routed() const { return routed_.load(); }
  std::uint64_t dropped_no_subscriber() const { return dropped_.load(); }
  std::size_t connection_count() const;

 private:
  Broker() = default;
  void accept_loop();
  void serve_connection(const std::shared_ptr<detail::BrokerConnection>& conn);
  void route(const std::string& topic, const std::string& wire);
  void reap_finished();

  std::string host_;
  std::uint16_t port_ = 0;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread acceptor_;

  mutable std::shared_mutex routes_mu_;
  std::list<std::shared_ptr<detail::BrokerConnection>> conns_;
  std::map<std::string, detail::BrokerConnection*> by_client_id_;

  std::atomic<std::uint64_t> routed_{0};
  std::atomic<std::uint64_t> dropped_{0};
};

}  // namespace edgetel
