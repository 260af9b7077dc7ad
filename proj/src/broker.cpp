#include "edgetel/broker.hpp"

#include <poll.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <vector>

#include "edgetel/frame.hpp"
#include "log.hpp"
#include "socket.hpp"

namespace edgetel {

namespace detail {

struct BrokerConnection {
  Socket sock;
  std::mutex write_mu;
  std::string client_id;  // empty until CONNECT is accepted
  std::vector<std::string> filters;
  std::thread thread;
  std::atomic<bool> finished{false};

  bool send(const std::string& wire) {
    std::lock_guard lock(write_mu);
    return send_all(sock, wire);
  }
};

}  // namespace detail

using detail::BrokerConnection;

std::unique_ptr<Broker> Broker::serve(const Address& bind) {
  std::unique_ptr<Broker> b(new Broker());
  detail::Socket listener = detail::listen_tcp(bind);
  b->host_ = bind.host;
  b->port_ = detail::local_port(listener);
  b->listen_fd_ = listener.release();
  b->running_ = true;
  b->acceptor_ = std::thread([raw = b.get()] { raw->accept_loop(); });
  return b;
}

Broker::~Broker() { stop(); }

std::size_t Broker::connection_count() const {
  std::shared_lock lock(routes_mu_);
  return by_client_id_.size();
}

void Broker::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  std::list<std::shared_ptr<BrokerConnection>> conns;
  {
    std::unique_lock lock(routes_mu_);
    conns = conns_;
  }
  for (auto& c : conns) c->sock.shutdown();
  for (auto& c : conns) {
    if (c->thread.joinable()) c->thread.join();
  }
  std::unique_lock lock(routes_mu_);
  conns_.clear();
  by_client_id_.clear();
}

void Broker::accept_loop() {
  while (running_.load()) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, 50);
    reap_finished();
    if (rc <= 0 || !(p.revents & POLLIN)) continue;
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    timeval tv{5, 0};
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    auto conn = std::make_shared<BrokerConnection>();
    conn->sock = detail::Socket(fd);
    std::unique_lock lock(routes_mu_);
    if (!running_.load()) break;  // stop() already snapshotted the connection list
    conns_.push_back(conn);
    conn->thread = std::thread([this, conn] { serve_connection(conn); });
  }
}

void Broker::reap_finished() {
  std::vector<std::shared_ptr<BrokerConnection>> done;
  {
    std::unique_lock lock(routes_mu_);
    for (auto it = conns_.begin(); it != conns_.end();) {
      if ((*it)->finished.load()) {
        done.push_back(*it);
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& c : done) {
    if (c->thread.joinable()) c->thread.join();
  }
}

void Broker::serve_connection(const std::shared_ptr<BrokerConnection>& conn) {
  FrameDecoder decoder;
  std::vector<char> buf(64 * 1024);
  bool connected = false;
  bool done = false;
  while (!done && running_.load()) {
    const long n = detail::recv_some(conn->sock, buf.data(), buf.size(), connected ? -1 : 10000);
    if (n <= 0) break;
    decoder.feed(std::string_view(buf.data(), static_cast<std::size_t>(n)));
    try {
      while (auto frame = decoder.next()) {
        if (!connected) {
          if (frame->kind != FrameKind::Connect) {
            done = true;
            break;
          }
          std::unique_lock lock(routes_mu_);
          if (by_client_id_.count(frame->client_id)) {
            lock.unlock();
            conn->send(encode_frame(Frame::connack(kConnDuplicateClientId)));
            done = true;
            break;
          }
          conn->client_id = frame->client_id;
          by_client_id_[conn->client_id] = conn.get();
          lock.unlock();
          connected = true;
          conn->send(encode_frame(Frame::connack(kConnAccepted)));
          continue;
        }
        switch (frame->kind) {
          case FrameKind::Subscribe: {
            const bool ok = is_valid_filter(frame->topic);
            if (ok) {
              std::unique_lock lock(routes_mu_);
              conn->filters.push_back(frame->topic);
            }
            conn->send(encode_frame(Frame::suback(ok ? kSubAccepted : kSubInvalidFilter)));
            break;
          }
          case FrameKind::Publish:
            route(frame->topic, encode_frame(*frame));
            break;
          case FrameKind::PingReq:
            conn->send(encode_frame(Frame::of(FrameKind::PingResp)));
            break;
          case FrameKind::Disconnect:
            done = true;
            break;
          default:
            spdlog::warn("broker: unexpected {} from {}", to_string(frame->kind), conn->client_id);
            done = true;
            break;
        }
        if (done) break;
      }
    } catch (const FrameError& e) {
      spdlog::warn("broker: dropping {}: {}", conn->client_id, e.what());
      break;
    }
  }
  {
    std::unique_lock lock(routes_mu_);
    auto it = by_client_id_.find(conn->client_id);
    if (it != by_client_id_.end() && it->second == conn.get()) by_client_id_.erase(it);
    conn->filters.clear();
  }
  conn->sock.shutdown();
  conn->finished = true;
}

void Broker::route(const std::string& topic, const std::string& wire) {
  std::shared_lock lock(routes_mu_);
  std::uint64_t delivered = 0;
  for (const auto& c : conns_) {
    bool match = false;
    for (const auto& f : c->filters) {
      if (topic_matches(f, topic)) {
        match = true;
        break;
      }
    }
    if (!match) continue;
    if (c->send(wire)) {
      ++delivered;
    } else {
      c->sock.shutdown();
    }
  }
  if (delivered == 0) {
    dropped_.fetch_add(1);
  } else {
    routed_.fetch_add(delivered);
  }
}

}  // namespace edgetel
