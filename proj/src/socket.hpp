#pragma once

// Thin RAII layer over POSIX TCP sockets. Internal to the library.

#include <chrono>
#include <cstddef>
#include <string>
#include <string_view>

#include "edgetel/net.hpp"

namespace edgetel::detail {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close(); }
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept {
    if (this != &other) {
      close();
      fd_ = other.release();
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release() {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void close();
  // Unblocks readers in other threads without releasing the descriptor.
  void shutdown();

 private:
  int fd_ = -1;
};

// Throws NetworkError (Refused / Timeout).
Socket connect_tcp(const Address& addr, std::chrono::milliseconds timeout);
// Throws NetworkError(Bind).
Socket listen_tcp(const Address& addr, int backlog = 64);
std::uint16_t local_port(const Socket& s);

// False when the peer is gone.
bool send_all(const Socket& s, std::string_view data);
// Returns bytes read, 0 on orderly close, -1 on error, -2 on timeout.
long recv_some(const Socket& s, char* buf, std::size_t len, int timeout_ms = -1);

}  // namespace edgetel::detail
