#include "socket.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "edgetel/error.hpp"

namespace edgetel {

Address parse_address(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size()) {
    throw ConfigError("address", "expected host:port, got '" + std::string(text) + "'");
  }
  Address a;
  a.host = std::string(text.substr(0, colon));
  unsigned long port = 0;
  for (char c : text.substr(colon + 1)) {
    if (c < '0' || c > '9') throw ConfigError("address", "bad port in '" + std::string(text) + "'");
    port = port * 10 + static_cast<unsigned long>(c - '0');
    if (port > 65535) throw ConfigError("address", "port out of range");
  }
  a.port = static_cast<std::uint16_t>(port);
  return a;
}

namespace detail {

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

namespace {

sockaddr_in resolve(const Address& addr) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(addr.port);
  const std::string host = addr.host == "localhost" ? "127.0.0.1" : addr.host;
  if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) == 1) return sa;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw NetworkError(NetErrorKind::Refused, "cannot resolve host '" + addr.host + "'");
  }
  sa.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return sa;
}

}  // namespace

Socket connect_tcp(const Address& addr, std::chrono::milliseconds timeout) {
  const sockaddr_in sa = resolve(addr);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw NetworkError(NetErrorKind::Refused, std::strerror(errno));
  const int flags = ::fcntl(s.fd(), F_GETFL, 0);
  ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(s.fd(), reinterpret_cast<const sockaddr*>(&sa), sizeof sa);
  if (rc != 0 && errno != EINPROGRESS) {
    const int err = errno;
    throw NetworkError(err == ECONNREFUSED ? NetErrorKind::Refused : NetErrorKind::ConnectionLost,
                       addr.to_string() + ": " + std::strerror(err));
  }
  if (rc != 0) {
    pollfd p{s.fd(), POLLOUT, 0};
    rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc == 0) throw NetworkError(NetErrorKind::Timeout, "connect to " + addr.to_string());
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (rc < 0 || err != 0) {
      throw NetworkError(err == ECONNREFUSED ? NetErrorKind::Refused : NetErrorKind::ConnectionLost,
                         addr.to_string() + ": " + std::strerror(err ? err : errno));
    }
  }
  ::fcntl(s.fd(), F_SETFL, flags);
  const int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

Socket listen_tcp(const Address& addr, int backlog) {
  sockaddr_in sa{};
  try {
    sa = resolve(addr);
  } catch (const NetworkError& e) {
    throw NetworkError(NetErrorKind::Bind, e.what());
  }
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw NetworkError(NetErrorKind::Bind, std::strerror(errno));
  const int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(s.fd(), reinterpret_cast<const sockaddr*>(&sa), sizeof sa) != 0 ||
      ::listen(s.fd(), backlog) != 0) {
    throw NetworkError(NetErrorKind::Bind, addr.to_string() + ": " + std::strerror(errno));
  }
  return s;
}

std::uint16_t local_port(const Socket& s) {
  sockaddr_in sa{};
  socklen_t len = sizeof sa;
  ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&sa), &len);
  return ntohs(sa.sin_port);
}

bool send_all(const Socket& s, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(s.fd(), data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

long recv_some(const Socket& s, char* buf, std::size_t len, int timeout_ms) {
  if (timeout_ms >= 0) {
    pollfd p{s.fd(), POLLIN, 0};
    int rc;
    do {
      rc = ::poll(&p, 1, timeout_ms);
    } while (rc < 0 && errno == EINTR);
    if (rc == 0) return -2;
    if (rc < 0) return -1;
  }
  while (true) {
    const ssize_t n = ::recv(s.fd(), buf, len, 0);
    if (n < 0 && errno == EINTR) continue;
    return n < 0 ? -1 : static_cast<long>(n);
  }
}

}  // namespace detail
}  // namespace edgetel
