#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace edgetel {

struct Address {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string to_string() const { return host + ":" + std::to_string(port); }
  bool operator==(const Address&) const = default;
};

// "host:port"; throws ConfigError on anything else.
Address parse_address(std::string_view text);

}  // namespace edgetel
