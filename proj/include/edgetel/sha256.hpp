#pragma once

#include <span>
#include <string>
#include <string_view>

namespace edgetel {

// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

bool is_sha256_hex(std::string_view s);

}  // namespace edgetel
