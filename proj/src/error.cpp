#include "edgetel/error.hpp"

namespace edgetel {

const char* to_string(NetErrorKind kind) {
  switch (kind) {
    case NetErrorKind::Timeout: return "timeout";
    case NetErrorKind::Refused: return "connection refused";
    case NetErrorKind::DuplicateClientId: return "duplicate client id";
    case NetErrorKind::ConnectionLost: return "connection lost";
    case NetErrorKind::Bind: return "bind failed";
    case NetErrorKind::Protocol: return "protocol error";
    case NetErrorKind::NotFound: return "not found";
    case NetErrorKind::ServerError: return "server error";
    case NetErrorKind::ClientError: return "rejected by server";
  }
  return "network error";
}

}  // namespace edgetel
