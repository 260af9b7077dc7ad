#pragma once

// Request/response transport: snapshot ingest at POST /ingest, model
// downloads at GET /models/<model_id>, and a POST /probe echo for latency
// measurements. One request per message, no pipelining.

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "edgetel/latency.hpp"
#include "edgetel/net.hpp"

namespace edgetel {

struct IngestAck {
  std::uint64_t record_id = 0;
  std::int64_t ingest_time_ms = 0;
};

struct ModelBlob {
  std::string blob;
  std::string digest;  // as claimed by the server; callers verify
};

// Handler errors: ParseError, SchemaError and ValidationError answer 400;
// any other exception answers 503.
using IngestHandler = std::function<IngestAck(const std::string& body)>;
using ModelLookup = std::function<std::optional<ModelBlob>(const std::string& model_id)>;

class HttpEndpoint {
 public:
  explicit HttpEndpoint(Address bind);
  ~HttpEndpoint();
  HttpEndpoint(const HttpEndpoint&) = delete;
  HttpEndpoint& operator=(const HttpEndpoint&) = delete;

  // An empty handler makes /ingest answer 503 (backend down).
  void set_ingest_handler(IngestHandler handler);
  void set_model_lookup(ModelLookup lookup);
  // Extra per-request delay on every route.
  void set_delay(DelaySpec spec, std::uint64_t seed = 7);

  // Throws NetworkError(Bind).
  void start();
  void stop();
  std::uint16_t port() const;
  Address address() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Throws NetworkError: ClientError (400), ServerError (5xx), Refused, Timeout.
IngestAck http_post_snapshot(const Address& server, const std::string& payload,
                             std::chrono::milliseconds timeout = std::chrono::seconds(5));

// Throws NetworkError: NotFound, ServerError, Refused, Timeout.
ModelBlob http_fetch_model(const Address& server, const std::string& model_id,
                           std::chrono::milliseconds timeout = std::chrono::seconds(5));

// One POST /probe round trip; returns the echoed body.
std::string http_probe(const Address& server, const std::string& body,
                       std::chrono::milliseconds timeout);

}  // namespace edgetel
