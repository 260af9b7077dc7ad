#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "edgetel/error.hpp"
#include "edgetel/net.hpp"

namespace edgetel {

struct LatencyStats {
  double mean_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  double stddev_ms = 0.0;  // sample estimator (n - 1 divisor); 0 when n == 1
  std::uint64_t n = 0;
};

// Throws PreconditionError on an empty sample set.
LatencyStats compute_latency_stats(std::span<const double> samples_ms);

// Per-message delay distribution for the server-side shim.
//   "none" | "const:<ms>" | "normal:<mean>,<std>" | "uniform:<lo>,<hi>"
struct DelaySpec {
  enum class Kind { None, Constant, Normal, Uniform } kind = Kind::None;
  double a = 0.0;
  double b = 0.0;

  static DelaySpec parse(std::string_view text);
  std::string to_string() const;
  bool operator==(const DelaySpec&) const = default;
};

// Thread-safe seeded sampler; negative draws clamp to 0.
class DelaySampler {
 public:
  explicit DelaySampler(DelaySpec spec = {}, std::uint64_t seed = 7);
  std::chrono::microseconds sample();
  const DelaySpec& spec() const { return spec_; }

 private:
  DelaySpec spec_;
  std::mutex mu_;
  std::mt19937_64 rng_;
};

enum class Transport { PubSub, Http };

const char* to_string(Transport t);
Transport transport_from_string(std::string_view s);

struct ProbeOptions {
  Transport transport = Transport::PubSub;
  std::uint64_t n = 100;
  std::size_t payload_bytes = 256;
  std::chrono::milliseconds timeout{5000};
};

enum class ProbeStatus { Ok, Timeout, Failed };

class ProbeError : public Error {
 public:
  ProbeError(std::vector<ProbeStatus> statuses, const std::string& what)
      : Error(what), statuses_(std::move(statuses)) {}
  const std::vector<ProbeStatus>& statuses() const { return statuses_; }

 private:
  std::vector<ProbeStatus> statuses_;
};

struct ProbeResult {
  LatencyStats stats;
  std::vector<double> samples_ms;
};

// Sends `n` sequenced messages one at a time to `target` and times each
// send-to-ack round trip. For PubSub the target is a broker with a
// ProbeResponder attached; for Http it is an HttpEndpoint. Throws ProbeError
// with per-index status if any message times out.
ProbeResult latency_probe(const Address& target, const ProbeOptions& opts);

// CSV row: transport,n,payload,mean_ms,min_ms,max_ms,std_ms
std::string stats_csv_header();
std::string stats_csv_row(Transport t, std::size_t payload_bytes, const LatencyStats& s);

class Session;

// Echoes probe messages arriving on `probe/+/req` back to `probe/<id>/ack`
// after the shim delay. Delays run on a worker thread, not the receive thread.
class ProbeResponder {
 public:
  ProbeResponder(const Address& broker, DelaySpec delay, std::uint64_t seed = 7);
  ~ProbeResponder();
  ProbeResponder(const ProbeResponder&) = delete;
  ProbeResponder& operator=(const ProbeResponder&) = delete;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace edgetel
