#include "edgetel/latency.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <numeric>
#include <random>
#include <thread>

#include "edgetel/http.hpp"
#include "edgetel/session.hpp"
#include "edgetel/telemetry.hpp"
#include "log.hpp"

namespace edgetel {

LatencyStats compute_latency_stats(std::span<const double> samples) {
  if (samples.empty()) throw PreconditionError("latency stats need at least one sample");
  LatencyStats s;
  s.n = samples.size();
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  s.min_ms = *lo;
  s.max_ms = *hi;
  const double sum = std::accumulate(samples.begin(), samples.end(), 0.0);
  s.mean_ms = sum / static_cast<double>(s.n);
  // Two-pass variance; the mean can drift outside [min, max] by one ulp.
  s.mean_ms = std::clamp(s.mean_ms, s.min_ms, s.max_ms);
  if (s.n > 1 && s.min_ms != s.max_ms) {
    double ss = 0.0;
    for (double x : samples) ss += (x - s.mean_ms) * (x - s.mean_ms);
    s.stddev_ms = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

namespace {

double parse_number(std::string_view text, std::string_view whole) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError("delay", "bad number in '" + std::string(whole) + "'");
  }
  return v;
}

}  // namespace

DelaySpec DelaySpec::parse(std::string_view text) {
  DelaySpec d;
  if (text.empty() || text == "none") return d;
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw ConfigError("delay", "expected kind:args, got '" + std::string(text) + "'");
  }
  const std::string_view kind = text.substr(0, colon);
  const std::string_view args = text.substr(colon + 1);
  const auto comma = args.find(',');
  if (kind == "const") {
    d.kind = Kind::Constant;
    d.a = parse_number(args, text);
  } else if (kind == "normal" || kind == "uniform") {
    if (comma == std::string_view::npos) {
      throw ConfigError("delay", "expected two parameters in '" + std::string(text) + "'");
    }
    d.kind = kind == "normal" ? Kind::Normal : Kind::Uniform;
    d.a = parse_number(args.substr(0, comma), text);
    d.b = parse_number(args.substr(comma + 1), text);
    if (d.kind == Kind::Normal && d.b < 0) throw ConfigError("delay", "negative std");
    if (d.kind == Kind::Uniform && d.b < d.a) throw ConfigError("delay", "uniform hi < lo");
  } else {
    throw ConfigError("delay", "unknown distribution '" + std::string(kind) + "'");
  }
  if (d.a < 0) throw ConfigError("delay", "negative delay");
  return d;
}

std::string DelaySpec::to_string() const {
  switch (kind) {
    case Kind::None: return "none";
    case Kind::Constant: return "const:" + format_double(a);
    case Kind::Normal: return "normal:" + format_double(a) + "," + format_double(b);
    case Kind::Uniform: return "uniform:" + format_double(a) + "," + format_double(b);
  }
  return "none";
}

DelaySampler::DelaySampler(DelaySpec spec, std::uint64_t seed) : spec_(spec), rng_(seed) {}

std::chrono::microseconds DelaySampler::sample() {
  double ms = 0.0;
  {
    std::lock_guard lock(mu_);
    switch (spec_.kind) {
      case DelaySpec::Kind::None: break;
      case DelaySpec::Kind::Constant: ms = spec_.a; break;
      case DelaySpec::Kind::Normal: ms = std::normal_distribution<double>(spec_.a, spec_.b)(rng_); break;
      case DelaySpec::Kind::Uniform:
        ms = std::uniform_real_distribution<double>(spec_.a, spec_.b)(rng_);
        break;
    }
  }
  return std::chrono::microseconds(static_cast<std::int64_t>(std::max(ms, 0.0) * 1000.0));
}

const char* to_string(Transport t) { return t == Transport::PubSub ? "pubsub" : "http"; }

Transport transport_from_string(std::string_view s) {
  if (s == "pubsub" || s == "mqtt") return Transport::PubSub;
  if (s == "http") return Transport::Http;
  throw ConfigError("transport", "expected pubsub or http, got '" + std::string(s) + "'");
}

std::string stats_csv_header() { return "transport,n,payload,mean_ms,min_ms,max_ms,std_ms"; }

std::string stats_csv_row(Transport t, std::size_t payload_bytes, const LatencyStats& s) {
  return std::string(to_string(t)) + "," + std::to_string(s.n) + "," +
         std::to_string(payload_bytes) + "," + format_double(s.mean_ms) + "," +
         format_double(s.min_ms) + "," + format_double(s.max_ms) + "," +
         format_double(s.stddev_ms);
}

namespace {

std::string random_suffix() {
  std::random_device rd;
  const std::uint64_t v = (std::uint64_t{rd()} << 32) | rd();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string probe_body(std::uint64_t index, std::size_t payload_bytes) {
  std::string body = std::to_string(index) + ":";
  if (body.size() < payload_bytes) body.resize(payload_bytes, 'x');
  return body;
}

std::uint64_t probe_index(std::string_view body) {
  std::uint64_t v = 0;
  std::from_chars(body.data(), body.data() + body.size(), v);
  return v;
}

}  // namespace

ProbeResult latency_probe(const Address& target, const ProbeOptions& opts) {
  if (opts.n == 0) throw PreconditionError("probe: n must be positive");
  if (opts.payload_bytes == 0) throw PreconditionError("probe: payload_bytes must be positive");
  using clock = std::chrono::steady_clock;
  std::vector<ProbeStatus> statuses(opts.n, ProbeStatus::Ok);
  ProbeResult result;
  result.samples_ms.reserve(opts.n);

  if (opts.transport == Transport::PubSub) {
    const std::string cid = "probe-" + random_suffix();
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::uint64_t> acked;
    auto session = Session::connect(target, cid, opts.timeout);
    session->subscribe("probe/" + cid + "/ack", [&](const std::string&, const std::string& body) {
      std::lock_guard lock(mu);
      acked.push_back(probe_index(body));
      cv.notify_all();
    });
    const std::string req_topic = "probe/" + cid + "/req";
    for (std::uint64_t i = 0; i < opts.n; ++i) {
      const std::string body = probe_body(i, opts.payload_bytes);
      const auto t0 = clock::now();
      try {
        session->publish(req_topic, body);
      } catch (const NetworkError&) {
        statuses[i] = ProbeStatus::Failed;
        continue;
      }
      std::unique_lock lock(mu);
      const bool got = cv.wait_until(lock, t0 + opts.timeout, [&] {
        while (!acked.empty() && acked.front() < i) acked.pop_front();  // late, already timed out
        return !acked.empty() && acked.front() == i;
      });
      if (!got) {
        statuses[i] = ProbeStatus::Timeout;
        continue;
      }
      acked.pop_front();
      result.samples_ms.push_back(
          std::chrono::duration<double, std::milli>(clock::now() - t0).count());
    }
    session->disconnect();
  } else {
    for (std::uint64_t i = 0; i < opts.n; ++i) {
      const std::string body = probe_body(i, opts.payload_bytes);
      const auto t0 = clock::now();
      try {
        const std::string echo = http_probe(target, body, opts.timeout);
        if (probe_index(echo) != i) {
          statuses[i] = ProbeStatus::Failed;
          continue;
        }
      } catch (const NetworkError& e) {
        statuses[i] = e.kind() == NetErrorKind::Timeout ? ProbeStatus::Timeout : ProbeStatus::Failed;
        continue;
      }
      result.samples_ms.push_back(
          std::chrono::duration<double, std::milli>(clock::now() - t0).count());
    }
  }

  const auto bad = std::count_if(statuses.begin(), statuses.end(),
                                 [](ProbeStatus s) { return s != ProbeStatus::Ok; });
  if (bad > 0) {
    throw ProbeError(std::move(statuses), std::to_string(bad) + " of " + std::to_string(opts.n) +
                                              " probe messages failed or timed out");
  }
  result.stats = compute_latency_stats(result.samples_ms);
  return result;
}

struct ProbeResponder::Impl {
  std::unique_ptr<Session> session;
  DelaySampler delay;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::pair<std::string, std::string>> pending;
  bool stopping = false;
  std::thread worker;

  Impl(DelaySpec spec, std::uint64_t seed) : delay(spec, seed) {}

  void run() {
    while (true) {
      std::pair<std::string, std::string> msg;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return stopping || !pending.empty(); });
        if (stopping) return;
        msg = std::move(pending.front());
        pending.pop_front();
      }
      std::this_thread::sleep_for(delay.sample());
      std::string topic = msg.first;
      topic.replace(topic.size() - 3, 3, "ack");
      try {
        session->publish(topic, msg.second);
      } catch (const std::exception& e) {
        spdlog::warn("probe responder: {}", e.what());
      }
    }
  }
};

ProbeResponder::ProbeResponder(const Address& broker, DelaySpec delay, std::uint64_t seed)
    : impl_(std::make_unique<Impl>(delay, seed)) {
  impl_->session = Session::connect(broker, "probe-responder-" + random_suffix());
  Impl* impl = impl_.get();
  impl_->session->subscribe("probe/+/req", [impl](const std::string& topic, const std::string& body) {
    std::lock_guard lock(impl->mu);
    impl->pending.emplace_back(topic, body);
    impl->cv.notify_one();
  });
  impl_->worker = std::thread([impl] { impl->run(); });
}

ProbeResponder::~ProbeResponder() {
  {
    std::lock_guard lock(impl_->mu);
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
  if (impl_->worker.joinable()) impl_->worker.join();
  impl_->session->disconnect();
}

}  // namespace edgetel
