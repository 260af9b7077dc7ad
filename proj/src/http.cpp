#include "edgetel/http.hpp"

#include <httplib.h>

#include <mutex>
#include <thread>

#include "edgetel/error.hpp"
#include "json_util.hpp"
#include "log.hpp"

namespace edgetel {

using detail::json;

struct HttpEndpoint::Impl {
  Address bind;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  bool started = false;

  std::mutex mu;
  IngestHandler ingest;
  ModelLookup models;
  std::shared_ptr<DelaySampler> delay;

  void apply_delay() {
    std::shared_ptr<DelaySampler> d;
    {
      std::lock_guard lock(mu);
      d = delay;
    }
    if (d) std::this_thread::sleep_for(d->sample());
  }
};

HttpEndpoint::HttpEndpoint(Address bind) : impl_(std::make_unique<Impl>()) {
  impl_->bind = std::move(bind);
  Impl* impl = impl_.get();

  impl->server.Post("/ingest", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->apply_delay();
    IngestHandler handler;
    {
      std::lock_guard lock(impl->mu);
      handler = impl->ingest;
    }
    if (!handler) {
      res.status = 503;
      res.set_content(json{{"error", "ingest backend unavailable"}}.dump(), "application/json");
      return;
    }
    try {
      const IngestAck ack = handler(req.body);
      res.status = 200;
      res.set_content(
          json{{"record_id", ack.record_id}, {"ingest_time_ms", ack.ingest_time_ms}}.dump(),
          "application/json");
    } catch (const SchemaError& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}, {"field", e.field()}}.dump(), "application/json");
    } catch (const ValidationError& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}, {"field", e.field()}}.dump(), "application/json");
    } catch (const ParseError& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}, {"offset", e.offset()}}.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 503;
      res.set_content(json{{"error", e.what()}}.dump(-1, ' ', false, json::error_handler_t::replace),
                      "application/json");
    }
  });

  impl->server.Get(R"(/models/([A-Za-z0-9_.-]+))",
                   [impl](const httplib::Request& req, httplib::Response& res) {
                     impl->apply_delay();
                     ModelLookup lookup;
                     {
                       std::lock_guard lock(impl->mu);
                       lookup = impl->models;
                     }
                     if (!lookup) {
                       res.status = 503;
                       return;
                     }
                     std::optional<ModelBlob> m;
                     try {
                       m = lookup(req.matches[1]);
                     } catch (const std::exception& e) {
                       spdlog::error("model store: {}", e.what());
                       res.status = 503;
                       return;
                     }
                     if (!m) {
                       res.status = 404;
                       res.set_content("not_found", "text/plain");
                       return;
                     }
                     res.status = 200;
                     res.set_header("X-Model-Digest", m->digest);
                     res.set_content(std::move(m->blob), "application/octet-stream");
                   });

  impl->server.Post("/probe", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->apply_delay();
    res.status = 200;
    res.set_content(req.body, "application/octet-stream");
  });
}

HttpEndpoint::~HttpEndpoint() { stop(); }

void HttpEndpoint::set_ingest_handler(IngestHandler handler) {
  std::lock_guard lock(impl_->mu);
  impl_->ingest = std::move(handler);
}

void HttpEndpoint::set_model_lookup(ModelLookup lookup) {
  std::lock_guard lock(impl_->mu);
  impl_->models = std::move(lookup);
}

void HttpEndpoint::set_delay(DelaySpec spec, std::uint64_t seed) {
  std::lock_guard lock(impl_->mu);
  impl_->delay = spec.kind == DelaySpec::Kind::None
                     ? nullptr
                     : std::make_shared<DelaySampler>(spec, seed);
}

void HttpEndpoint::start() {
  if (impl_->started) return;
  const std::string host = impl_->bind.host == "localhost" ? "127.0.0.1" : impl_->bind.host;
  if (impl_->bind.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, impl_->bind.port) ? impl_->bind.port : -1;
  }
  if (impl_->port <= 0) {
    throw NetworkError(NetErrorKind::Bind, "cannot bind " + impl_->bind.to_string());
  }
  impl_->started = true;
  impl_->thread = std::thread([impl = impl_.get()] { impl->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpEndpoint::stop() {
  if (!impl_ || !impl_->started) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->started = false;
}

std::uint16_t HttpEndpoint::port() const { return static_cast<std::uint16_t>(impl_->port); }

Address HttpEndpoint::address() const { return {impl_->bind.host, port()}; }

namespace {

httplib::Client make_client(const Address& server, std::chrono::milliseconds timeout) {
  const std::string host = server.host == "localhost" ? "127.0.0.1" : server.host;
  httplib::Client cli(host, server.port);
  const auto secs = timeout.count() / 1000;
  const auto usecs = (timeout.count() % 1000) * 1000;
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  cli.set_keep_alive(false);
  return cli;
}

[[noreturn]] void throw_transport(const Address& server, httplib::Error err) {
  const std::string what = server.to_string() + ": " + httplib::to_string(err);
  switch (err) {
    case httplib::Error::Connection:
      throw NetworkError(NetErrorKind::Refused, what);
    case httplib::Error::ConnectionTimeout:
    case httplib::Error::Read:
      throw NetworkError(NetErrorKind::Timeout, what);
    default:
      throw NetworkError(NetErrorKind::ConnectionLost, what);
  }
}

}  // namespace

IngestAck http_post_snapshot(const Address& server, const std::string& payload,
                             std::chrono::milliseconds timeout) {
  auto cli = make_client(server, timeout);
  auto res = cli.Post("/ingest", payload, "application/json");
  if (!res) throw_transport(server, res.error());
  if (res->status == 400) throw NetworkError(NetErrorKind::ClientError, res->body);
  if (res->status != 200) {
    throw NetworkError(NetErrorKind::ServerError, std::to_string(res->status) + " " + res->body);
  }
  const json body = detail::parse_json(res->body);
  IngestAck ack;
  ack.record_id = detail::get_u64(body, "", "record_id");
  ack.ingest_time_ms = detail::as_i64(detail::member(body, "", "ingest_time_ms"), "ingest_time_ms");
  return ack;
}

ModelBlob http_fetch_model(const Address& server, const std::string& model_id,
                           std::chrono::milliseconds timeout) {
  auto cli = make_client(server, timeout);
  auto res = cli.Get("/models/" + model_id);
  if (!res) throw_transport(server, res.error());
  if (res->status == 404) throw NetworkError(NetErrorKind::NotFound, "model '" + model_id + "'");
  if (res->status != 200) {
    throw NetworkError(NetErrorKind::ServerError, "model store answered " + std::to_string(res->status));
  }
  return ModelBlob{res->body, res->get_header_value("X-Model-Digest")};
}

std::string http_probe(const Address& server, const std::string& body,
                       std::chrono::milliseconds timeout) {
  auto cli = make_client(server, timeout);
  auto res = cli.Post("/probe", body, "application/octet-stream");
  if (!res) throw_transport(server, res.error());
  if (res->status != 200) {
    throw NetworkError(NetErrorKind::ServerError, "probe answered " + std::to_string(res->status));
  }
  return res->body;
}

}  // namespace edgetel
