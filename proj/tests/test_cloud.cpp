#include <gtest/gtest.h>

#include <mutex>

#include "edgetel/broker.hpp"
#include "edgetel/cloud.hpp"
#include "edgetel/model_store.hpp"
#include "edgetel/platform.hpp"
#include "edgetel/session.hpp"
#include "edgetel/sha256.hpp"
#include "support.hpp"

using namespace edgetel;
using testsupport::eventually;
using testsupport::TempDir;

namespace {

constexpr std::int64_t kStart = 1767225600000;

class SnapshotSource {
 public:
  explicit SnapshotSource(const std::string& device, const std::string& model = "yolov3")
      : platform_(init_platform(PlatformConfig{}, builtin_profile(model), {device, PlatformKind::SimulatedDPU})) {}
  TelemetrySnapshot next(double dl_mbps = 20.0) {
    platform_.advance(1000);
    NetworkMetrics net{-70, -10, -90, 38, dl_mbps, dl_mbps / 4};
    return platform_.sample_metrics(net);
  }
  std::string next_payload(double dl_mbps = 20.0) { return encode_snapshot(next(dl_mbps)); }
  Platform& platform() { return platform_; }

 private:
  Platform platform_;
};

RuleSet fps_rules() {
  RuleSet rs = default_rule_set();
  rs.placement.reset();
  std::erase_if(rs.rules, [](const Rule& r) { return r.rule_id != "R1"; });
  return rs;
}

struct ActionSink {
  std::mutex mu;
  std::vector<ActionMessage> got;
  std::unique_ptr<Session> session;

  ActionSink(const Address& broker, const std::string& device) {
    session = Session::connect(broker, "sink-" + device);
    session->subscribe("actions/" + device, [this](const std::string&, const std::string& p) {
      std::lock_guard lock(mu);
      got.push_back(decode_action(p));
    });
  }
  std::size_t size() {
    std::lock_guard lock(mu);
    return got.size();
  }
};

}  // namespace

TEST(Cloud, HttpIngestPersistsWithLogicalTime) {
  TempDir dir;
  LogicalClock clock(kStart);
  CloudConfig cfg;
  cfg.lake_dir = dir / "lake";
  Cloud cloud(cfg, clock);
  SnapshotSource src("dev1");
  auto handler = cloud.http_handler();
  const IngestAck a = handler(src.next_payload());
  clock.advance(1000);
  const IngestAck b = handler(src.next_payload());
  EXPECT_EQ(a.record_id, 0u);
  EXPECT_EQ(b.record_id, 1u);
  EXPECT_EQ(a.ingest_time_ms, kStart);
  EXPECT_EQ(b.ingest_time_ms, kStart + 1000);
  // A clock stepping backwards never reorders a device's records.
  clock.set(kStart);
  EXPECT_EQ(handler(src.next_payload()).ingest_time_ms, kStart + 1000);
  const CloudStats s = cloud.stats();
  EXPECT_EQ(s.ingested, 3u);
  EXPECT_EQ(s.http_processed, 3u);
  const auto q = query_lake(cfg.lake_dir, "dev1", kStart, kStart + 2000);
  ASSERT_EQ(q.records.size(), 3u);
  EXPECT_EQ(q.records[0].transport, Transport::Http);
}

TEST(Cloud, InvalidPayloadsAreDeadLettered) {
  TempDir dir;
  LogicalClock clock(kStart);
  CloudConfig cfg;
  cfg.lake_dir = dir.path();
  Cloud cloud(cfg, clock);
  EXPECT_THROW(cloud.ingest("{not json", Transport::Http), ParseError);
  EXPECT_THROW(cloud.ingest("{}", Transport::Http), SchemaError);
  SnapshotSource src("dev1");
  auto bad = nlohmann::json::parse(src.next_payload());
  bad["app"]["fps"] = bad["app"]["fps"].get<double>() * 2;  // incoherent with latency
  EXPECT_THROW(cloud.ingest(bad.dump(), Transport::PubSub), ValidationError);
  auto handler = cloud.http_handler();
  EXPECT_THROW(handler("[]"), Error);
  const CloudStats s = cloud.stats();
  EXPECT_EQ(s.dead_letters, 4u);
  EXPECT_EQ(s.ingested, 0u);
  EXPECT_EQ(s.http_processed, 1u);
  EXPECT_EQ(cloud.lake().dead_letter_count(), 4u);
  EXPECT_EQ(cloud.lake().next_record_id(), 0u);
}

TEST(Cloud, RuleFiresAndActionReachesDevice) {
  TempDir dir;
  LogicalClock clock(kStart);
  auto broker = Broker::serve({"127.0.0.1", 0});
  CloudConfig cfg;
  cfg.lake_dir = dir.path();
  cfg.rules = fps_rules();
  Cloud cloud(cfg, clock);
  cloud.connect_bus(broker->address());
  ActionSink sink(broker->address(), "dev1");
  auto pub = Session::connect(broker->address(), "agent-dev1");
  SnapshotSource src("dev1");
  for (int i = 0; i < 8; ++i) {
    clock.advance(1000);
    pub->publish("telemetry/dev1", src.next_payload());
    ASSERT_TRUE(eventually([&] { return cloud.stats().pubsub_processed == std::uint64_t(i + 1); }));
  }
  ASSERT_TRUE(cloud.wait_dispatch_idle(std::chrono::seconds(5)));
  ASSERT_TRUE(eventually([&] { return sink.size() == cloud.stats().dispatched_sent; }));
  // fps stays above 30 (nobody applies the action): fires at 2, 5, 8 (1-based).
  std::lock_guard lock(sink.mu);
  ASSERT_EQ(sink.got.size(), 3u);
  EXPECT_EQ(sink.got[0].kind, ActionKind::StepFrequencyDown);
  EXPECT_EQ(sink.got[0].rule_id, "R1");
  EXPECT_EQ(sink.got[0].seq, 0u);
  EXPECT_EQ(sink.got[1].seq, 1u);
  EXPECT_EQ(sink.got[0].issued_at_ms, kStart + 2000);
  EXPECT_EQ(sink.got[1].issued_at_ms, kStart + 5000);
  EXPECT_EQ(sink.got[2].issued_at_ms, kStart + 8000);
  const auto log = cloud.dispatch_log();
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(log[0].outcome, DispatchOutcome::Sent);
  EXPECT_EQ(log[0].device_id, "dev1");
}

TEST(Cloud, TopicDeviceMismatchIsDeadLettered) {
  TempDir dir;
  LogicalClock clock(kStart);
  auto broker = Broker::serve({"127.0.0.1", 0});
  CloudConfig cfg;
  cfg.lake_dir = dir.path();
  Cloud cloud(cfg, clock);
  cloud.connect_bus(broker->address());
  auto pub = Session::connect(broker->address(), "spoof");
  SnapshotSource src("dev1");
  pub->publish("telemetry/dev2", src.next_payload());
  pub->publish("telemetry/dev1", src.next_payload());
  ASSERT_TRUE(eventually([&] { return cloud.stats().pubsub_processed == 2; }));
  EXPECT_EQ(cloud.stats().dead_letters, 1u);
  EXPECT_EQ(cloud.stats().ingested, 1u);
}

TEST(Cloud, BrokerDownDropsActionsThenReconnects) {
  TempDir dir;
  LogicalClock clock(kStart);
  auto broker = Broker::serve({"127.0.0.1", 0});
  const Address addr = broker->address();
  CloudConfig cfg;
  cfg.lake_dir = dir.path();
  cfg.rules = fps_rules();
  Cloud cloud(cfg, clock);
  cloud.connect_bus(addr);
  broker->stop();
  ASSERT_TRUE(eventually([&] { return !cloud.bus_alive(); }));
  SnapshotSource src("dev1");
  auto handler = cloud.http_handler();
  handler(src.next_payload());
  handler(src.next_payload());
  ASSERT_TRUE(cloud.wait_dispatch_idle(std::chrono::seconds(5)));
  EXPECT_EQ(cloud.stats().dispatched_dropped, 1u);
  EXPECT_EQ(cloud.dispatch_log().at(0).outcome, DispatchOutcome::Dropped);
  EXPECT_FALSE(cloud.reconnect_bus());

  broker = Broker::serve(addr);
  EXPECT_TRUE(cloud.reconnect_bus());
  EXPECT_TRUE(cloud.bus_alive());
  ActionSink sink(addr, "dev1");
  for (int i = 0; i < 3; ++i) handler(src.next_payload());
  ASSERT_TRUE(cloud.wait_dispatch_idle(std::chrono::seconds(5)));
  EXPECT_EQ(cloud.stats().dispatched_sent, 1u);
  EXPECT_TRUE(eventually([&] { return sink.size() == 1; }));
}

TEST(Cloud, SwapModelDigestComesFromStore) {
  TempDir dir;
  ModelStore::write(dir / "models", builtin_profiles());
  ModelStore store(dir / "models");
  LogicalClock clock(kStart);
  CloudConfig cfg;
  cfg.lake_dir = dir / "lake";
  cfg.rules = default_rule_set("ssd_resnet50_fpn");
  cfg.rules.placement.reset();
  std::erase_if(cfg.rules.rules, [](const Rule& r) { return r.rule_id != "R2"; });
  Cloud cloud(cfg, clock, &store);
  SnapshotSource src("dev1");
  src.platform().set_frequency_level(4);  // one step down, yolov3 drops below 0.5 efficiency
  for (int i = 0; i < 2; ++i) cloud.ingest(src.next_payload(), Transport::Http);
  ASSERT_TRUE(cloud.wait_dispatch_idle(std::chrono::seconds(5)));
  const auto log = cloud.dispatch_log();
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0].action.kind, ActionKind::SwapModel);
  EXPECT_EQ(log[0].action.model_id, "ssd_resnet50_fpn");
  EXPECT_EQ(log[0].action.expected_digest, *store.digest("ssd_resnet50_fpn"));

  // Without a store the action cannot be completed and is not sent.
  TempDir dir2;
  cfg.lake_dir = dir2.path();
  Cloud bare(cfg, clock);
  SnapshotSource src2("dev1");
  src2.platform().set_frequency_level(4);
  for (int i = 0; i < 2; ++i) bare.ingest(src2.next_payload(), Transport::Http);
  EXPECT_EQ(bare.stats().unresolved_digest, 1u);
  EXPECT_EQ(bare.stats().actions_fired, 0u);
}

TEST(Cloud, PlacementUsesPredictedBandwidth) {
  TempDir dir;
  LogicalClock clock(kStart);
  CloudConfig cfg;
  cfg.lake_dir = dir.path();
  cfg.rules.placement = PlacementPolicy{};
  validate(cfg.rules);
  cfg.rules = rule_set_from_json(to_json(cfg.rules));
  Cloud cloud(cfg, clock);
  SnapshotSource src("dev1");
  for (int i = 0; i < 4; ++i) cloud.ingest(src.next_payload(20.0), Transport::Http);
  EXPECT_FALSE(cloud.predicted_dl_mbps("dev1").has_value());
  for (int i = 0; i < 10; ++i) cloud.ingest(src.next_payload(20.0), Transport::Http);
  ASSERT_TRUE(cloud.predicted_dl_mbps("dev1").has_value());
  EXPECT_NEAR(*cloud.predicted_dl_mbps("dev1"), 20.0, 0.5);
  EXPECT_EQ(cloud.stats().actions_fired, 0u);
  for (int i = 0; i < 40; ++i) cloud.ingest(src.next_payload(1.0), Transport::Http);
  ASSERT_TRUE(cloud.wait_dispatch_idle(std::chrono::seconds(5)));
  // The source never applies the action, so the rule keeps re-firing after each cooldown.
  const auto log = cloud.dispatch_log();
  ASSERT_GE(log.size(), 1u);
  EXPECT_EQ(log[0].action.kind, ActionKind::SetPlacement);
  EXPECT_EQ(log[0].action.placement, Placement::Device);
  EXPECT_EQ(log[0].action.rule_id, "R3");
}

TEST(ModelStore, WriteReadAndTruncationShim) {
  TempDir dir;
  ModelStore::write(dir.path(), builtin_profiles());
  ModelStore store(dir.path());
  EXPECT_EQ(store.manifest().size(), builtin_profiles().size());
  for (const ModelProfile& p : builtin_profiles()) {
    const auto blob = store.get(p.model_id);
    ASSERT_TRUE(blob.has_value());
    EXPECT_EQ(blob->digest, sha256_hex(blob->blob));
    EXPECT_EQ(blob->digest, p.artifact_digest);
    EXPECT_EQ(blob->blob.size(), p.artifact_size_bytes);
  }
  EXPECT_FALSE(store.get("missing").has_value());
  EXPECT_FALSE(store.get("../manifest").has_value());
  store.set_truncate_blobs(true);
  const auto cut = store.get("yolov3");
  ASSERT_TRUE(cut.has_value());
  EXPECT_NE(sha256_hex(cut->blob), cut->digest);
  EXPECT_EQ(cut->blob.size(), builtin_profile("yolov3").artifact_size_bytes / 2);
}

TEST(ModelStore, BadManifest) {
  TempDir dir;
  EXPECT_THROW(ModelStore{dir.path()}, StorageError);
  std::ofstream(dir / "manifest.json") << R"({"m":{"digest":"nothex","size":1}})";
  EXPECT_THROW(ModelStore{dir.path()}, ConfigError);
  std::ofstream(dir / "manifest.json") << "[";
  EXPECT_THROW(ModelStore{dir.path()}, ConfigError);
}
