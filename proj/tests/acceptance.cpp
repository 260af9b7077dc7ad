// Standalone acceptance run: one [PASS]/[FAIL] line per criterion, each
// also bounded by its runtime budget. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "edgetel/bandwidth.hpp"
#include "edgetel/broker.hpp"
#include "edgetel/http.hpp"
#include "edgetel/lake.hpp"
#include "edgetel/latency.hpp"
#include "edgetel/platform.hpp"
#include "edgetel/scenario.hpp"
#include "edgetel/telemetry.hpp"
#include "scenario_checks.hpp"
#include "support.hpp"

using namespace edgetel;
using nlohmann::json;
using testsupport::TempDir;

namespace {

namespace fs = std::filesystem;
const fs::path kScenarios = EDGETEL_SCENARIOS;

struct Outcome {
  bool ok = true;
  std::string detail;
};

void require(Outcome& o, bool cond, const std::string& what) {
  if (!cond && o.ok) {
    o.ok = false;
    o.detail = what;
  }
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

bool within_rel(double got, double want, double rel) { return std::fabs(got - want) <= rel * std::fabs(want); }

ScenarioResult bundled(const std::string& name, const TempDir& dir) {
  return run_scenario(load_scenario(kScenarios / (name + ".json")), dir / name);
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = testsupport::read_file(e.path());
  }
  return out;
}

// ---------------------------------------------------------------------------

Outcome calibration() {
  Outcome o;
  struct Target {
    const char* model;
    double latency_ms;
    double fps_per_watt;
  };
  for (const Target& t : {Target{"yolov3", 29.4, 1.48}, Target{"ssd_resnet50_fpn", 200.0, 0.37}}) {
    Platform p(PlatformConfig{}, builtin_profile(t.model), {"sim0"});
    p.advance(1000);
    const TelemetrySnapshot s = p.sample_metrics(NetworkMetrics{});
    require(o, within_rel(s.app.ee_latency_ms, t.latency_ms, 0.02),
            std::string(t.model) + " latency " + num(s.app.ee_latency_ms));
    require(o, within_rel(s.energy.fps_per_watt, t.fps_per_watt, 0.02),
            std::string(t.model) + " fps/W " + num(s.energy.fps_per_watt));
  }
  return o;
}

Outcome from_errors(const std::vector<std::string>& errs) {
  Outcome o;
  if (!errs.empty()) o = {false, scenariochecks::join(errs)};
  return o;
}

Outcome fps_cap() {
  TempDir dir("acc");
  return from_errors(scenariochecks::check_fps_cap(bundled("scenario_fps_cap", dir).report));
}

Outcome model_swap() {
  TempDir dir("acc");
  auto errs = scenariochecks::check_model_swap(bundled("scenario_model_swap", dir).report, "ssd_resnet50_fpn");
  for (auto& e : scenariochecks::check_model_swap_corrupt(bundled("scenario_model_swap_corrupt", dir).report,
                                                          "yolov3")) {
    errs.push_back("corrupt: " + e);
  }
  return from_errors(errs);
}

Outcome offload() {
  TempDir dir("acc");
  return from_errors(scenariochecks::check_offload(bundled("scenario_offload", dir).report, 40, 80));
}

bool stats_match_brute_force(const ProbeResult& r) {
  long double sum = 0;
  for (double x : r.samples_ms) sum += x;
  const long double mean = sum / r.samples_ms.size();
  long double ss = 0;
  for (double x : r.samples_ms) ss += (x - mean) * (x - mean);
  const double sd = static_cast<double>(std::sqrt(ss / (r.samples_ms.size() - 1)));
  const auto [mn, mx] = std::minmax_element(r.samples_ms.begin(), r.samples_ms.end());
  return r.stats.n == r.samples_ms.size() && within_rel(r.stats.mean_ms, static_cast<double>(mean), 1e-9) &&
         within_rel(r.stats.stddev_ms, sd, 1e-9) && r.stats.min_ms == *mn && r.stats.max_ms == *mx;
}

Outcome latency() {
  Outcome o;
  const DelaySpec shim = DelaySpec::parse("normal:50,5");
  ProbeOptions opts;
  opts.n = 200;
  opts.payload_bytes = 256;
  std::string detail;
  for (Transport t : {Transport::PubSub, Transport::Http}) {
    opts.transport = t;
    double baseline = 0.0;
    ProbeResult delayed;
    if (t == Transport::PubSub) {
      auto broker = Broker::serve({"127.0.0.1", 0});
      {
        ProbeResponder plain(broker->address(), DelaySpec{});
        baseline = latency_probe(broker->address(), opts).stats.mean_ms;
      }
      ProbeResponder slow(broker->address(), shim, 11);
      delayed = latency_probe(broker->address(), opts);
    } else {
      HttpEndpoint ep({"127.0.0.1", 0});
      ep.start();
      baseline = latency_probe(ep.address(), opts).stats.mean_ms;
      ep.set_delay(shim, 11);
      delayed = latency_probe(ep.address(), opts);
    }
    const double want = 50.0 + baseline;
    const std::string name = to_string(t);
    require(o, within_rel(delayed.stats.mean_ms, want, 0.10),
            name + " mean " + num(delayed.stats.mean_ms) + " vs " + num(want));
    require(o, stats_match_brute_force(delayed), name + " stats differ from brute force");
    detail += (detail.empty() ? "" : ", ") + name + " " + num(delayed.stats.mean_ms) + " ms (baseline " +
              num(baseline) + ")";
  }
  if (o.ok) o.detail = detail;
  return o;
}

Outcome rules_oracle() {
  Outcome o;
  std::mt19937_64 rng(20260101);
  std::size_t fires = 0;
  for (int i = 0; i < 1000 && o.ok; ++i) {
    const auto c = testsupport::random_rule_case(rng);
    const auto want = testsupport::naive_fire_sequence(c.rules, c.snaps, c.predicted);
    const auto got = testsupport::engine_fire_sequence(c);
    for (const auto& v : want) fires += v.size();
    require(o, got == want, "case " + std::to_string(i) + " diverges from the naive evaluator");
  }
  if (o.ok) o.detail = std::to_string(fires) + " fires matched";
  return o;
}

Outcome serialization() {
  Outcome o;
  std::mt19937_64 rng(424242);
  std::vector<std::string> corpus;
  for (int i = 0; i < 1000 && o.ok; ++i) {
    const TelemetrySnapshot s = testsupport::random_snapshot(rng);
    const std::string bytes = encode_snapshot(s);
    try {
      const TelemetrySnapshot back = decode_snapshot(bytes);
      require(o, back == s && encode_snapshot(back) == bytes, "round trip " + std::to_string(i));
    } catch (const std::exception& e) {
      require(o, false, std::string("valid snapshot rejected: ") + e.what());
    }
    corpus.push_back(bytes);
  }
  std::size_t rejected = 0;
  for (int i = 0; i < 1000 && o.ok; ++i) {
    std::string b;
    if (i % 4 == 0) {
      b.resize(rng() % 512);
      for (char& c : b) c = static_cast<char>(rng());
    } else {
      b = corpus[rng() % corpus.size()];
      const int edits = 1 + static_cast<int>(rng() % 8);
      for (int k = 0; k < edits && !b.empty(); ++k) {
        const std::size_t at = rng() % b.size();
        switch (rng() % 3) {
          case 0: b[at] = static_cast<char>(rng()); break;
          case 1: b.erase(at, 1 + rng() % 16); break;
          default: b.insert(at, 1, "{}[]\",:0-e9"[rng() % 11]); break;
        }
      }
    }
    try {
      decode_snapshot(b);
    } catch (const Error&) {
      ++rejected;
    } catch (const std::exception& e) {
      require(o, false, std::string("non-library exception: ") + e.what());
    }
  }
  if (o.ok) o.detail = std::to_string(rejected) + "/1000 fuzzed inputs rejected cleanly";
  return o;
}

Outcome predictor() {
  Outcome o;
  {
    NetTraceConfig cfg;
    cfg.seed = 21;
    cfg.regimes[0].duration_ticks = 400;
    cfg.regimes[0].noise_std_mbps = 0.0;
    const NetRegime& r = cfg.regimes[0];
    PredictorConfig pc;
    pc.ridge_lambda = 1e-9;
    pc.ewma_alpha = cfg.ewma_alpha;
    BandwidthPredictor p(pc);
    for (const TracePoint& tp : gen_trace(cfg, 200)) p.update(BandwidthFeatures::from(tp.net), tp.net.dl_mbps);
    const Coefficients got = p.coefficients_in_basis({r.rsrp_mean_dbm, r.rsrq_mean_db, r.rssi_mean_dbm()},
                                                     {r.rsrp_std, r.rsrq_std, r.rssi_total_std()});
    const auto& c = r.true_coeffs;
    const Coefficients want{c.b0, c.b_rsrp, c.b_rsrq, c.b_rssi, c.b_hist};
    for (std::size_t k = 0; k < 5; ++k) {
      require(o, std::fabs(got[k] - want[k]) <= 1e-4, "coefficient " + std::to_string(k) + " = " + num(got[k]));
    }
  }
  NetTraceConfig cfg;
  cfg.seed = 77;
  cfg.regimes[0].duration_ticks = 300;
  cfg.regimes[0].noise_std_mbps = 2.0;
  BandwidthPredictor p;
  double ss = 0;
  int n = 0;
  const auto trace = gen_trace(cfg, 300);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto f = BandwidthFeatures::from(trace[i].net);
    if (i >= 150) {
      const double e = p.predict(f) - trace[i].net.dl_mbps;
      ss += e * e;
      ++n;
    }
    p.update(f, trace[i].net.dl_mbps);
  }
  const double rmse = std::sqrt(ss / n);
  require(o, rmse <= 2.5, "held-out RMSE " + num(rmse));
  if (o.ok) o.detail = "held-out RMSE " + num(rmse) + " Mbps";
  return o;
}

Outcome lake_integrity() {
  Outcome o;
  TempDir dir("acc");
  const ScenarioSpec spec = load_scenario(kScenarios / "scenario_fps_cap.json");
  const auto a = run_scenario(spec, dir / "a");
  const auto b = run_scenario(spec, dir / "b");
  const auto ta = tree(a.lake_path);
  require(o, !ta.empty() && ta == tree(b.lake_path), "replayed lake differs");

  const fs::path root = dir / "synthetic";
  const std::vector<std::string> devices{"d0", "d1", "d2", "d3"};
  const std::int64_t t0 = 1767225600000;
  {
    Lake lake(root);
    std::mt19937_64 rng(99);
    for (int i = 0; i < 10000; ++i) {
      TelemetrySnapshot s = testsupport::random_snapshot(rng);
      s.device.device_id = devices[rng() % devices.size()];
      const std::int64_t t = t0 + static_cast<std::int64_t>(rng() % (5ull * 86400000ull));
      lake.append(s, t, i % 2 ? Transport::Http : Transport::PubSub);
    }
  }
  // Oracle: one pass over every line of every partition file.
  std::map<std::string, std::vector<std::pair<std::uint64_t, std::int64_t>>> all;
  std::size_t lines = 0;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "dead_letter.jsonl") continue;
    std::ifstream in(e.path());
    for (std::string line; std::getline(in, line);) {
      const json j = json::parse(line);
      all[j["snapshot"]["device_id"]].emplace_back(j["record_id"], j["ingest_time_ms"]);
      ++lines;
    }
  }
  require(o, lines == 10000, "oracle saw " + std::to_string(lines) + " lines");
  std::mt19937_64 rng(5);
  for (int q = 0; q < 40 && o.ok; ++q) {
    const std::string& dev = devices[q % devices.size()];
    std::int64_t from = t0 - 3600000 + static_cast<std::int64_t>(rng() % (6ull * 86400000ull));
    std::int64_t to = t0 - 3600000 + static_cast<std::int64_t>(rng() % (6ull * 86400000ull));
    if (from > to) std::swap(from, to);
    if (q == 0) from = INT64_MIN, to = INT64_MAX;
    std::vector<std::uint64_t> want;
    for (const auto& [id, t] : all[dev]) {
      if (t >= from && t < to) want.push_back(id);
    }
    std::sort(want.begin(), want.end());
    const LakeQueryResult got = query_lake(root, dev, from, to);
    std::vector<std::uint64_t> ids;
    for (const auto& r : got.records) ids.push_back(r.record_id);
    require(o, ids == want && got.torn_lines == 0 && got.corrupt_lines == 0,
            "query " + std::to_string(q) + " on " + dev + " differs from full scan");
  }
  if (o.ok) o.detail = std::to_string(ta.size()) + " replayed files identical, 40 queries matched";
  return o;
}

struct Criterion {
  int number;
  const char* title;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  const std::vector<Criterion> criteria{
      {1, "calibration at top frequency", 1, calibration},
      {2, "fps-cap feedback loop", 5, fps_cap},
      {3, "model-swap loop with integrity check", 5, model_swap},
      {4, "placement loop", 5, offload},
      {5, "latency shim recovery on both transports", 30, latency},
      {6, "rules engine vs naive evaluator", 10, rules_oracle},
      {7, "snapshot round trip and decoder fuzzing", 10, serialization},
      {8, "bandwidth predictor recovery", 5, predictor},
      {9, "lake replay and query integrity", 10, lake_integrity},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.ok && secs >= c.budget_s) o = {false, "over budget"};
    std::string line = std::string(o.ok ? "[PASS]" : "[FAIL]") + " criterion " + std::to_string(c.number) +
                       ": " + c.title + " (" + num(secs) + " s of " + num(c.budget_s) + " s)";
    if (!o.detail.empty()) line += " - " + o.detail;
    std::cout << line << std::endl;
    failed += o.ok ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
