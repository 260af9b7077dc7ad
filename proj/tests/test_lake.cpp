#include <gtest/gtest.h>

#include <fcntl.h>
#include <unistd.h>

#include <random>
#include <set>
#include <thread>

#include "edgetel/lake.hpp"
#include "support.hpp"

using namespace edgetel;
using testsupport::TempDir;

namespace {

constexpr std::int64_t kJan1 = 1767225600000;  // 2026-01-01T00:00:00Z
constexpr std::int64_t kDay = 86400000;

TelemetrySnapshot snap_for(const std::string& device, std::uint64_t seq) {
  std::mt19937_64 rng(seq);
  TelemetrySnapshot s = testsupport::random_snapshot(rng);
  s.device.device_id = device;
  s.seq = seq;
  return s;
}

void append_raw(const std::filesystem::path& p, const std::string& bytes) {
  const int fd = ::open(p.c_str(), O_WRONLY | O_APPEND);
  ASSERT_GE(fd, 0);
  ASSERT_EQ(::write(fd, bytes.data(), bytes.size()), static_cast<ssize_t>(bytes.size()));
  ::close(fd);
}

std::vector<std::uint64_t> ids_of(const LakeQueryResult& r) {
  std::vector<std::uint64_t> ids;
  for (const auto& rec : r.records) ids.push_back(rec.record_id);
  return ids;
}

// Splits one CSV row, honouring double-quoted fields.
std::vector<std::string> split_csv(const std::string& row) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < row.size(); ++i) {
    const char c = row[i];
    if (quoted) {
      if (c == '"' && i + 1 < row.size() && row[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

}  // namespace

TEST(UtcDay, CalendarBoundaries) {
  EXPECT_EQ(utc_day(0), "19700101");
  EXPECT_EQ(utc_day(-1), "19691231");
  EXPECT_EQ(utc_day(kJan1), "20260101");
  EXPECT_EQ(utc_day(kJan1 - 1), "20251231");
  EXPECT_EQ(utc_day(951782400000), "20000229");  // leap day
}

TEST(LakeRecord, RoundTripAndKeyOrder) {
  LakeRecord r{snap_for("dev1", 3), kJan1 + 5, Transport::Http, 42};
  const std::string line = encode_lake_record(r);
  EXPECT_EQ(line.rfind(R"({"record_id":42,"ingest_time_ms":1767225600005,"transport":"http","snapshot":{)", 0), 0u);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(decode_lake_record(line), r);
  EXPECT_THROW(decode_lake_record(R"({"record_id":1})"), SchemaError);
  EXPECT_THROW(decode_lake_record("{"), ParseError);
}

TEST(Lake, AssignsSequentialIdsAndPartitionsByDay) {
  TempDir dir;
  Lake lake(dir / "lake");
  const auto a = lake.append(snap_for("dev1", 0), kJan1, Transport::PubSub);
  const auto b = lake.append(snap_for("dev1", 1), kJan1 + kDay, Transport::Http);
  const auto c = lake.append(snap_for("dev2", 0), kJan1, Transport::PubSub);
  EXPECT_EQ(a.record_id, 0u);
  EXPECT_EQ(b.record_id, 1u);
  EXPECT_EQ(c.record_id, 2u);
  EXPECT_EQ(lake.partition("dev1", kJan1), dir / "lake" / "dev1" / "20260101.jsonl");
  EXPECT_TRUE(std::filesystem::exists(dir / "lake" / "dev1" / "20260102.jsonl"));
  EXPECT_EQ(testsupport::read_file(lake.partition("dev2", kJan1)), encode_lake_record(c) + "\n");
  const auto q = query_lake(dir / "lake", "dev1", kJan1, kJan1 + 2 * kDay);
  ASSERT_EQ(q.records.size(), 2u);
  EXPECT_EQ(q.records[0], a);
  EXPECT_EQ(q.records[1], b);
}

TEST(Lake, ResumesIdsAfterRestart) {
  TempDir dir;
  {
    Lake lake(dir.path());
    for (int i = 0; i < 5; ++i) lake.append(snap_for("dev1", i), kJan1 + i, Transport::PubSub);
  }
  Lake again(dir.path());
  EXPECT_EQ(again.next_record_id(), 5u);
  EXPECT_EQ(again.append(snap_for("dev3", 0), kJan1, Transport::PubSub).record_id, 5u);
}

TEST(Lake, TornTailIsReportedAndHealed) {
  TempDir dir;
  Lake lake(dir.path());
  lake.append(snap_for("dev1", 0), kJan1, Transport::PubSub);
  const auto part = lake.partition("dev1", kJan1);
  append_raw(part, R"({"record_id":99,"ingest_ti)");
  auto q = query_lake(dir.path(), "dev1", kJan1, kJan1 + 1);
  EXPECT_EQ(q.records.size(), 1u);
  EXPECT_EQ(q.torn_lines, 1u);
  EXPECT_EQ(q.corrupt_lines, 0u);

  // A new writer starts the next record on a fresh line.
  Lake reopened(dir.path());
  const auto r = reopened.append(snap_for("dev1", 1), kJan1, Transport::PubSub);
  q = query_lake(dir.path(), "dev1", kJan1, kJan1 + 1);
  EXPECT_EQ(ids_of(q), (std::vector<std::uint64_t>{0, r.record_id}));
  EXPECT_EQ(q.torn_lines, 0u);
  EXPECT_EQ(q.corrupt_lines, 1u);
}

TEST(Lake, DeadLetters) {
  TempDir dir;
  Lake lake(dir.path());
  lake.append_dead_letter("not json\n", kJan1, Transport::Http, "parse error at 0");
  lake.append_dead_letter(std::string("\xff\xfe", 2), kJan1 + 1, Transport::PubSub, "bad utf8");
  EXPECT_EQ(lake.dead_letter_count(), 2u);
  const std::string text = testsupport::read_file(lake.dead_letter_path());
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j["transport"], "http");
  EXPECT_EQ(j["error"], "parse error at 0");
  EXPECT_EQ(j["payload"], "not json\n");
  EXPECT_EQ(j["ingest_time_ms"], kJan1);
  // Dead letters never show up as records nor shift ids.
  EXPECT_EQ(lake.next_record_id(), 0u);
}

TEST(Lake, QueryMatchesFullScanOracle) {
  TempDir dir;
  Lake lake(dir.path());
  std::mt19937_64 rng(31);
  const std::vector<std::string> devices = {"dev1", "dev2", "edge-7"};
  for (int i = 0; i < 3000; ++i) {
    const std::int64_t t = kJan1 - 2 * kDay + static_cast<std::int64_t>(rng() % (6 * kDay));
    lake.append(snap_for(devices[rng() % 3], i), t, Transport::PubSub);
  }
  for (int q = 0; q < 200; ++q) {
    std::int64_t a = kJan1 - 3 * kDay + static_cast<std::int64_t>(rng() % (8 * kDay));
    std::int64_t b = kJan1 - 3 * kDay + static_cast<std::int64_t>(rng() % (8 * kDay));
    if (a > b) std::swap(a, b);
    const std::string& dev = devices[rng() % 3];
    ASSERT_EQ(ids_of(query_lake(dir.path(), dev, a, b)), testsupport::full_scan_ids(dir.path(), dev, a, b));
  }
  constexpr auto kMin = std::numeric_limits<std::int64_t>::min();
  constexpr auto kMax = std::numeric_limits<std::int64_t>::max();
  EXPECT_EQ(ids_of(query_lake(dir.path(), "dev1", kMin, kMax)),
            testsupport::full_scan_ids(dir.path(), "dev1", kMin, kMax));
  EXPECT_TRUE(query_lake(dir.path(), "dev1", kJan1, kJan1).records.empty());
  EXPECT_TRUE(query_lake(dir.path(), "nobody", kMin, kMax).records.empty());
  EXPECT_THROW(query_lake(dir.path(), "dev1", 2, 1), PreconditionError);
}

TEST(Lake, ConcurrentAppendsKeepWholeLines) {
  TempDir dir;
  Lake lake(dir.path());
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&lake, t] {
      for (int i = 0; i < 250; ++i) lake.append(snap_for("dev1", t * 1000 + i), kJan1, Transport::PubSub);
    });
  }
  for (auto& th : threads) th.join();
  const auto q = query_lake(dir.path(), "dev1", kJan1, kJan1 + 1);
  EXPECT_EQ(q.records.size(), 1000u);
  EXPECT_EQ(q.corrupt_lines + q.torn_lines, 0u);
  const auto all = ids_of(q);
  const std::set<std::uint64_t> ids(all.begin(), all.end());
  EXPECT_EQ(ids.size(), 1000u);
  EXPECT_EQ(*ids.rbegin(), 999u);
}

TEST(LakeCsv, HeaderAndRowsAlign) {
  const auto header = split_csv(lake_csv_header());
  EXPECT_EQ(header.front(), "device_id");
  EXPECT_EQ(header[header.size() - 3], "record_id");
  EXPECT_EQ(header.back(), "transport");
  LakeRecord r{snap_for("dev1", 1), kJan1, Transport::Http, 7};
  r.snapshot.model.model_id = "odd, \"quoted\" name";
  const auto row = split_csv(lake_csv_row(r));
  ASSERT_EQ(row.size(), header.size());
  const auto col = [&](const std::string& name) {
    return row[std::find(header.begin(), header.end(), name) - header.begin()];
  };
  EXPECT_EQ(col("model.model_id"), "odd, \"quoted\" name");
  EXPECT_EQ(col("record_id"), "7");
  EXPECT_EQ(col("transport"), "http");
  EXPECT_EQ(col("app.fps"), format_double(r.snapshot.app.fps));
}
