#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "edgetel/latency.hpp"
#include "edgetel/telemetry.hpp"

namespace edgetel {

struct LakeRecord {
  TelemetrySnapshot snapshot;
  std::int64_t ingest_time_ms = 0;
  Transport transport = Transport::PubSub;
  std::uint64_t record_id = 0;

  bool operator==(const LakeRecord&) const = default;
};

// One JSON line without the trailing newline:
// {"record_id":..,"ingest_time_ms":..,"transport":"pubsub","snapshot":{..}}
std::string encode_lake_record(const LakeRecord& r);
LakeRecord decode_lake_record(std::string_view line);

// UTC calendar day of a millisecond timestamp as "yyyymmdd".
std::string utc_day(std::int64_t ms);

struct LakeQueryResult {
  std::vector<LakeRecord> records;  // record_id order
  std::size_t torn_lines = 0;       // trailing partial line of a file
  std::size_t corrupt_lines = 0;    // complete lines that do not decode
};

// Append-only store partitioned as <root>/<device_id>/<yyyymmdd>.jsonl. Each
// record is written with a single O_APPEND write, so readers see whole lines
// or a torn tail only. Thread-safe.
class Lake {
 public:
  // Creates `root` if needed and resumes record ids after the largest one on
  // disk. Throws StorageError.
  explicit Lake(std::filesystem::path root);
  ~Lake();
  Lake(const Lake&) = delete;
  Lake& operator=(const Lake&) = delete;

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path partition(std::string_view device_id, std::int64_t ingest_time_ms) const;
  std::filesystem::path dead_letter_path() const { return root_ / "dead_letter.jsonl"; }

  // Assigns record_id (and returns the stored record). Throws StorageError.
  LakeRecord append(const TelemetrySnapshot& s, std::int64_t ingest_time_ms, Transport t);
  void append_dead_letter(std::string_view payload, std::int64_t ingest_time_ms, Transport t,
                          std::string_view error);

  std::uint64_t next_record_id() const;
  std::uint64_t dead_letter_count() const;

 private:
  int fd_for(const std::filesystem::path& p);
  void write_line(const std::filesystem::path& p, std::string line);

  std::filesystem::path root_;
  mutable std::mutex mu_;
  std::map<std::filesystem::path, int> fds_;
  std::uint64_t next_id_ = 0;
  std::uint64_t dead_letters_ = 0;
};

// Records of `device_id` with from_ms <= ingest_time_ms < to_ms, in record_id
// order. Throws StorageError naming an unreadable file, PreconditionError when
// from_ms > to_ms.
LakeQueryResult query_lake(const std::filesystem::path& root, std::string_view device_id,
                           std::int64_t from_ms, std::int64_t to_ms);

// Flattened snapshot columns followed by record_id, ingest_time_ms, transport.
std::string lake_csv_header();
std::string lake_csv_row(const LakeRecord& r);

}  // namespace edgetel
