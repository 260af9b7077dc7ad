#include "edgetel/lake.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>

#include "edgetel/error.hpp"
#include "json_util.hpp"

namespace edgetel {

namespace fs = std::filesystem;
using detail::json;

std::string encode_lake_record(const LakeRecord& r) {
  return "{\"record_id\":" + std::to_string(r.record_id) +
         ",\"ingest_time_ms\":" + std::to_string(r.ingest_time_ms) + ",\"transport\":\"" +
         to_string(r.transport) + "\",\"snapshot\":" + encode_snapshot(r.snapshot) + "}";
}

LakeRecord decode_lake_record(std::string_view line) {
  const json j = detail::parse_json(line);
  detail::check_keys(j, "", {"record_id", "ingest_time_ms", "transport", "snapshot"});
  LakeRecord r;
  r.record_id = detail::get_u64(j, "", "record_id");
  r.ingest_time_ms = detail::as_i64(j["ingest_time_ms"], "ingest_time_ms");
  const std::string t = detail::get_string(j, "", "transport");
  if (t != "pubsub" && t != "http") throw ValidationError("transport", "unknown transport");
  r.transport = transport_from_string(t);
  r.snapshot = decode_snapshot(j["snapshot"].dump());
  return r;
}

std::string utc_day(std::int64_t ms) {
  using namespace std::chrono;
  const auto days = floor<std::chrono::days>(sys_time<milliseconds>(milliseconds(ms)));
  const year_month_day ymd{days};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d%02u%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

namespace {

std::string errno_text() { return std::strerror(errno); }

// Largest record_id in a lake file, ignoring lines that do not decode.
void scan_max_id(const fs::path& p, std::uint64_t& next) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw StorageError(p.string(), "cannot open for reading");
  std::string line;
  while (std::getline(in, line)) {
    try {
      const json j = json::parse(line);
      if (auto it = j.find("record_id"); it != j.end() && it->is_number_unsigned()) {
        next = std::max(next, it->get<std::uint64_t>() + 1);
      }
    } catch (const json::exception&) {
    }
  }
}

}  // namespace

Lake::Lake(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw StorageError(root_.string(), ec.message());
  for (const auto& dev : fs::directory_iterator(root_, ec)) {
    if (!dev.is_directory()) continue;
    for (const auto& f : fs::directory_iterator(dev.path())) {
      if (f.path().extension() == ".jsonl") scan_max_id(f.path(), next_id_);
    }
  }
  if (ec) throw StorageError(root_.string(), ec.message());
  if (fs::exists(dead_letter_path())) {
    std::ifstream in(dead_letter_path(), std::ios::binary);
    dead_letters_ = static_cast<std::uint64_t>(
        std::count(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>(), '\n'));
  }
}

Lake::~Lake() {
  for (auto& [p, fd] : fds_) ::close(fd);
}

fs::path Lake::partition(std::string_view device_id, std::int64_t ingest_time_ms) const {
  return root_ / std::string(device_id) / (utc_day(ingest_time_ms) + ".jsonl");
}

int Lake::fd_for(const fs::path& p) {
  if (auto it = fds_.find(p); it != fds_.end()) return it->second;
  std::error_code ec;
  fs::create_directories(p.parent_path(), ec);
  if (ec) throw StorageError(p.parent_path().string(), ec.message());
  const int fd = ::open(p.c_str(), O_RDWR | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw StorageError(p.string(), errno_text());
  // A torn tail left by an earlier crash is terminated so the next record
  // starts on its own line.
  const off_t size = ::lseek(fd, 0, SEEK_END);
  if (size > 0) {
    char last = '\n';
    if (::pread(fd, &last, 1, size - 1) == 1 && last != '\n') {
      if (::write(fd, "\n", 1) != 1) {
        ::close(fd);
        throw StorageError(p.string(), errno_text());
      }
    }
  }
  fds_.emplace(p, fd);
  return fd;
}

void Lake::write_line(const fs::path& p, std::string line) {
  line += '\n';
  const int fd = fd_for(p);
  const ssize_t n = ::write(fd, line.data(), line.size());
  if (n != static_cast<ssize_t>(line.size())) {
    throw StorageError(p.string(), n < 0 ? errno_text() : "short write");
  }
}

LakeRecord Lake::append(const TelemetrySnapshot& s, std::int64_t ingest_time_ms, Transport t) {
  std::lock_guard lock(mu_);
  LakeRecord r{s, ingest_time_ms, t, next_id_};
  write_line(partition(s.device.device_id, ingest_time_ms), encode_lake_record(r));
  ++next_id_;
  return r;
}

void Lake::append_dead_letter(std::string_view payload, std::int64_t ingest_time_ms, Transport t,
                              std::string_view error) {
  std::string line = "{\"ingest_time_ms\":" + std::to_string(ingest_time_ms) +
                     ",\"transport\":\"" + to_string(t) + "\",\"error\":" + detail::quote(error) +
                     ",\"payload\":" + detail::quote(payload) + "}";
  std::lock_guard lock(mu_);
  write_line(dead_letter_path(), std::move(line));
  ++dead_letters_;
}

std::uint64_t Lake::next_record_id() const {
  std::lock_guard lock(mu_);
  return next_id_;
}

std::uint64_t Lake::dead_letter_count() const {
  std::lock_guard lock(mu_);
  return dead_letters_;
}

LakeQueryResult query_lake(const fs::path& root, std::string_view device_id, std::int64_t from_ms,
                           std::int64_t to_ms) {
  if (from_ms > to_ms) throw PreconditionError("query_lake: from_ms > to_ms");
  LakeQueryResult out;
  if (from_ms == to_ms) return out;
  const fs::path dir = root / std::string(device_id);
  std::error_code ec;
  if (!fs::exists(dir, ec)) return out;
  // Day partitions outside the range can be skipped by name.
  constexpr std::int64_t kYear10000 = 253402300800000;
  const std::string first_day = from_ms <= 0 ? "" : utc_day(std::min(from_ms, kYear10000 - 1));
  const std::string last_day = to_ms > kYear10000 ? "99999999" : utc_day(to_ms - 1);
  std::vector<fs::path> files;
  for (const auto& f : fs::directory_iterator(dir, ec)) {
    if (f.path().extension() != ".jsonl") continue;
    const std::string day = f.path().stem().string();
    if (day.size() == 8 && (day < first_day || day > last_day)) continue;
    files.push_back(f.path());
  }
  if (ec) throw StorageError(dir.string(), ec.message());
  std::sort(files.begin(), files.end());

  for (const auto& p : files) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw StorageError(p.string(), "cannot open for reading");
    std::stringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw StorageError(p.string(), "read failed");
    const std::string data = ss.str();
    std::size_t pos = 0;
    while (pos < data.size()) {
      const std::size_t nl = data.find('\n', pos);
      if (nl == std::string::npos) {
        ++out.torn_lines;
        break;
      }
      const std::string_view line(data.data() + pos, nl - pos);
      pos = nl + 1;
      if (line.empty()) continue;
      try {
        LakeRecord r = decode_lake_record(line);
        if (r.snapshot.device.device_id != device_id) continue;
        if (r.ingest_time_ms >= from_ms && r.ingest_time_ms < to_ms) out.records.push_back(std::move(r));
      } catch (const Error&) {
        ++out.corrupt_lines;
      }
    }
  }
  std::sort(out.records.begin(), out.records.end(),
            [](const LakeRecord& a, const LakeRecord& b) { return a.record_id < b.record_id; });
  return out;
}

namespace {

std::string csv_field(std::string_view v) {
  if (v.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(v);
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string lake_csv_header() {
  return "device_id,platform_kind,seq,device_time_ms,app.ee_latency_ms,app.fps,"
         "model.accel_utilization,model.mem_throughput_gbps,model.cpu_utilization,"
         "model.mem_utilization,model.model_efficiency,model.model_id,energy.power_w,"
         "energy.temp_c,energy.fps_per_watt,network.rssi_dbm,network.rsrq_db,network.rsrp_dbm,"
         "network.modem_temp_c,network.dl_mbps,network.ul_mbps,record_id,ingest_time_ms,transport";
}

std::string lake_csv_row(const LakeRecord& r) {
  const TelemetrySnapshot& s = r.snapshot;
  std::string out;
  auto add = [&](const std::string& v) {
    if (!out.empty()) out += ',';
    out += v;
  };
  add(csv_field(s.device.device_id));
  add(to_string(s.device.platform_kind));
  add(std::to_string(s.seq));
  add(std::to_string(s.device_time_ms));
  for (double v : {s.app.ee_latency_ms, s.app.fps, s.model.accel_utilization,
                   s.model.mem_throughput_gbps, s.model.cpu_utilization, s.model.mem_utilization,
                   s.model.model_efficiency}) {
    add(format_double(v));
  }
  add(csv_field(s.model.model_id));
  for (double v : {s.energy.power_w, s.energy.temp_c, s.energy.fps_per_watt, s.network.rssi_dbm,
                   s.network.rsrq_db, s.network.rsrp_dbm, s.network.modem_temp_c,
                   s.network.dl_mbps, s.network.ul_mbps}) {
    add(format_double(v));
  }
  add(std::to_string(r.record_id));
  add(std::to_string(r.ingest_time_ms));
  add(to_string(r.transport));
  return out;
}

}  // namespace edgetel
