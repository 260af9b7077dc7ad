#pragma once

#include <atomic>
#include <cstdint>

namespace edgetel {

// Millisecond clock. The scenario harness swaps in a LogicalClock so runs are
// reproducible byte-for-byte.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() const = 0;
};

class WallClock final : public Clock {
 public:
  std::int64_t now_ms() const override;
};

class LogicalClock final : public Clock {
 public:
  explicit LogicalClock(std::int64_t start_ms = 0) : now_(start_ms) {}
  std::int64_t now_ms() const override { return now_.load(); }
  void set(std::int64_t ms) { now_.store(ms); }
  void advance(std::int64_t dt_ms) { now_.fetch_add(dt_ms); }

 private:
  std::atomic<std::int64_t> now_;
};

}  // namespace edgetel
