#include "edgetel/clock.hpp"

#include <chrono>

namespace edgetel {

std::int64_t WallClock::now_ms() const {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

}  // namespace edgetel
