#pragma once

#include <spdlog/spdlog.h>

namespace edgetel {

// Routes spdlog to stderr; level from EDGETEL_LOG (trace..off, default warn).
void init_logging();

}  // namespace edgetel
