#pragma once

#include <spdlog/spdlog.h>

namespace mtre {

/// Shared logger, writing to stderr. The level is read once from the
/// MTRE_LOG environment variable (error, warn, info, debug; default info).
spdlog::logger& logger();

}  // namespace mtre
