#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace emograph::log {

enum class Level { kError = 0, kInfo = 1, kDebug = 2 };

/// Read once from EMOGRAPH_LOG (error|info|debug); default info.
inline Level level() {
  static const Level lvl = [] {
    const char* v = std::getenv("EMOGRAPH_LOG");
    if (!v) return Level::kInfo;
    const std::string_view s(v);
    if (s == "error") return Level::kError;
    if (s == "debug") return Level::kDebug;
    return Level::kInfo;
  }();
  return lvl;
}

inline void write(Level at, std::string_view tag, std::string_view msg) {
  if (static_cast<int>(at) > static_cast<int>(level())) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[emograph " << tag << "] " << msg << '\n';
}

inline void error(std::string_view msg) { write(Level::kError, "error", msg); }
inline void info(std::string_view msg) { write(Level::kInfo, "info", msg); }
inline void debug(std::string_view msg) { write(Level::kDebug, "debug", msg); }

}  // namespace emograph::log
