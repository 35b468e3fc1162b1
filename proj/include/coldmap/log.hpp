#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace coldmap::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

// Level comes from COLDMAP_LOG (error|warn|info|debug), default warn.
inline Level threshold() {
  static Level level = [] {
    const char* env = std::getenv("COLDMAP_LOG");
    if (env == nullptr) return Level::warn;
    if (std::strcmp(env, "error") == 0) return Level::error;
    if (std::strcmp(env, "warn") == 0) return Level::warn;
    if (std::strcmp(env, "info") == 0) return Level::info;
    if (std::strcmp(env, "debug") == 0) return Level::debug;
    return Level::warn;
  }();
  return level;
}

template <typename... Args>
inline void emit(Level level, const char* tag, const char* fmt, Args... args) {
  if (level > threshold()) return;
  std::fprintf(stderr, "[%s] ", tag);
  std::fprintf(stderr, fmt, args...);
  std::fprintf(stderr, "\n");
}

template <typename... Args>
inline void error(const char* fmt, Args... args) {
  emit(Level::error, "error", fmt, args...);
}
template <typename... Args>
inline void warn(const char* fmt, Args... args) {
  emit(Level::warn, "warn", fmt, args...);
}
template <typename... Args>
inline void info(const char* fmt, Args... args) {
  emit(Level::info, "info", fmt, args...);
}
template <typename... Args>
inline void debug(const char* fmt, Args... args) {
  emit(Level::debug, "debug", fmt, args...);
}

}  // namespace coldmap::log
