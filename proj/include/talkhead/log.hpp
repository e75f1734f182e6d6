#pragma once

#include <iostream>
#include <string>

namespace talkhead::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

inline Level &threshold() {
  static Level level = Level::warn;
  return level;
}

inline void write(Level level, const std::string &message) {
  if (level < threshold())
    return;
  static const char *const tags[] = {"debug", "info", "warn", "error"};
  std::cerr << "[talkhead:" << tags[static_cast<int>(level)] << "] " << message << '\n';
}

inline void debug(const std::string &m) { write(Level::debug, m); }
inline void info(const std::string &m) { write(Level::info, m); }
inline void warn(const std::string &m) { write(Level::warn, m); }

} // namespace talkhead::log
