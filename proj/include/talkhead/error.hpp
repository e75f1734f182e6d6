#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace talkhead {

enum class ErrorKind {
  shape,
  numeric_fault,
  usage,
  schema,
  missing_file,
  io,
  geometry,
  config,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::shape: return "shape";
  case ErrorKind::numeric_fault: return "numeric-fault";
  case ErrorKind::usage: return "usage";
  case ErrorKind::schema: return "schema";
  case ErrorKind::missing_file: return "missing-file";
  case ErrorKind::io: return "io";
  case ErrorKind::geometry: return "geometry";
  case ErrorKind::config: return "config";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind; the
/// CLI prints it as the error class.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string &message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string &message) {
  if (!condition)
    fail(kind, message);
}

} // namespace talkhead
