#pragma once

#include <stdexcept>
#include <string>

namespace whdspot {

// Mirrors the C API status codes in whdspot.h.
enum class ErrorKind {
  InvalidArgument = 1,
  Io = 2,
  Format = 3,
  Numeric = 4,
  Runtime = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(const std::string& what) { throw Error(ErrorKind::InvalidArgument, what); }
[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(what);
}

}  // namespace whdspot
