#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace cafe {

/// All toolkit failures carry a stable machine-readable code ("cycle-detected",
/// "schema-mismatch", ...) next to the human-readable message, so callers and
/// tests can dispatch on the kind of failure without string-matching prose.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool cond, const std::string& code, const std::string& message) {
  if (!cond) fail(code, message);
}

}  // namespace cafe
