#pragma once

#include <stdexcept>
#include <string>

namespace stx {

enum class ErrorKind {
  InvalidConfig,
  InvalidArgument,
  Shape,
  Data,
  Numeric,
  State,
  Parse,
  Path,
  Degenerate,
  Comparison,
  UndefinedMetric,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }
  // Message without the kind prefix, for adding context when rethrowing.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace stx
