#include "stx/error.hpp"

namespace stx {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Data: return "data";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::State: return "state";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Path: return "path";
    case ErrorKind::Degenerate: return "degenerate-data";
    case ErrorKind::Comparison: return "comparison";
    case ErrorKind::UndefinedMetric: return "undefined-metric";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind), detail_(what) {}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace stx
