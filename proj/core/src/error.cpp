#include "hcd/error.hpp"

namespace hcd {

std::string_view to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::invalid_argument:
      return "invalid_argument";
    case ErrorCategory::dimension_mismatch:
      return "dimension_mismatch";
    case ErrorCategory::format:
      return "format";
    case ErrorCategory::io:
      return "io";
    case ErrorCategory::numerical:
      return "numerical";
  }
  return "unknown";
}

}  // namespace hcd
