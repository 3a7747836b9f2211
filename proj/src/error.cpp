#include "vaecp/error.hpp"

namespace vaecp {

std::string_view category_name(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::InvalidArgument: return "invalid_argument";
    case ErrorCategory::Parse: return "parse_error";
    case ErrorCategory::Io: return "io_error";
    case ErrorCategory::Numeric: return "numeric_error";
  }
  return "unknown";
}

int exit_code(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::InvalidArgument: return 2;
    case ErrorCategory::Parse: return 3;
    case ErrorCategory::Io: return 4;
    case ErrorCategory::Numeric: return 5;
  }
  return 1;
}

}  // namespace vaecp
