#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vaecp {

/// Coarse failure classes. The CLI maps each to a distinct exit code.
enum class ErrorCategory {
  InvalidArgument,  // bad sizes, shapes, out-of-range indices, bad flags
  Parse,            // malformed input file contents
  Io,               // unreadable or unwritable files
  Numeric,          // non-finite objective or gradient
};

std::string_view category_name(ErrorCategory category) noexcept;
int exit_code(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& what) {
  throw Error(category, what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorCategory::InvalidArgument, what);
}

}  // namespace vaecp
