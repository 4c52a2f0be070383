#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hcd {

/// Coarse failure classes. The CLI prints the category as the first token of
/// its single-line error report, so these names are part of its interface.
enum class ErrorCategory {
  invalid_argument,
  dimension_mismatch,
  format,
  io,
  numerical,
};

std::string_view to_string(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  [[nodiscard]] ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message)
      : Error(ErrorCategory::invalid_argument, message) {}
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& message)
      : Error(ErrorCategory::dimension_mismatch, message) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message) : Error(ErrorCategory::format, message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error(ErrorCategory::io, message) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& message) : Error(ErrorCategory::numerical, message) {}
};

}  // namespace hcd
