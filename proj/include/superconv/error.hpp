#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace superconv {

// Broad failure classes. The CLI maps each one to its own exit code and
// prints the category name so scripts can branch on it.
enum class ErrorCategory {
  validation,
  dimension,
  numeric,
  format,
  consistency,
  insufficient_data,
  out_of_range,
  divergence,
  io,
};

constexpr std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::dimension: return "dimension";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::format: return "format";
    case ErrorCategory::consistency: return "consistency";
    case ErrorCategory::insufficient_data: return "insufficient_data";
    case ErrorCategory::out_of_range: return "out_of_range";
    case ErrorCategory::divergence: return "divergence";
    case ErrorCategory::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorCategory::validation, what) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorCategory::dimension, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorCategory::format, what) {}
};

class ConsistencyError : public Error {
 public:
  explicit ConsistencyError(const std::string& what) : Error(ErrorCategory::consistency, what) {}
};

class InsufficientDataError : public Error {
 public:
  explicit InsufficientDataError(const std::string& what)
      : Error(ErrorCategory::insufficient_data, what) {}
};

class OutOfRangeError : public Error {
 public:
  explicit OutOfRangeError(const std::string& what) : Error(ErrorCategory::out_of_range, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

#define SUPERCONV_CHECK(cond, ExcType, msg) \
  do {                                      \
    if (!(cond)) throw ExcType(msg);        \
  } while (false)

}  // namespace superconv
