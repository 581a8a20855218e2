#pragma once

#include <stdexcept>
#include <string>

namespace annofuse {

/// Raised when an input violates a documented precondition or data invariant.
/// The CLI maps it to exit status 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed syntax in a dataset file. Carries the byte offset reported by the parser.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : ValidationError(what), byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

/// A file was parsed as one dataset kind but declares another.
class KindError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Unreadable source or unwritable sink. The CLI maps it to exit status 1.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace annofuse
