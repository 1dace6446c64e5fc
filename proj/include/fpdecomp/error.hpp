#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fpdecomp {

/// Broad failure class; the CLI maps it to an exit code.
enum class ErrorCategory {
  Validation,  // malformed input, violated preconditions
  Numerical,   // the numbers themselves misbehaved
};

/// Base exception for every failure raised by the library.
///
/// `kind()` is a stable machine-readable tag (for example "UnstableDrift"
/// or "GridTooCoarse"); the CLI echoes it in its error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, ErrorCategory category, const std::string& message);

  const std::string& kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_; }

 private:
  std::string kind_;
  ErrorCategory category_;
};

inline Error validation_error(std::string kind, const std::string& message) {
  return Error(std::move(kind), ErrorCategory::Validation, message);
}

inline Error numerical_error(std::string kind, const std::string& message) {
  return Error(std::move(kind), ErrorCategory::Numerical, message);
}

/// Raised by the expression parser. `position` is a byte offset into the
/// source string.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t position, std::vector<std::string> expected,
              const std::string& found);

  std::size_t position() const noexcept { return position_; }
  const std::vector<std::string>& expected() const noexcept { return expected_; }

 private:
  std::size_t position_;
  std::vector<std::string> expected_;
};

class UnknownIdentifier : public Error {
 public:
  UnknownIdentifier(std::size_t position, const std::string& name, const std::string& why);

  std::size_t position() const noexcept { return position_; }
  const std::string& name() const noexcept { return name_; }

 private:
  std::size_t position_;
  std::string name_;
};

}  // namespace fpdecomp
