#include "fpdecomp/error.hpp"

namespace fpdecomp {

Error::Error(std::string kind, ErrorCategory category, const std::string& message)
    : std::runtime_error(message), kind_(std::move(kind)), category_(category) {}

namespace {

std::string describe_syntax(std::size_t position, const std::vector<std::string>& expected,
                            const std::string& found) {
  std::string msg = "syntax error at position " + std::to_string(position) + ": expected ";
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i > 0) msg += (i + 1 == expected.size()) ? " or " : ", ";
    msg += expected[i];
  }
  msg += ", found " + found;
  return msg;
}

}  // namespace

SyntaxError::SyntaxError(std::size_t position, std::vector<std::string> expected,
                         const std::string& found)
    : Error("SyntaxError", ErrorCategory::Validation, describe_syntax(position, expected, found)),
      position_(position),
      expected_(std::move(expected)) {}

UnknownIdentifier::UnknownIdentifier(std::size_t position, const std::string& name,
                                     const std::string& why)
    : Error("UnknownIdentifier", ErrorCategory::Validation,
            "unknown identifier '" + name + "' at position " + std::to_string(position) + ": " +
                why),
      position_(position),
      name_(name) {}

}  // namespace fpdecomp
