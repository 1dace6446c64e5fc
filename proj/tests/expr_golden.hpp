#pragma once

#include <array>
#include <cstddef>

// Hand-checked parser cases. Successful parses list the canonical print and
// the value at `at`; failures list the error kind and the byte offset
// (EvalError cases parse fine and fail on evaluation, position unused).
struct GoldenCase {
  const char* source;
  int dimension;
  const char* printed;  // nullptr for failures
  std::array<double, 2> at;
  double value;
  const char* error;  // nullptr for successes
  std::size_t position;
};

inline constexpr GoldenCase kGoldenCases[] = {
    // precedence
    {"1 + 2 * 3", 1, "1 + 2 * 3", {0, 0}, 7.0, nullptr, 0},
    {"(1 + 2) * 3", 1, "(1 + 2) * 3", {0, 0}, 9.0, nullptr, 0},
    {"-2 ^ 2", 1, "-2^2", {0, 0}, -4.0, nullptr, 0},
    {"(-2) ^ 2", 1, "(-2)^2", {0, 0}, 4.0, nullptr, 0},
    {"-x1^2", 1, "-x1^2", {3, 0}, -9.0, nullptr, 0},
    {"(-x1)^2", 1, "(-x1)^2", {3, 0}, 9.0, nullptr, 0},
    {"-x1 * x2", 2, "-x1 * x2", {2, 3}, -6.0, nullptr, 0},
    {"-(x1 * x2)", 2, "-(x1 * x2)", {2, 3}, -6.0, nullptr, 0},
    {"-(x1 + x2)", 2, "-(x1 + x2)", {2, 3}, -5.0, nullptr, 0},
    {"x1^2 + x2^2", 2, "x1^2 + x2^2", {2, 3}, 13.0, nullptr, 0},
    {"2 * x1 ^ 3", 1, "2 * x1^3", {2, 0}, 16.0, nullptr, 0},
    {"x1 * x2 + sin(x1)", 2, "x1 * x2 + sin(x1)", {0, 5}, 0.0, nullptr, 0},
    // associativity
    {"2 ^ 3 ^ 2", 1, "2^3^2", {0, 0}, 512.0, nullptr, 0},
    {"(2 ^ 3) ^ 2", 1, "(2^3)^2", {0, 0}, 64.0, nullptr, 0},
    {"10 - 4 - 3", 1, "10 - 4 - 3", {0, 0}, 3.0, nullptr, 0},
    {"10 - (4 - 3)", 1, "10 - (4 - 3)", {0, 0}, 9.0, nullptr, 0},
    {"24 / 4 / 2", 1, "24 / 4 / 2", {0, 0}, 3.0, nullptr, 0},
    {"24 / (4 / 2)", 1, "24 / (4 / 2)", {0, 0}, 12.0, nullptr, 0},
    {"x1 ^ x2 ^ 0", 2, "x1^x2^0", {2, 3}, 2.0, nullptr, 0},
    {"x1 / (x2 * x2)", 2, "x1 / (x2 * x2)", {3, 3}, 1.0 / 3.0, nullptr, 0},
    // unary minus
    {"-x1", 1, "-x1", {2, 0}, -2.0, nullptr, 0},
    {"--x1", 1, "--x1", {2, 0}, 2.0, nullptr, 0},
    {"2 * -x1", 1, "2 * -x1", {2, 0}, -4.0, nullptr, 0},
    {"x1 + -x2", 2, "x1 + -x2", {2, 3}, -1.0, nullptr, 0},
    {"x1 - -x2", 2, "x1 - -x2", {2, 3}, 5.0, nullptr, 0},
    {"2 ^ -1", 1, "2^(-1)", {0, 0}, 0.5, nullptr, 0},
    {"2^-x1", 1, "2^(-x1)", {1, 0}, 0.5, nullptr, 0},
    // function calls
    {"exp(0)", 1, "exp(0)", {0, 0}, 1.0, nullptr, 0},
    {"sqrt(16)", 1, "sqrt(16)", {0, 0}, 4.0, nullptr, 0},
    {"abs(-3)", 1, "abs(-3)", {0, 0}, 3.0, nullptr, 0},
    {"tanh(0)", 1, "tanh(0)", {0, 0}, 0.0, nullptr, 0},
    {"cos(0) + sin(0)", 1, "cos(0) + sin(0)", {0, 0}, 1.0, nullptr, 0},
    {"ln(1)", 1, "ln(1)", {0, 0}, 0.0, nullptr, 0},
    {"sqrt(x1^2 + x2^2)", 2, "sqrt(x1^2 + x2^2)", {3, 4}, 5.0, nullptr, 0},
    {"exp(x1 - x1)", 1, "exp(x1 - x1)", {7, 0}, 1.0, nullptr, 0},
    {"sqrt(0)", 1, "sqrt(0)", {0, 0}, 0.0, nullptr, 0},
    // literals and whitespace
    {"1.5e2 + .5", 1, "150 + 0.5", {0, 0}, 150.5, nullptr, 0},
    {"2.50", 1, "2.5", {0, 0}, 2.5, nullptr, 0},
    {"  x1   *   ( x2 )  ", 2, "x1 * x2", {2, 3}, 6.0, nullptr, 0},
    {"((((x2))))", 2, "x2", {2, 3}, 3.0, nullptr, 0},
    // syntax errors with positions
    {"1 +", 1, nullptr, {0, 0}, 0.0, "SyntaxError", 3},
    {"(x1 + 2", 1, nullptr, {0, 0}, 0.0, "SyntaxError", 7},
    {"x1 + * 2", 1, nullptr, {0, 0}, 0.0, "SyntaxError", 5},
    {"sin x1", 1, nullptr, {0, 0}, 0.0, "SyntaxError", 4},
    {"2 $ 3", 1, nullptr, {0, 0}, 0.0, "SyntaxError", 2},
    {"x1 x2", 2, nullptr, {0, 0}, 0.0, "SyntaxError", 3},
    {")", 1, nullptr, {0, 0}, 0.0, "SyntaxError", 0},
    {"", 1, nullptr, {0, 0}, 0.0, "SyntaxError", 0},
    {"x1 ^", 1, nullptr, {0, 0}, 0.0, "SyntaxError", 4},
    // unknown identifiers
    {"foo(1)", 1, nullptr, {0, 0}, 0.0, "UnknownIdentifier", 0},
    {"x3", 2, nullptr, {0, 0}, 0.0, "UnknownIdentifier", 0},
    {"x1 + y", 2, nullptr, {0, 0}, 0.0, "UnknownIdentifier", 5},
    {"x0", 1, nullptr, {0, 0}, 0.0, "UnknownIdentifier", 0},
    // evaluation failures
    {"ln(0)", 1, nullptr, {0, 0}, 0.0, "EvalError", 0},
    {"sqrt(-1)", 1, nullptr, {0, 0}, 0.0, "EvalError", 0},
    {"1 / x1", 1, nullptr, {0, 0}, 0.0, "EvalError", 0},
};
