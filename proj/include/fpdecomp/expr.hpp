#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fpdecomp {

/// Immutable expression tree over variables x1..xn.
///
/// Grammar (lowest to highest precedence):
///
///     sum     := product (('+' | '-') product)*
///     product := unary (('*' | '/') unary)*
///     unary   := '-' unary | power
///     power   := primary ('^' exponent)?        right-associative
///     exponent:= '-' exponent | power
///     primary := number | xK | func '(' sum ')' | '(' sum ')'
///
/// Functions: exp, ln, sin, cos, tanh, sqrt, abs. Evaluation raises
/// Error{"EvalError"} instead of producing a NaN or infinity.
///
/// Copies share the underlying tree, so an Expr is cheap to pass by value
/// and safe to evaluate from several threads at once.
class Expr {
 public:
  enum class Kind { Number, Variable, Negate, Add, Sub, Mul, Div, Pow, Call };
  enum class Func { Exp, Ln, Sin, Cos, Tanh, Sqrt, Abs };

  static Expr number(double value);
  /// `index` is 1-based, as in the source text.
  static Expr variable(int index);
  static Expr negate(Expr operand);
  static Expr binary(Kind op, Expr lhs, Expr rhs);
  static Expr call(Func f, Expr argument);

  Kind kind() const;
  double value() const;        // Number
  int variable_index() const;  // Variable
  Func func() const;           // Call
  const Expr& lhs() const;     // binary ops
  const Expr& rhs() const;     // binary ops
  const Expr& operand() const; // Negate, Call

  double eval(std::span<const double> x) const;

  /// Largest variable index referenced (0 if none).
  int max_variable() const;

  /// Prints with the minimum parentheses needed to reparse to the same tree.
  std::string to_string() const;

  bool operator==(const Expr& other) const;

 private:
  struct Node;
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;

  friend class CompiledExpr;
};

Expr parse_expression(std::string_view src, int dimension);

std::string_view function_name(Expr::Func f);

/// Flat postfix form of an Expr for hot evaluation loops. Produces results
/// bit-identical to Expr::eval.
class CompiledExpr {
 public:
  explicit CompiledExpr(const Expr& e);

  double eval(std::span<const double> x) const;

 private:
  enum class Op : unsigned char { Push, Load, Neg, Add, Sub, Mul, Div, Pow, Fn };
  struct Instr {
    Op op;
    Expr::Func func;
    int index;
    double value;
  };
  std::vector<Instr> code_;
  std::size_t max_depth_ = 0;
};

}  // namespace fpdecomp
