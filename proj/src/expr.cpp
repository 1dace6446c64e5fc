#include "fpdecomp/expr.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>

#include "fpdecomp/error.hpp"

namespace fpdecomp {

struct Expr::Node {
  Kind kind;
  double value = 0.0;
  int index = 0;
  Func func = Func::Exp;
  std::optional<Expr> a{};
  std::optional<Expr> b{};
};

Expr Expr::number(double value) {
  if (!std::isfinite(value)) {
    throw validation_error("SyntaxError", "numeric literal must be finite");
  }
  return Expr(std::make_shared<const Node>(Node{.kind = Kind::Number, .value = value}));
}

Expr Expr::variable(int index) {
  if (index < 1) throw validation_error("UnknownIdentifier", "variable index must be >= 1");
  return Expr(std::make_shared<const Node>(Node{.kind = Kind::Variable, .index = index}));
}

Expr Expr::negate(Expr operand) {
  Node n{.kind = Kind::Negate};
  n.a = std::move(operand);
  return Expr(std::make_shared<const Node>(std::move(n)));
}

Expr Expr::binary(Kind op, Expr lhs, Expr rhs) {
  switch (op) {
    case Kind::Add:
    case Kind::Sub:
    case Kind::Mul:
    case Kind::Div:
    case Kind::Pow:
      break;
    default:
      throw std::invalid_argument("Expr::binary: not a binary operator");
  }
  Node n{.kind = op};
  n.a = std::move(lhs);
  n.b = std::move(rhs);
  return Expr(std::make_shared<const Node>(std::move(n)));
}

Expr Expr::call(Func f, Expr argument) {
  Node n{.kind = Kind::Call};
  n.func = f;
  n.a = std::move(argument);
  return Expr(std::make_shared<const Node>(std::move(n)));
}

Expr::Kind Expr::kind() const { return node_->kind; }
double Expr::value() const { return node_->value; }
int Expr::variable_index() const { return node_->index; }
Expr::Func Expr::func() const { return node_->func; }
const Expr& Expr::lhs() const { return *node_->a; }
const Expr& Expr::rhs() const { return *node_->b; }
const Expr& Expr::operand() const { return *node_->a; }

std::string_view function_name(Expr::Func f) {
  switch (f) {
    case Expr::Func::Exp: return "exp";
    case Expr::Func::Ln: return "ln";
    case Expr::Func::Sin: return "sin";
    case Expr::Func::Cos: return "cos";
    case Expr::Func::Tanh: return "tanh";
    case Expr::Func::Sqrt: return "sqrt";
    case Expr::Func::Abs: return "abs";
  }
  return "?";
}

namespace {

constexpr std::array<Expr::Func, 7> kAllFuncs = {Expr::Func::Exp,  Expr::Func::Ln,
                                                 Expr::Func::Sin,  Expr::Func::Cos,
                                                 Expr::Func::Tanh, Expr::Func::Sqrt,
                                                 Expr::Func::Abs};

[[noreturn]] void eval_fail(const std::string& what) {
  throw numerical_error("EvalError", what);
}

double checked(double r, const char* what) {
  if (!std::isfinite(r)) eval_fail(std::string("non-finite result in ") + what);
  return r;
}

// Both evaluation paths go through these two helpers so that they agree
// bit for bit.
double apply_binary(Expr::Kind op, double a, double b) {
  switch (op) {
    case Expr::Kind::Add: return checked(a + b, "'+'");
    case Expr::Kind::Sub: return checked(a - b, "'-'");
    case Expr::Kind::Mul: return checked(a * b, "'*'");
    case Expr::Kind::Div:
      if (b == 0.0) eval_fail("division by zero");
      return checked(a / b, "'/'");
    case Expr::Kind::Pow: return checked(std::pow(a, b), "'^'");
    default: break;
  }
  eval_fail("bad operator");
}

double apply_func(Expr::Func f, double a) {
  switch (f) {
    case Expr::Func::Exp: return checked(std::exp(a), "exp");
    case Expr::Func::Ln:
      if (!(a > 0.0)) eval_fail("ln of non-positive argument");
      return std::log(a);
    case Expr::Func::Sin: return checked(std::sin(a), "sin");
    case Expr::Func::Cos: return checked(std::cos(a), "cos");
    case Expr::Func::Tanh: return std::tanh(a);
    case Expr::Func::Sqrt:
      if (a < 0.0) eval_fail("sqrt of negative argument");
      return std::sqrt(a);
    case Expr::Func::Abs: return std::fabs(a);
  }
  eval_fail("bad function");
}

double load_var(std::span<const double> x, int index) {
  if (index < 1 || static_cast<std::size_t>(index) > x.size()) {
    eval_fail("variable x" + std::to_string(index) + " out of range for point of dimension " +
              std::to_string(x.size()));
  }
  return x[static_cast<std::size_t>(index - 1)];
}

int precedence(Expr::Kind k) {
  switch (k) {
    case Expr::Kind::Add:
    case Expr::Kind::Sub: return 1;
    case Expr::Kind::Mul:
    case Expr::Kind::Div: return 2;
    case Expr::Kind::Negate: return 3;
    case Expr::Kind::Pow: return 4;
    default: return 5;
  }
}

void print(const Expr& e, std::string& out);

void print_child(const Expr& e, int min_prec, std::string& out) {
  if (precedence(e.kind()) < min_prec) {
    out += '(';
    print(e, out);
    out += ')';
  } else {
    print(e, out);
  }
}

void print(const Expr& e, std::string& out) {
  switch (e.kind()) {
    case Expr::Kind::Number: {
      std::array<char, 64> buf{};
      auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), e.value());
      out.append(buf.data(), end);
      return;
    }
    case Expr::Kind::Variable:
      out += 'x';
      out += std::to_string(e.variable_index());
      return;
    case Expr::Kind::Negate:
      out += '-';
      print_child(e.operand(), 3, out);
      return;
    case Expr::Kind::Call:
      out += function_name(e.func());
      out += '(';
      print(e.operand(), out);
      out += ')';
      return;
    case Expr::Kind::Pow:
      print_child(e.lhs(), 5, out);
      out += '^';
      print_child(e.rhs(), 4, out);
      return;
    case Expr::Kind::Mul:
    case Expr::Kind::Div:
      print_child(e.lhs(), 2, out);
      out += e.kind() == Expr::Kind::Mul ? " * " : " / ";
      print_child(e.rhs(), 3, out);
      return;
    case Expr::Kind::Add:
    case Expr::Kind::Sub:
      print_child(e.lhs(), 1, out);
      out += e.kind() == Expr::Kind::Add ? " + " : " - ";
      print_child(e.rhs(), 2, out);
      return;
  }
}

// ---------------------------------------------------------------------------
// Parser

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };

struct Token {
  Tok kind;
  std::size_t pos;
  std::string_view text;
  double number = 0.0;
};

std::string describe(const Token& t) {
  if (t.kind == Tok::End) return "end of input";
  return "'" + std::string(t.text) + "'";
}

class Parser {
 public:
  Parser(std::string_view src, int dimension) : src_(src), dim_(dimension) { advance(); }

  Expr parse() {
    Expr e = sum();
    if (tok_.kind != Tok::End) {
      throw SyntaxError(tok_.pos, {"'+'", "'-'", "'*'", "'/'", "'^'", "end of input"},
                        describe(tok_));
    }
    return e;
  }

 private:
  static constexpr int kMaxDepth = 256;

  void advance() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    const std::size_t start = pos_;
    if (pos_ >= src_.size()) {
      tok_ = {Tok::End, start, {}};
      return;
    }
    const char c = src_[pos_];
    auto single = [&](Tok k) {
      ++pos_;
      tok_ = {k, start, src_.substr(start, 1)};
    };
    switch (c) {
      case '+': return single(Tok::Plus);
      case '-': return single(Tok::Minus);
      case '*': return single(Tok::Star);
      case '/': return single(Tok::Slash);
      case '^': return single(Tok::Caret);
      case '(': return single(Tok::LParen);
      case ')': return single(Tok::RParen);
      default: break;
    }
    auto is_digit = [&](std::size_t i) {
      return i < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i]));
    };
    if (is_digit(pos_) || (c == '.' && is_digit(pos_ + 1))) {
      while (is_digit(pos_)) ++pos_;
      if (pos_ < src_.size() && src_[pos_] == '.') {
        ++pos_;
        while (is_digit(pos_)) ++pos_;
      }
      if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
        std::size_t p = pos_ + 1;
        if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
        if (is_digit(p)) {
          pos_ = p;
          while (is_digit(pos_)) ++pos_;
        }
      }
      const std::string_view text = src_.substr(start, pos_ - start);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
        throw SyntaxError(start, {"finite number"}, "'" + std::string(text) + "'");
      }
      tok_ = {Tok::Number, start, text, v};
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
        ++pos_;
      }
      tok_ = {Tok::Ident, start, src_.substr(start, pos_ - start)};
      return;
    }
    throw SyntaxError(start, {"number", "identifier", "operator", "'('", "')'"},
                      "'" + std::string(1, c) + "'");
  }

  Expr sum() {
    Expr e = product();
    while (tok_.kind == Tok::Plus || tok_.kind == Tok::Minus) {
      const auto op = tok_.kind == Tok::Plus ? Expr::Kind::Add : Expr::Kind::Sub;
      advance();
      e = Expr::binary(op, std::move(e), product());
    }
    return e;
  }

  Expr product() {
    Expr e = unary();
    while (tok_.kind == Tok::Star || tok_.kind == Tok::Slash) {
      const auto op = tok_.kind == Tok::Star ? Expr::Kind::Mul : Expr::Kind::Div;
      advance();
      e = Expr::binary(op, std::move(e), unary());
    }
    return e;
  }

  Expr unary() {
    if (tok_.kind == Tok::Minus) {
      DepthGuard g(*this);
      advance();
      return Expr::negate(unary());
    }
    return power();
  }

  Expr power() {
    Expr base = primary();
    if (tok_.kind != Tok::Caret) return base;
    advance();
    return Expr::binary(Expr::Kind::Pow, std::move(base), exponent());
  }

  Expr exponent() {
    DepthGuard g(*this);
    if (tok_.kind == Tok::Minus) {
      advance();
      return Expr::negate(exponent());
    }
    return power();
  }

  Expr primary() {
    DepthGuard g(*this);
    const Token t = tok_;
    switch (t.kind) {
      case Tok::Number:
        advance();
        return Expr::number(t.number);
      case Tok::LParen: {
        advance();
        Expr inner = sum();
        expect_rparen();
        return inner;
      }
      case Tok::Ident:
        return identifier(t);
      default:
        throw SyntaxError(t.pos, {"number", "identifier", "'('", "'-'"}, describe(t));
    }
  }

  Expr identifier(const Token& t) {
    advance();
    if (tok_.kind == Tok::LParen) {
      for (auto f : kAllFuncs) {
        if (function_name(f) == t.text) {
          advance();
          Expr arg = sum();
          expect_rparen();
          return Expr::call(f, std::move(arg));
        }
      }
      throw UnknownIdentifier(t.pos, std::string(t.text), "not a known function");
    }
    for (auto f : kAllFuncs) {
      if (function_name(f) == t.text) {
        throw SyntaxError(tok_.pos, {"'('"}, describe(tok_));
      }
    }
    if (t.text.size() >= 2 && t.text[0] == 'x') {
      const std::string_view digits = t.text.substr(1);
      int index = 0;
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
      if (ec == std::errc() && ptr == digits.data() + digits.size() && digits[0] != '0') {
        if (index < 1 || index > dim_) {
          throw UnknownIdentifier(t.pos, std::string(t.text),
                                  "variable index out of range 1.." + std::to_string(dim_));
        }
        return Expr::variable(index);
      }
    }
    throw UnknownIdentifier(t.pos, std::string(t.text), "expected a variable x1..x" +
                                                            std::to_string(dim_) +
                                                            " or a function call");
  }

  void expect_rparen() {
    if (tok_.kind != Tok::RParen) {
      throw SyntaxError(tok_.pos, {"')'", "operator"}, describe(tok_));
    }
    advance();
  }

  struct DepthGuard {
    explicit DepthGuard(Parser& p) : p_(p) {
      if (++p_.depth_ > kMaxDepth) {
        throw SyntaxError(p_.tok_.pos, {"shallower nesting"}, describe(p_.tok_));
      }
    }
    ~DepthGuard() { --p_.depth_; }
    Parser& p_;
  };

  std::string_view src_;
  int dim_;
  std::size_t pos_ = 0;
  Token tok_{Tok::End, 0, {}};
  int depth_ = 0;
};

}  // namespace

double Expr::eval(std::span<const double> x) const {
  const Node& n = *node_;
  switch (n.kind) {
    case Kind::Number: return n.value;
    case Kind::Variable: return load_var(x, n.index);
    case Kind::Negate: return -n.a->eval(x);
    case Kind::Call: return apply_func(n.func, n.a->eval(x));
    default: {
      const double a = n.a->eval(x);
      const double b = n.b->eval(x);
      return apply_binary(n.kind, a, b);
    }
  }
}

int Expr::max_variable() const {
  const Node& n = *node_;
  switch (n.kind) {
    case Kind::Number: return 0;
    case Kind::Variable: return n.index;
    case Kind::Negate:
    case Kind::Call: return n.a->max_variable();
    default: return std::max(n.a->max_variable(), n.b->max_variable());
  }
}

std::string Expr::to_string() const {
  std::string out;
  print(*this, out);
  return out;
}

bool Expr::operator==(const Expr& other) const {
  if (node_ == other.node_) return true;
  const Node& p = *node_;
  const Node& q = *other.node_;
  if (p.kind != q.kind) return false;
  switch (p.kind) {
    case Kind::Number: return p.value == q.value;
    case Kind::Variable: return p.index == q.index;
    case Kind::Negate: return *p.a == *q.a;
    case Kind::Call: return p.func == q.func && *p.a == *q.a;
    default: return *p.a == *q.a && *p.b == *q.b;
  }
}

Expr parse_expression(std::string_view src, int dimension) {
  if (dimension < 1) throw validation_error("DimensionMismatch", "dimension must be >= 1");
  return Parser(src, dimension).parse();
}

// ---------------------------------------------------------------------------

CompiledExpr::CompiledExpr(const Expr& e) {
  std::size_t depth = 0;
  auto emit = [&](auto&& self, const Expr& x) -> void {
    switch (x.kind()) {
      case Expr::Kind::Number:
        code_.push_back({Op::Push, Expr::Func::Exp, 0, x.value()});
        max_depth_ = std::max(max_depth_, ++depth);
        return;
      case Expr::Kind::Variable:
        code_.push_back({Op::Load, Expr::Func::Exp, x.variable_index(), 0.0});
        max_depth_ = std::max(max_depth_, ++depth);
        return;
      case Expr::Kind::Negate:
        self(self, x.operand());
        code_.push_back({Op::Neg, Expr::Func::Exp, 0, 0.0});
        return;
      case Expr::Kind::Call:
        self(self, x.operand());
        code_.push_back({Op::Fn, x.func(), 0, 0.0});
        return;
      default: {
        self(self, x.lhs());
        self(self, x.rhs());
        Op op = Op::Add;
        switch (x.kind()) {
          case Expr::Kind::Sub: op = Op::Sub; break;
          case Expr::Kind::Mul: op = Op::Mul; break;
          case Expr::Kind::Div: op = Op::Div; break;
          case Expr::Kind::Pow: op = Op::Pow; break;
          default: break;
        }
        code_.push_back({op, Expr::Func::Exp, 0, 0.0});
        --depth;
        return;
      }
    }
  };
  emit(emit, e);
}

double CompiledExpr::eval(std::span<const double> x) const {
  constexpr std::size_t kInline = 32;
  std::array<double, kInline> small{};
  std::vector<double> large;
  double* stack = small.data();
  if (max_depth_ > kInline) {
    large.resize(max_depth_);
    stack = large.data();
  }
  std::size_t sp = 0;
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::Push: stack[sp++] = in.value; break;
      case Op::Load: stack[sp++] = load_var(x, in.index); break;
      case Op::Neg: stack[sp - 1] = -stack[sp - 1]; break;
      case Op::Fn: stack[sp - 1] = apply_func(in.func, stack[sp - 1]); break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
      case Op::Pow: {
        static constexpr Expr::Kind kinds[] = {Expr::Kind::Add, Expr::Kind::Sub, Expr::Kind::Mul,
                                               Expr::Kind::Div, Expr::Kind::Pow};
        const auto k = kinds[static_cast<int>(in.op) - static_cast<int>(Op::Add)];
        const double b = stack[--sp];
        stack[sp - 1] = apply_binary(k, stack[sp - 1], b);
        break;
      }
    }
  }
  return stack[0];
}

}  // namespace fpdecomp
