#include "deltavar/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>
#include <string>

#include "deltavar/error.hpp"

namespace deltavar {

std::size_t VarLayout::index(const VarRef& v) const noexcept {
  switch (v.kind) {
    case VarRef::Kind::Time: return time();
    case VarRef::Kind::Mu: return mu();
    case VarRef::Kind::State: return state(v.index);
    case VarRef::Kind::Derivative: return derivative(v.index, v.order);
    case VarRef::Kind::Control: return control(v.index);
  }
  return 0;
}

NodePtr Node::number(double v) {
  auto n = std::make_shared<Node>();
  n->op = Op::Num;
  n->value = v;
  return n;
}

NodePtr Node::variable(VarRef v) {
  auto n = std::make_shared<Node>();
  n->op = Op::Var;
  n->var = v;
  return n;
}

NodePtr Node::unary(Op op, NodePtr arg) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->lhs = std::move(arg);
  return n;
}

NodePtr Node::binary(Op op, NodePtr a, NodePtr b) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  return n;
}

namespace {

const char* function_name(Node::Op op) {
  switch (op) {
    case Node::Op::Sin: return "sin";
    case Node::Op::Cos: return "cos";
    case Node::Op::Exp: return "exp";
    case Node::Op::Log: return "log";
    case Node::Op::Sqrt: return "sqrt";
    default: return nullptr;
  }
}

// ---------------------------------------------------------------------------
// Parser

class Parser {
 public:
  Parser(std::string_view src, Arity arity) : src_(src), arity_(arity) {}

  NodePtr parse() {
    skip_ws();
    if (pos_ == src_.size()) fail("empty expression");
    NodePtr e = expr();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg, ErrorCode code = ErrorCode::Syntax) const {
    throw SyntaxError(code, msg, pos_);
  }
  [[noreturn]] void fail_at(std::size_t at, const std::string& msg, ErrorCode code) const {
    throw SyntaxError(code, msg, at);
  }

  void skip_ws() {
    while (pos_ < src_.size() &&
           (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r')) {
      ++pos_;
    }
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = Node::binary(Node::Op::Add, lhs, term());
      } else if (accept('-')) {
        lhs = Node::binary(Node::Op::Sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = Node::binary(Node::Op::Mul, lhs, unary());
      } else if (accept('/')) {
        lhs = Node::binary(Node::Op::Div, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    if (accept('-')) return Node::unary(Node::Op::Neg, unary());
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return Node::binary(Node::Op::Pow, base, unary());
    return base;
  }

  int index_in_brackets() {
    expect('[');
    skip_ws();
    const std::size_t start = pos_;
    int value = 0;
    auto [ptr, ec] = std::from_chars(src_.data() + pos_, src_.data() + src_.size(), value);
    if (ec != std::errc() || ptr == src_.data() + start) fail("expected integer index");
    pos_ = static_cast<std::size_t>(ptr - src_.data());
    expect(']');
    return value;
  }

  NodePtr primary() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of input");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = expr();
      expect(')');
      return e;
    }
    if ((c >= '0' && c <= '9') || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail(std::string("unexpected character '") + c + "'");
  }

  NodePtr number() {
    const std::size_t start = pos_;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(src_.data() + pos_, src_.data() + src_.size(), v);
    if (ec != std::errc() || ptr == src_.data() + start) fail("malformed number");
    pos_ = static_cast<std::size_t>(ptr - src_.data());
    return Node::number(v);
  }

  NodePtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
      ++pos_;
    }
    const std::string_view name = src_.substr(start, pos_ - start);

    if (name == "t") return Node::variable({VarRef::Kind::Time, 0, 0});
    if (name == "mu") return Node::variable({VarRef::Kind::Mu, 0, 0});
    if (name == "y") {
      const int i = index_in_brackets();
      check_range(start, i, arity_.n, "y");
      return Node::variable({VarRef::Kind::State, i, 0});
    }
    if (name == "u") {
      const int l = index_in_brackets();
      check_range(start, l, arity_.m, "u");
      return Node::variable({VarRef::Kind::Control, l, 0});
    }
    if (name == "dy") {
      const int i = index_in_brackets();
      check_range(start, i, arity_.n, "dy");
      int order = 1;
      skip_ws();
      if (pos_ < src_.size() && src_[pos_] == '[') order = index_in_brackets();
      if (order < 1 || order > arity_.r) {
        fail_at(start,
                "derivative order " + std::to_string(order) + " outside declared range 1.." +
                    std::to_string(arity_.r),
                ErrorCode::Arity);
      }
      return Node::variable({VarRef::Kind::Derivative, i, order});
    }

    std::optional<Node::Op> fn;
    if (name == "sin") fn = Node::Op::Sin;
    else if (name == "cos") fn = Node::Op::Cos;
    else if (name == "exp") fn = Node::Op::Exp;
    else if (name == "log") fn = Node::Op::Log;
    else if (name == "sqrt") fn = Node::Op::Sqrt;
    if (fn) {
      expect('(');
      NodePtr arg = expr();
      expect(')');
      return Node::unary(*fn, arg);
    }
    if (name == "abs") {
      fail_at(start, "'abs' is not available: expressions must be continuously differentiable",
              ErrorCode::UnknownIdentifier);
    }
    fail_at(start, "unknown identifier '" + std::string(name) + "'",
            ErrorCode::UnknownIdentifier);
  }

  void check_range(std::size_t at, int i, int bound, const char* what) const {
    if (i < 0 || i >= bound) {
      fail_at(at,
              std::string(what) + "[" + std::to_string(i) + "] outside declared dimension " +
                  std::to_string(bound),
              ErrorCode::Arity);
    }
  }

  std::string_view src_;
  Arity arity_;
  std::size_t pos_ = 0;
};

void validate_arity(const Node& n, Arity a) {
  if (n.op == Node::Op::Var) {
    const VarRef& v = n.var;
    bool ok = true;
    switch (v.kind) {
      case VarRef::Kind::State: ok = v.index >= 0 && v.index < a.n; break;
      case VarRef::Kind::Derivative:
        ok = v.index >= 0 && v.index < a.n && v.order >= 1 && v.order <= a.r;
        break;
      case VarRef::Kind::Control: ok = v.index >= 0 && v.index < a.m; break;
      default: break;
    }
    if (!ok) throw Error(ErrorCode::Arity, "expression variable outside declared arity");
    return;
  }
  if (n.lhs) validate_arity(*n.lhs, a);
  if (n.rhs) validate_arity(*n.rhs, a);
}

// ---------------------------------------------------------------------------
// Printer

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void print(const Node& n, std::string& out) {
  switch (n.op) {
    case Node::Op::Num:
      if (n.value < 0) {
        out += "(" + format_number(n.value) + ")";
      } else {
        out += format_number(n.value);
      }
      return;
    case Node::Op::Var:
      switch (n.var.kind) {
        case VarRef::Kind::Time: out += "t"; break;
        case VarRef::Kind::Mu: out += "mu"; break;
        case VarRef::Kind::State: out += "y[" + std::to_string(n.var.index) + "]"; break;
        case VarRef::Kind::Derivative:
          out += "dy[" + std::to_string(n.var.index) + "][" + std::to_string(n.var.order) + "]";
          break;
        case VarRef::Kind::Control: out += "u[" + std::to_string(n.var.index) + "]"; break;
      }
      return;
    case Node::Op::Neg:
      out += "(-";
      print(*n.lhs, out);
      out += ")";
      return;
    default: break;
  }
  if (const char* fn = function_name(n.op)) {
    out += fn;
    out += "(";
    print(*n.lhs, out);
    out += ")";
    return;
  }
  const char* sym = n.op == Node::Op::Add   ? " + "
                    : n.op == Node::Op::Sub ? " - "
                    : n.op == Node::Op::Mul ? "*"
                    : n.op == Node::Op::Div ? "/"
                                            : "^";
  out += "(";
  print(*n.lhs, out);
  out += sym;
  print(*n.rhs, out);
  out += ")";
}

// Constant subtrees (no variables at all) fold to a number for exponent
// classification.
std::optional<double> constant_value(const Node& n) {
  switch (n.op) {
    case Node::Op::Num: return n.value;
    case Node::Op::Neg: {
      auto v = constant_value(*n.lhs);
      if (v) return -*v;
      return std::nullopt;
    }
    default: return std::nullopt;
  }
}

bool is_decision(const VarRef& v) {
  return v.kind == VarRef::Kind::State || v.kind == VarRef::Kind::Derivative ||
         v.kind == VarRef::Kind::Control;
}

constexpr int kNonPolynomial = -1;

int degree(const Node& n) {
  switch (n.op) {
    case Node::Op::Num: return 0;
    case Node::Op::Var: return is_decision(n.var) ? 1 : 0;
    case Node::Op::Neg: return degree(*n.lhs);
    case Node::Op::Add:
    case Node::Op::Sub: {
      const int a = degree(*n.lhs), b = degree(*n.rhs);
      if (a < 0 || b < 0) return kNonPolynomial;
      return std::max(a, b);
    }
    case Node::Op::Mul: {
      const int a = degree(*n.lhs), b = degree(*n.rhs);
      if (a < 0 || b < 0) return kNonPolynomial;
      return a + b;
    }
    case Node::Op::Div: {
      const int a = degree(*n.lhs), b = degree(*n.rhs);
      if (a < 0 || b != 0) return kNonPolynomial;
      return a;
    }
    case Node::Op::Pow: {
      const int a = degree(*n.lhs), b = degree(*n.rhs);
      if (a < 0 || b < 0) return kNonPolynomial;
      if (a == 0 && b == 0) return 0;
      auto k = constant_value(*n.rhs);
      if (!k || *k < 0 || std::floor(*k) != *k || b != 0) return kNonPolynomial;
      return a * static_cast<int>(*k);
    }
    default: {
      const int a = degree(*n.lhs);
      return a == 0 ? 0 : kNonPolynomial;
    }
  }
}

bool uses_kind(const Node& n, VarRef::Kind kind) {
  if (n.op == Node::Op::Var) return n.var.kind == kind;
  return (n.lhs && uses_kind(*n.lhs, kind)) || (n.rhs && uses_kind(*n.rhs, kind));
}

[[noreturn]] void domain_error(const std::string& what) {
  throw Error(ErrorCode::Domain, what);
}

}  // namespace

bool structurally_equal(const Node& a, const Node& b) {
  if (a.op != b.op) return false;
  if (a.op == Node::Op::Num) return a.value == b.value;
  if (a.op == Node::Op::Var) return a.var == b.var;
  if (static_cast<bool>(a.lhs) != static_cast<bool>(b.lhs)) return false;
  if (static_cast<bool>(a.rhs) != static_cast<bool>(b.rhs)) return false;
  if (a.lhs && !structurally_equal(*a.lhs, *b.lhs)) return false;
  if (a.rhs && !structurally_equal(*a.rhs, *b.rhs)) return false;
  return true;
}

NodePtr substitute(const NodePtr& root, const std::function<NodePtr(const VarRef&)>& fn) {
  if (root->op == Node::Op::Var) {
    if (NodePtr repl = fn(root->var)) return repl;
    return root;
  }
  if (root->op == Node::Op::Num) return root;
  auto copy = std::make_shared<Node>(*root);
  if (copy->lhs) copy->lhs = substitute(copy->lhs, fn);
  if (copy->rhs) copy->rhs = substitute(copy->rhs, fn);
  return copy;
}

// ---------------------------------------------------------------------------
// Compiled postfix program and forward-mode evaluation.
//
// Every stack slot carries a value and a dense gradient over the VarLayout.

struct Expr::Instr {
  enum class Code { Const, Var, Add, Sub, Mul, Div, PowInt, PowConst, Pow, Neg, Sin, Cos, Exp, Log, Sqrt };
  Code code;
  double c = 0.0;      // Const value / PowConst exponent
  int k = 0;           // PowInt exponent
  std::size_t var = 0; // Var slot
};

Expr::Expr(NodePtr root, Arity arity) : root_(std::move(root)), arity_(arity) {
  validate_arity(*root_, arity_);
  compile();
}

Expr Expr::parse(std::string_view src, Arity arity) {
  Parser p(src, arity);
  return Expr(p.parse(), arity);
}

std::string Expr::to_string() const {
  std::string out;
  print(*root_, out);
  return out;
}

void Expr::compile() {
  auto program = std::make_shared<std::vector<Instr>>();
  const VarLayout layout(arity_);
  using Code = Instr::Code;
  std::function<void(const Node&)> emit = [&](const Node& n) {
    switch (n.op) {
      case Node::Op::Num: program->push_back({Code::Const, n.value}); return;
      case Node::Op::Var: {
        Instr in{Code::Var};
        in.var = layout.index(n.var);
        program->push_back(in);
        return;
      }
      case Node::Op::Pow: {
        emit(*n.lhs);
        if (auto k = constant_value(*n.rhs)) {
          if (std::floor(*k) == *k && std::abs(*k) <= 1024.0) {
            Instr in{Code::PowInt};
            in.k = static_cast<int>(*k);
            program->push_back(in);
          } else {
            program->push_back({Code::PowConst, *k});
          }
          return;
        }
        emit(*n.rhs);
        program->push_back({Code::Pow});
        return;
      }
      default: break;
    }
    emit(*n.lhs);
    if (n.rhs) emit(*n.rhs);
    Code code = Code::Add;
    switch (n.op) {
      case Node::Op::Add: code = Code::Add; break;
      case Node::Op::Sub: code = Code::Sub; break;
      case Node::Op::Mul: code = Code::Mul; break;
      case Node::Op::Div: code = Code::Div; break;
      case Node::Op::Neg: code = Code::Neg; break;
      case Node::Op::Sin: code = Code::Sin; break;
      case Node::Op::Cos: code = Code::Cos; break;
      case Node::Op::Exp: code = Code::Exp; break;
      case Node::Op::Log: code = Code::Log; break;
      case Node::Op::Sqrt: code = Code::Sqrt; break;
      default: break;
    }
    program->push_back({code});
  };
  emit(*root_);
  program_ = std::move(program);
}

namespace {

// Forward-mode scalar: value plus dense gradient. With Grad == false only the
// value is propagated.
template <bool Grad>
struct Slot {
  double v = 0.0;
  std::vector<double> d;
};

template <bool Grad>
void scale_into(std::vector<double>& dst, const std::vector<double>& src, double a) {
  if constexpr (Grad) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a * src[i];
  }
}

}  // namespace

template <bool Grad, typename Program>
static Evaluation run_program(const Program& program, const std::vector<double>& point,
                              std::size_t nvars) {
  using Code = typename Program::value_type::Code;
  if (point.size() != nvars) {
    throw Error(ErrorCode::InvalidArgument,
                "evaluation point has " + std::to_string(point.size()) +
                    " entries, layout needs " + std::to_string(nvars));
  }
  std::vector<Slot<Grad>> stack;
  stack.reserve(16);
  auto push = [&](double v) -> Slot<Grad>& {
    stack.emplace_back();
    Slot<Grad>& s = stack.back();
    s.v = v;
    if constexpr (Grad) s.d.assign(nvars, 0.0);
    return s;
  };
  for (const auto& in : program) {
    switch (in.code) {
      case Code::Const: push(in.c); break;
      case Code::Var: {
        Slot<Grad>& s = push(point[in.var]);
        if constexpr (Grad) s.d[in.var] = 1.0;
        break;
      }
      case Code::Neg: {
        Slot<Grad>& a = stack.back();
        a.v = -a.v;
        if constexpr (Grad) for (double& x : a.d) x = -x;
        break;
      }
      case Code::Add:
      case Code::Sub:
      case Code::Mul:
      case Code::Div:
      case Code::Pow: {
        Slot<Grad> b = std::move(stack.back());
        stack.pop_back();
        Slot<Grad>& a = stack.back();
        if (in.code == Code::Add) {
          a.v += b.v;
          if constexpr (Grad) for (std::size_t i = 0; i < nvars; ++i) a.d[i] += b.d[i];
        } else if (in.code == Code::Sub) {
          a.v -= b.v;
          if constexpr (Grad) for (std::size_t i = 0; i < nvars; ++i) a.d[i] -= b.d[i];
        } else if (in.code == Code::Mul) {
          if constexpr (Grad) for (std::size_t i = 0; i < nvars; ++i) a.d[i] = a.d[i] * b.v + a.v * b.d[i];
          a.v *= b.v;
        } else if (in.code == Code::Div) {
          if (b.v == 0.0) domain_error("division by zero");
          const double q = a.v / b.v;
          if constexpr (Grad) for (std::size_t i = 0; i < nvars; ++i) a.d[i] = (a.d[i] - q * b.d[i]) / b.v;
          a.v = q;
        } else {
          if (!(a.v > 0.0)) domain_error("power with variable exponent needs a positive base");
          const double p = std::pow(a.v, b.v);
          const double la = std::log(a.v);
          if constexpr (Grad) for (std::size_t i = 0; i < nvars; ++i) a.d[i] = p * (b.v * a.d[i] / a.v + la * b.d[i]);
          a.v = p;
        }
        break;
      }
      case Code::PowInt: {
        Slot<Grad>& a = stack.back();
        if (in.k < 0 && a.v == 0.0) domain_error("negative power of zero");
        const double p = std::pow(a.v, in.k);
        const double dp = in.k == 0 ? 0.0 : in.k * std::pow(a.v, in.k - 1);
        scale_into<Grad>(a.d, a.d, dp);
        a.v = p;
        break;
      }
      case Code::PowConst: {
        Slot<Grad>& a = stack.back();
        if (a.v < 0.0 || (a.v == 0.0 && in.c <= 1.0)) {
          domain_error("fractional power of a nonpositive base");
        }
        const double p = std::pow(a.v, in.c);
        const double dp = a.v == 0.0 ? 0.0 : in.c * std::pow(a.v, in.c - 1.0);
        scale_into<Grad>(a.d, a.d, dp);
        a.v = p;
        break;
      }
      case Code::Sin: {
        Slot<Grad>& a = stack.back();
        scale_into<Grad>(a.d, a.d, std::cos(a.v));
        a.v = std::sin(a.v);
        break;
      }
      case Code::Cos: {
        Slot<Grad>& a = stack.back();
        scale_into<Grad>(a.d, a.d, -std::sin(a.v));
        a.v = std::cos(a.v);
        break;
      }
      case Code::Exp: {
        Slot<Grad>& a = stack.back();
        a.v = std::exp(a.v);
        scale_into<Grad>(a.d, a.d, a.v);
        break;
      }
      case Code::Log: {
        Slot<Grad>& a = stack.back();
        if (!(a.v > 0.0)) domain_error("log of a nonpositive argument");
        scale_into<Grad>(a.d, a.d, 1.0 / a.v);
        a.v = std::log(a.v);
        break;
      }
      case Code::Sqrt: {
        Slot<Grad>& a = stack.back();
        if (!(a.v > 0.0)) domain_error("sqrt of a nonpositive argument");
        a.v = std::sqrt(a.v);
        scale_into<Grad>(a.d, a.d, 0.5 / a.v);
        break;
      }
    }
    if (!std::isfinite(stack.back().v)) domain_error("non-finite intermediate value");
  }
  Evaluation out;
  out.value = stack.back().v;
  if constexpr (Grad) {
    out.partials = std::move(stack.back().d);
    for (double d : out.partials) {
      if (!std::isfinite(d)) domain_error("non-finite partial derivative");
    }
  }
  return out;
}

double Expr::value(const std::vector<double>& point) const {
  return run_program<false>(*program_, point, layout().size()).value;
}

Evaluation Expr::eval_with_partials(const std::vector<double>& point) const {
  return run_program<true>(*program_, point, layout().size());
}

int Expr::polynomial_degree() const { return degree(*root_); }

bool Expr::uses(VarRef::Kind kind) const { return uses_kind(*root_, kind); }

}  // namespace deltavar
