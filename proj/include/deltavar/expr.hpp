#pragma once

// Lagrangian / dynamics expressions.
//
// Grammar (EBNF, whitespace ignored):
//
//   expr    = term { ("+" | "-") term } ;
//   term    = unary { ("*" | "/") unary } ;
//   unary   = "-" unary | power ;
//   power   = primary [ "^" unary ] ;          (right associative)
//   primary = number | variable | func "(" expr ")" | "(" expr ")" ;
//   variable= "t" | "mu" | "y[" int "]" | "dy[" int "]" [ "[" int "]" ]
//           | "u[" int "]" ;
//   func    = "sin" | "cos" | "exp" | "log" | "sqrt" ;
//
// dy[i] abbreviates dy[i][1]. `mu` is the graininess at the evaluation point.
// Evaluation returns the value and every first partial derivative by
// forward-mode differentiation.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace deltavar {

/// Declared variable dimensions: n states, derivatives up to order r, m
/// controls.
struct Arity {
  int n = 1;
  int r = 1;
  int m = 0;

  friend bool operator==(const Arity&, const Arity&) = default;
};

struct VarRef {
  enum class Kind { Time, Mu, State, Derivative, Control };
  Kind kind = Kind::Time;
  int index = 0;  // component
  int order = 0;  // Δ-order for Derivative (>= 1)

  friend bool operator==(const VarRef&, const VarRef&) = default;
};

/// Flat ordering of all declared variables:
///   t, mu, y[0..n), dy[0..n)[1], ..., dy[0..n)[r], u[0..m).
class VarLayout {
 public:
  explicit VarLayout(Arity arity) : arity_(arity) {}

  std::size_t size() const noexcept {
    return 2 + static_cast<std::size_t>(arity_.n * (arity_.r + 1) + arity_.m);
  }
  std::size_t time() const noexcept { return 0; }
  std::size_t mu() const noexcept { return 1; }
  std::size_t state(int i) const noexcept { return 2 + static_cast<std::size_t>(i); }
  /// order 0 is the state itself.
  std::size_t derivative(int i, int order) const noexcept {
    return 2 + static_cast<std::size_t>(order * arity_.n + i);
  }
  std::size_t control(int l) const noexcept {
    return 2 + static_cast<std::size_t>(arity_.n * (arity_.r + 1) + l);
  }
  std::size_t index(const VarRef& v) const noexcept;
  Arity arity() const noexcept { return arity_; }

 private:
  Arity arity_;
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  enum class Op { Num, Var, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos, Exp, Log, Sqrt };
  Op op = Op::Num;
  double value = 0.0;  // Num
  VarRef var{};        // Var
  NodePtr lhs;         // operand of unary ops and functions
  NodePtr rhs;

  static NodePtr number(double v);
  static NodePtr variable(VarRef v);
  static NodePtr unary(Op op, NodePtr arg);
  static NodePtr binary(Op op, NodePtr a, NodePtr b);
};

bool structurally_equal(const Node& a, const Node& b);

struct Evaluation {
  double value = 0.0;
  std::vector<double> partials;  // one per VarLayout slot
};

class Expr {
 public:
  /// Throws SyntaxError (Syntax / UnknownIdentifier / Arity) with a byte offset.
  static Expr parse(std::string_view src, Arity arity);

  /// Wraps an existing tree; throws ErrorCode::Arity on out-of-range variables.
  Expr(NodePtr root, Arity arity);

  const Node& root() const noexcept { return *root_; }
  const NodePtr& root_ptr() const noexcept { return root_; }
  Arity arity() const noexcept { return arity_; }
  VarLayout layout() const noexcept { return VarLayout(arity_); }

  /// Canonical text; parse(to_string()) reproduces the tree.
  std::string to_string() const;

  /// Value only. `point` is indexed by VarLayout. Throws ErrorCode::Domain on
  /// log/sqrt of a nonpositive argument, division by zero or a non-finite
  /// result.
  double value(const std::vector<double>& point) const;

  /// Value and all first partials.
  Evaluation eval_with_partials(const std::vector<double>& point) const;

  /// Polynomial degree in y, dy and u (t and mu count as constants); -1 when
  /// the expression is not a polynomial in those variables.
  int polynomial_degree() const;

  /// True when any variable of the given kind occurs.
  bool uses(VarRef::Kind kind) const;

  /// Same tree viewed under a wider arity (indices must stay in range).
  Expr with_arity(Arity arity) const { return Expr(root_, arity); }

 private:
  struct Instr;
  void compile();

  NodePtr root_;
  Arity arity_;
  std::shared_ptr<const std::vector<Instr>> program_;
};

/// Replace every variable node for which `fn` returns non-null.
NodePtr substitute(const NodePtr& root,
                   const std::function<NodePtr(const VarRef&)>& fn);

}  // namespace deltavar
