#pragma once

// Grid-refinement studies for basic problems on uniform scales.

#include <functional>
#include <optional>
#include <vector>

#include "deltavar/expr.hpp"
#include "deltavar/timescale.hpp"
#include "deltavar/variational.hpp"

namespace deltavar {

/// A basic problem on [a, b] whose scale is chosen by the study.
struct RefineSpec {
  double a = 0.0;
  double b = 1.0;
  Expr lagrangian;
  Form form = Form::Plain;
  std::optional<Vector> bc_a;
  std::optional<Vector> bc_b;
};

/// Errors are sup norms over points and components (values on the whole
/// scale, Δ-derivatives on T^k). `error` is the distance in
/// ‖y‖_{1,∞} = ‖y‖_∞ + ‖y^Δ‖_∞, the norm of weak local minimality.
struct ConvergenceRow {
  std::size_t n = 0;
  double h = 0.0;
  double error = 0.0;
  double error_values = 0.0;      // ‖y − y_ref‖_∞
  double error_derivative = 0.0;  // ‖y^Δ − y_ref'‖_∞
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;  // ordered by n
  std::vector<double> ratios;        // error_k / error_{k+1}; NaN below the rounding floor
  std::vector<double> orders;        // log(ratio) / log(h_k / h_{k+1})
};

struct ReferencePoint {
  Vector y;
  Vector dy;  // derivative of the reference
};

using ReferenceSolution = std::function<ReferencePoint(double t)>;

/// Solves on uniform scales with ladder[k] points and compares against an
/// analytic reference. Throws InvalidArgument unless the ladder has at least
/// three strictly increasing entries.
ConvergenceTable refine_study(const RefineSpec& spec, const std::vector<std::size_t>& ladder,
                              const ReferenceSolution& reference, unsigned threads = 0);

/// Same, against the solution on a uniform scale with fine_n points (its
/// Δ-derivative stands in for y_ref'); every ladder grid must be nested in it
/// ((fine_n − 1) divisible by (n − 1)).
ConvergenceTable refine_study(const RefineSpec& spec, const std::vector<std::size_t>& ladder,
                              std::size_t fine_n, unsigned threads = 0);

/// Reference from expressions in `t` (one per component, arity (n, 0, 0));
/// derivatives by forward-mode differentiation. Throws InvalidArgument when an
/// expression uses anything but t.
ReferenceSolution expression_reference(const std::vector<Expr>& components);

}  // namespace deltavar
