#pragma once

// The basic problem
//
//   minimize  Σ_{t ∈ T^k} μ(t) L(t, y(t), y^Δ(t))          (plain form)
//         or  Σ_{t ∈ T^k} μ(t) L(t, y^σ(t), y^Δ(t))        (sigma form)
//
// with optional fixed endpoints, plus residual checkers for the
// Euler-Lagrange equation (integral and delta-differentiated forms) and the
// natural boundary conditions.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deltavar/expr.hpp"
#include "deltavar/timescale.hpp"

namespace deltavar {

enum class Form { Plain, Sigma };

struct Tolerances {
  double exact = 1e-12;        // identities that hold up to rounding
  double certificate = 1e-8;   // solver output certificates
};

/// One certified condition. `tolerance` is already multiplied by the problem
/// magnitude.
struct Certificate {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

class BasicProblem {
 public:
  /// Throws InsufficientPoints when the scale has fewer than 3 points and
  /// InvalidArgument on arity or boundary-dimension mismatches.
  BasicProblem(TimeScale scale, Expr lagrangian, Form form,
               std::optional<Vector> bc_a = std::nullopt,
               std::optional<Vector> bc_b = std::nullopt);

  const TimeScale& scale() const noexcept { return scale_; }
  const Expr& lagrangian() const noexcept { return lagrangian_; }
  Form form() const noexcept { return form_; }
  const std::optional<Vector>& bc_a() const noexcept { return bc_a_; }
  const std::optional<Vector>& bc_b() const noexcept { return bc_b_; }
  int n() const noexcept { return lagrangian_.arity().n; }

 private:
  TimeScale scale_;
  Expr lagrangian_;
  Form form_;
  std::optional<Vector> bc_a_;
  std::optional<Vector> bc_b_;
};

/// Partials of L along a trajectory on T^k, rows indexed by point.
///
/// `raw_y` / `raw_dy` are the partials with respect to the expression's own
/// slots (y or y^σ, and y^Δ). `plain_y` / `plain_dy` are the partials of the
/// equivalent plain-form Lagrangian F(t, y, y^Δ) = L(t, y + μ y^Δ, y^Δ), which
/// coincide with the raw ones for plain-form problems.
struct LagrangianSamples {
  Vector value;
  Matrix raw_y, raw_dy;
  Matrix plain_y, plain_dy;
  double magnitude = 1.0;  // 1 + max |partial|
};

LagrangianSamples sample_lagrangian(const BasicProblem& p, const GridFunction& y);

struct ExtremalReport {
  Vector c_estimate;
  double el_integral_max_dev = 0.0;
  Matrix el_diff_residuals;                  // rows: points of T^{k^2}
  std::map<std::string, Vector> transversality;  // "a" and/or "b"
  std::vector<Certificate> checks;
  double magnitude = 1.0;
  bool hessian_positive_definite = false;
  int iterations = 0;
  std::string method;

  bool pass() const;
};

/// Σ μ L over T^k. Throws Infeasible when y violates a fixed endpoint.
double evaluate_functional(const BasicProblem& p, const GridFunction& y);

/// Stationary point of the exact transcription plus its certificate.
struct BasicSolution {
  GridFunction y;
  ExtremalReport report;
};

struct SolverOptions {
  int max_iter = 500;
  Tolerances tol{};
};

/// Throws Degenerate on a singular stationarity system and
/// NonConvergenceError (with the best iterate) after max_iter iterations.
BasicSolution solve_basic(const BasicProblem& p, const SolverOptions& opts = {});

struct IntegralResidual {
  Vector c_estimate;
  double max_dev = 0.0;
  Matrix g;  // L_{y^Δ}(t) - ∫_a^{σ(t)} L_y on T^k
};

/// Euler-Lagrange equation in Δ-integral form, anchored at t = a.
IntegralResidual el_integral_residual(const BasicProblem& p, const GridFunction& y);

/// Delta-differentiated Euler-Lagrange residual on T^{k^2}:
///   plain form: (L_{y^Δ} - μ L_y)^Δ - L_y
///   sigma form: (L_{y^Δ})^Δ - L_{y^σ}
Matrix el_differentiated_residual(const BasicProblem& p, const GridFunction& y);

/// Natural boundary conditions at the free endpoints ("a", "b"). Empty when
/// both endpoints are fixed.
std::map<std::string, Vector> transversality_residuals(const BasicProblem& p,
                                                       const GridFunction& y);

/// The same problem written in the other form: y ↦ y + μ y^Δ (sigma → plain)
/// or y ↦ y - μ y^Δ (plain → sigma).
BasicProblem sigma_form_transform(const BasicProblem& p);

/// Residual certificates for an arbitrary candidate (no solving).
ExtremalReport certify_basic(const BasicProblem& p, const GridFunction& y,
                             const Tolerances& tol = {});

}  // namespace deltavar
