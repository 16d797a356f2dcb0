#pragma once

// The higher-order problem
//
//   minimize  Σ_{t ∈ [a, ρ^{r−1}(b))} μ(t) L(t, y, y^Δ, ..., y^{Δ^r})
//
// with optional boundary blocks y^{Δ^i}(a) and y^{Δ^i}(ρ^{r−1}(b)),
// i = 0..r−1. The endpoint ρ^{r−1}(b) is point index N − r.
//
// The reduction to a Lagrange problem uses the state
// x = (y, y^Δ, ..., y^{Δ^{r−1}}) ∈ ℝ^{nr} (block j holds y^{Δ^j}), the control
// u = y^{Δ^r} and the integrator chain x^Δ = A x + B u, on the first N − r + 1
// points of the scale.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deltavar/control.hpp"

namespace deltavar {

class HigherOrderProblem {
 public:
  /// `bc_a` / `bc_b` hold r optional blocks (empty = all free). Throws
  /// InsufficientPoints when N < 2r + 1, ErrorCode::Arity when L is not
  /// declared with (n, r, 0) and InvalidArgument on dimension mismatches.
  HigherOrderProblem(TimeScale scale, int n, int r, Expr lagrangian,
                     std::vector<std::optional<Vector>> bc_a = {},
                     std::vector<std::optional<Vector>> bc_b = {});

  const TimeScale& scale() const noexcept { return scale_; }
  int n() const noexcept { return n_; }
  int r() const noexcept { return r_; }
  const Expr& lagrangian() const noexcept { return lagrangian_; }
  const std::vector<std::optional<Vector>>& bc_a() const noexcept { return bc_a_; }
  const std::vector<std::optional<Vector>>& bc_b() const noexcept { return bc_b_; }
  /// Index of ρ^{r−1}(b).
  std::size_t end_index() const noexcept { return scale_.size() - static_cast<std::size_t>(r_); }

 private:
  TimeScale scale_;
  int n_;
  int r_;
  Expr lagrangian_;
  std::vector<std::optional<Vector>> bc_a_;
  std::vector<std::optional<Vector>> bc_b_;
};

/// A (nr × nr) and B (nr × n) of the integrator chain.
std::pair<Matrix, Matrix> integrator_chain(int n, int r);

ControlProblem reduce_to_control(const HigherOrderProblem& hp);

/// Σ μ L over [a, ρ^{r−1}(b)). Boundary blocks are not checked.
double evaluate_functional(const HigherOrderProblem& hp, const GridFunction& y);

/// Δ-derivative stack y, y^Δ, ..., y^{Δ^r}; entry j lives on T^{k^j}.
std::vector<GridFunction> derivative_stack(const HigherOrderProblem& hp, const GridFunction& y);

/// Partials L_{y^{Δ^j}}, j = 0..r, along y on the first N − r points; entry j
/// is (N − r) × n.
std::vector<Matrix> lagrangian_partials(const HigherOrderProblem& hp, const GridFunction& y);

struct CostateRecursion {
  std::vector<Matrix> psi_sigma;  // ψ^i(σ(t)), rows on the first N − r points
  Matrix constants;               // row i: c_i
  std::vector<Vector> psi_a;      // ψ^i(a)
  std::vector<Vector> psi_end;    // ψ^i(ρ^{r−1}(b))
};

/// ψ^0∘σ = −S[L_{y^0}] + c_0 and ψ^i∘σ = −S[L_{y^i} + ψ^{i−1}∘σ] + c_i, where
/// S[f](t) = ∫_a^{σ(t)} f. The constants are anchored at the terminal end
/// through ψ^{r−1}∘σ = −L_{y^{Δ^r}}.
CostateRecursion costate_recursion(const HigherOrderProblem& hp, const GridFunction& y);

struct HoElResidual {
  Matrix anchored;    // residual with constants from costate_recursion
  Matrix least_squares;  // residual with constants fitted per component
  Matrix d_anchored;  // row k: coefficient of S^k[1]
  Matrix d_least_squares;
  double max_anchored = 0.0;
  double max_least_squares = 0.0;
  double magnitude = 1.0;
  std::vector<double> checked_points;
  std::vector<double> unchecked_points;
  std::map<std::string, Vector> transversality;  // "a<i>" / "b<i>" → ψ^i at free blocks
};

/// Residual of L_{y^{Δ^r}} + Σ_i (−1)^{r−i} S^{r−i}[L_{y^{Δ^i}}] + Σ_k d_k S^k[1]
/// on T^{k^r}.
HoElResidual ho_el_residual(const HigherOrderProblem& hp, const GridFunction& y);

/// L_{y^{Δ^r}}^{Δ^r}(t) + Σ_i (−1)^{r−i} L_{y^{Δ^i}}^{Δ^i}(t + r − i) on the
/// first N − 2r points. Throws Domain unless the scale has unit spacing.
Matrix discrete_el_residual(const HigherOrderProblem& hp, const GridFunction& y);

/// max |Δ^j (S^{j−i}[f])(t) − f^{Δ^i}(t + j − i)| on a unit-spaced scale,
/// over the first N − j − 1 points (S truncates at b). Requires i < j < N − 1.
double shift_identity_residual(const GridFunction& f, std::size_t j, std::size_t i);

struct HigherOrderReport {
  Matrix stationarity;  // ψ^{r−1}(σ(t)) + L_{y^{Δ^r}}(t)
  Matrix recursion;     // solver costates minus costate_recursion
  HoElResidual el;
  std::vector<Certificate> checks;
  bool pass() const;
};

struct HigherOrderSolution {
  GridFunction y;
  std::vector<GridFunction> derivatives;
  std::vector<GridFunction> psi;  // ψ^0..ψ^{r−1} on the reduced scale
  ControlSolution reduced;
  HigherOrderReport report;
};

/// Solves the reduced Lagrange problem with ψ0 = 1 and reconstructs y on the
/// whole scale.
HigherOrderSolution solve_higher_order(const HigherOrderProblem& hp,
                                       const SolverOptions& opts = {});

/// Certificates for a candidate y (checker-only mode).
HigherOrderReport certify_higher_order(const HigherOrderProblem& hp, const GridFunction& y,
                                       const Tolerances& tol = {});

}  // namespace deltavar
