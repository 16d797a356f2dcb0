#pragma once

// The Lagrange problem
//
//   minimize  Σ_{t ∈ T^k} μ(t) L(t, y(t), u(t))
//   subject to  y^Δ(t) = φ(t, y(t), u(t)),  t ∈ T^k,
//
// with optional boundary values per state component. Expressions use arity
// (n, r = 0, m): variables t, mu, y[0..n), u[0..m).
//
// Costate convention: ψ is stored as an n-vector per point and multiplies
// from the left, so (ψ^σ φ_y)_k = Σ_l ψ^σ_l ∂φ_l/∂y_k. The transcription's
// dynamics constraint at t is y^Δ(t) − φ(t, y(t), u(t)) = 0 and its
// multiplier λ(t) relates to the costate by λ(t) = −μ(t) ψ(σ(t)).

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deltavar/expr.hpp"
#include "deltavar/timescale.hpp"
#include "deltavar/variational.hpp"

namespace deltavar {

/// Boundary data per state component; std::nullopt marks a free component.
using Boundary = std::vector<std::optional<double>>;

/// All components fixed to v, or all free when v is absent.
Boundary boundary_from(const std::optional<Vector>& v, int n);

class ControlProblem {
 public:
  /// Throws InvalidArgument on dimension mismatches or m > n, and
  /// ErrorCode::Arity when an expression is not declared with (n, 0, m).
  /// Empty boundary vectors mean "all free".
  ControlProblem(TimeScale scale, int n, int m, Expr lagrangian, std::vector<Expr> phi,
                 Boundary bc_a = {}, Boundary bc_b = {});

  const TimeScale& scale() const noexcept { return scale_; }
  int n() const noexcept { return n_; }
  int m() const noexcept { return m_; }
  const Expr& lagrangian() const noexcept { return lagrangian_; }
  const std::vector<Expr>& phi() const noexcept { return phi_; }
  const Boundary& bc_a() const noexcept { return bc_a_; }
  const Boundary& bc_b() const noexcept { return bc_b_; }
  bool a_free(int k) const { return !bc_a_[static_cast<std::size_t>(k)]; }
  bool b_free(int k) const { return !bc_b_[static_cast<std::size_t>(k)]; }

 private:
  TimeScale scale_;
  int n_;
  int m_;
  Expr lagrangian_;
  std::vector<Expr> phi_;
  Boundary bc_a_;
  Boundary bc_b_;
};

/// The basic problem written as a Lagrange problem with φ = u (m = n). A
/// sigma-form Lagrangian is rewritten with y^σ = y + μ u.
ControlProblem embed_basic(const BasicProblem& p);

struct CostateTrajectory {
  double psi0 = 1.0;
  GridFunction psi;  // n-vector per point of the whole scale
};

struct HamiltonianValue {
  double H = 0.0;
  Vector H_y;
  Vector H_u;
  Vector H_psi_sigma;  // = φ
};

/// H = ψ0 L + ψ^σ·φ and its partials at point index i of the scale (which
/// binds t and mu).
HamiltonianValue hamiltonian(const ControlProblem& p, std::size_t i, const Vector& y,
                             const Vector& u, double psi0, const Vector& psi_sigma);

/// Backward recursion ψ(t) = ψ(σ(t)) + μ(t) H_y(t, y, u, ψ0, ψ(σ(t))) from
/// ψ(b) = terminal.
CostateTrajectory costate_sweep(const ControlProblem& p, const GridFunction& y,
                                const GridFunction& u, double psi0, const Vector& terminal);

struct WmpReport {
  Matrix dynamics_y;    // y^Δ − φ on T^k
  Matrix dynamics_psi;  // ψ^Δ + H_y on T^k
  Matrix stationarity;  // H_u on T^k
  std::map<std::string, Vector> transversality;  // ψ(a) / ψ(b) on free components
  std::vector<Certificate> checks;
  double magnitude = 1.0;

  bool pass() const;
};

/// Residuals of the weak maximum principle. Tolerances are rel_tol times a
/// magnitude; equations that are linear in (ψ0, ψ) are also scaled by
/// max(|ψ0|, ‖ψ‖∞), so verdicts do not change when (ψ0, ψ) is scaled.
WmpReport wmp_residuals(const ControlProblem& p, const GridFunction& y, const GridFunction& u,
                        const CostateTrajectory& costate, double rel_tol = 1e-8);

struct ControlSolution {
  GridFunction y;
  GridFunction u;  // on T^k
  CostateTrajectory costate;
  Matrix multipliers;  // λ(t) per dynamics constraint, rows on T^k
  WmpReport report;
  bool hessian_positive_definite = false;  // reduced Hessian on the constraint tangent space
  int iterations = 0;
  std::string method;
};

/// Direct transcription. Linear φ and quadratic L give an equality-constrained
/// QP solved by one KKT system; otherwise Newton iterations on the KKT
/// conditions. Throws Degenerate on a singular KKT matrix,
/// InsufficientPoints when N < 3, and NonConvergenceError with the best
/// iterate otherwise.
ControlSolution solve_lagrange(const ControlProblem& p, const SolverOptions& opts = {});

/// Basis of nontrivial costates ψ solving the abnormal system along (y, u),
/// each scaled to ‖ψ‖∞ = 1. Empty means no abnormal extremal through it.
std::vector<GridFunction> detect_abnormal(const ControlProblem& p, const GridFunction& y,
                                          const GridFunction& u);

/// Adds the state y_{n} with y_{n}^Δ = g, y_{n}(a) = 0 and y_{n}(b) = beta.
/// `g` is declared with arity (n, 0, m).
ControlProblem isoperimetric_reduce(const ControlProblem& p, const Expr& g, double beta);

/// The transcription at (y, u). Unknown order: the free state values point
/// by point (component-minor), then u on T^k point by point.
struct Transcription {
  double objective = 0.0;
  Vector grad;        // ∇ of Σ μ L over the unknowns
  Vector constraints; // (y^Δ − φ) stacked point by point, length n(N − 1)
  Matrix jacobian;    // ∂constraints / ∂unknowns
};

Transcription transcribe(const ControlProblem& p, const GridFunction& y, const GridFunction& u);

}  // namespace deltavar
