#pragma once

// Independent verification back-ends: exhaustive grid search over the exact
// transcriptions, transcription KKT multipliers and finite-difference
// gradient checks.

#include <cstdint>
#include <vector>

#include "deltavar/control.hpp"
#include "deltavar/expr.hpp"
#include "deltavar/higher_order.hpp"
#include "deltavar/variational.hpp"

namespace deltavar {

struct GridAxis {
  double lo = 0.0;
  double hi = 0.0;
  double step = 1.0;

  /// Number of grid values lo, lo + step, ..., <= hi.
  std::uint64_t count() const;
  double value(std::uint64_t k) const { return lo + static_cast<double>(k) * step; }
};

struct GridSearchSpec {
  std::vector<GridAxis> axes;  // one per unknown; a single axis is reused for all
  std::uint64_t budget = 10'000'000;
  unsigned threads = 0;  // 0: DELTAVAR_THREADS or the hardware concurrency
};

struct GridSearchResult {
  std::vector<double> argmin;       // unknown values
  std::vector<std::uint64_t> index; // grid indices
  double objective = 0.0;
  std::uint64_t evaluated = 0;
  std::uint64_t feasible = 0;
};

/// Unknowns: free values of y point by point (interior points plus free
/// endpoints, component-minor).
GridSearchResult brute_force_minimize(const BasicProblem& p, const GridSearchSpec& spec);

/// Unknowns: u on T^k point by point. The state is simulated forward from
/// y(a) (every component must be fixed); assignments whose simulated y(b)
/// misses a fixed component by more than feasibility_tol·(1 + |y_b|) are
/// skipped. Throws Infeasible when no grid point is feasible.
GridSearchResult brute_force_minimize(const ControlProblem& p, const GridSearchSpec& spec,
                                      double feasibility_tol = 1e-9);

/// Unknowns: y at the indices not pinned by fixed boundary blocks (block i at
/// a pins y(t_i), block i at ρ^{r−1}(b) pins y(t_{N−r+i})).
GridSearchResult brute_force_minimize(const HigherOrderProblem& hp, const GridSearchSpec& spec);

/// The trajectory a higher-order grid assignment stands for.
GridFunction higher_order_trajectory(const HigherOrderProblem& hp, const std::vector<double>& free);

/// Indices of y that the grid search for `hp` varies.
std::vector<std::size_t> higher_order_free_indices(const HigherOrderProblem& hp);

struct KktMultipliers {
  bool feasible = false;
  double constraint_residual = 0.0;
  double stationarity_residual = 0.0;  // ‖∇f + Jᵀλ‖∞
  Matrix multipliers;                  // rows on T^k; empty when infeasible
};

/// Least-squares solution of Jᵀλ = −∇f for the transcription at (y, u).
/// Throws Degenerate when the constraint Jacobian is rank deficient.
KktMultipliers kkt_multipliers(const ControlProblem& p, const GridFunction& y,
                               const GridFunction& u, double feasibility_tol = 1e-8);

/// max over variables of |AD − central FD| / max(1, |AD|). Throws
/// InvalidArgument unless h > 0.
double finite_diff_check(const Expr& e, const std::vector<double>& point, double h);

}  // namespace deltavar
