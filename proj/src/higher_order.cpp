#include "deltavar/higher_order.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deltavar/error.hpp"
#include "detail/linalg.hpp"

namespace deltavar {

HigherOrderProblem::HigherOrderProblem(TimeScale scale, int n, int r, Expr lagrangian,
                                       std::vector<std::optional<Vector>> bc_a,
                                       std::vector<std::optional<Vector>> bc_b)
    : scale_(std::move(scale)),
      n_(n),
      r_(r),
      lagrangian_(std::move(lagrangian)),
      bc_a_(std::move(bc_a)),
      bc_b_(std::move(bc_b)) {
  if (n < 1 || r < 1) throw Error(ErrorCode::InvalidArgument, "higher-order problem needs n, r >= 1");
  if (scale_.size() < static_cast<std::size_t>(2 * r + 1)) {
    throw Error(ErrorCode::InsufficientPoints,
                "an order-" + std::to_string(r) + " problem needs at least " +
                    std::to_string(2 * r + 1) + " points, got " + std::to_string(scale_.size()));
  }
  if (!(lagrangian_.arity() == Arity{n, r, 0})) {
    throw Error(ErrorCode::Arity, "higher-order Lagrangian must be declared with arity (n, r, 0)");
  }
  for (auto* b : {&bc_a_, &bc_b_}) {
    if (b->empty()) b->resize(static_cast<std::size_t>(r));
    if (static_cast<int>(b->size()) != r) {
      throw Error(ErrorCode::InvalidArgument, "expected r boundary blocks");
    }
    for (const auto& blk : *b) {
      if (blk && blk->size() != n) {
        throw Error(ErrorCode::InvalidArgument, "boundary block dimension does not match n");
      }
    }
  }
}

std::pair<Matrix, Matrix> integrator_chain(int n, int r) {
  Matrix A = Matrix::Zero(n * r, n * r);
  Matrix B = Matrix::Zero(n * r, n);
  for (int j = 0; j + 1 < r; ++j) A.block(j * n, (j + 1) * n, n, n).setIdentity();
  B.block((r - 1) * n, 0, n, n).setIdentity();
  return {A, B};
}

ControlProblem reduce_to_control(const HigherOrderProblem& hp) {
  const int n = hp.n(), r = hp.r();
  const Arity a{n * r, 0, n};
  NodePtr root = substitute(hp.lagrangian().root_ptr(), [n, r](const VarRef& v) -> NodePtr {
    if (v.kind == VarRef::Kind::Derivative) {
      if (v.order == r) return Node::variable({VarRef::Kind::Control, v.index, 0});
      return Node::variable({VarRef::Kind::State, v.order * n + v.index, 0});
    }
    return nullptr;
  });
  std::vector<Expr> phi;
  for (int j = 0; j < r; ++j) {
    for (int i = 0; i < n; ++i) {
      const VarRef next = j + 1 < r ? VarRef{VarRef::Kind::State, (j + 1) * n + i, 0}
                                    : VarRef{VarRef::Kind::Control, i, 0};
      phi.emplace_back(Node::variable(next), a);
    }
  }
  Boundary ba(static_cast<std::size_t>(n * r)), bb(static_cast<std::size_t>(n * r));
  for (int j = 0; j < r; ++j) {
    for (int i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(j * n + i);
      if (const auto& blk = hp.bc_a()[static_cast<std::size_t>(j)]) ba[idx] = (*blk)(i);
      if (const auto& blk = hp.bc_b()[static_cast<std::size_t>(j)]) bb[idx] = (*blk)(i);
    }
  }
  return ControlProblem(k_restriction(hp.scale(), static_cast<std::size_t>(r - 1)), n * r, n,
                        Expr(root, a), std::move(phi), std::move(ba), std::move(bb));
}

std::vector<GridFunction> derivative_stack(const HigherOrderProblem& hp, const GridFunction& y) {
  if (!(y.scale() == hp.scale()) || static_cast<int>(y.dim()) != hp.n()) {
    throw Error(ErrorCode::Domain, "trajectory does not match the problem's scale and dimension");
  }
  std::vector<GridFunction> out{y};
  for (int j = 1; j <= hp.r(); ++j) out.push_back(delta_derivative(out.back(), 1));
  return out;
}

double evaluate_functional(const HigherOrderProblem& hp, const GridFunction& y) {
  const auto stack = derivative_stack(hp, y);
  const VarLayout layout = hp.lagrangian().layout();
  std::vector<double> pt(layout.size(), 0.0);
  double J = 0.0;
  for (std::size_t k = 0; k < hp.end_index(); ++k) {
    pt[layout.time()] = hp.scale()[k];
    pt[layout.mu()] = hp.scale().mu(k);
    for (int j = 0; j <= hp.r(); ++j) {
      for (int i = 0; i < hp.n(); ++i) {
        pt[layout.derivative(i, j)] = stack[static_cast<std::size_t>(j)].values()(static_cast<Eigen::Index>(k), i);
      }
    }
    J += hp.scale().mu(k) * hp.lagrangian().value(pt);
  }
  return J;
}

std::vector<Matrix> lagrangian_partials(const HigherOrderProblem& hp, const GridFunction& y) {
  const auto stack = derivative_stack(hp, y);
  const int n = hp.n(), r = hp.r();
  const std::size_t K = hp.end_index();
  const VarLayout layout = hp.lagrangian().layout();
  std::vector<Matrix> P(static_cast<std::size_t>(r + 1), Matrix(static_cast<Eigen::Index>(K), n));
  std::vector<double> pt(layout.size(), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    pt[layout.time()] = hp.scale()[k];
    pt[layout.mu()] = hp.scale().mu(k);
    for (int j = 0; j <= r; ++j) {
      for (int i = 0; i < n; ++i) {
        pt[layout.derivative(i, j)] = stack[static_cast<std::size_t>(j)].values()(static_cast<Eigen::Index>(k), i);
      }
    }
    const Evaluation ev = hp.lagrangian().eval_with_partials(pt);
    for (int j = 0; j <= r; ++j) {
      for (int i = 0; i < n; ++i) {
        P[static_cast<std::size_t>(j)](static_cast<Eigen::Index>(k), i) = ev.partials[layout.derivative(i, j)];
      }
    }
  }
  return P;
}

namespace {

Matrix running(const TimeScale& ts, const Matrix& rows) { return running_sigma_integral(ts, rows); }

Matrix nested(const TimeScale& ts, Matrix rows, int times) {
  for (int k = 0; k < times; ++k) rows = running(ts, rows);
  return rows;
}

Matrix forward_diff(Matrix rows, std::size_t times) {
  for (std::size_t s = 0; s < times; ++s) {
    const Eigen::Index m = rows.rows() - 1;
    rows = (rows.bottomRows(m) - rows.topRows(m)).eval();
  }
  return rows;
}

double min_graininess(const TimeScale& ts) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) m = std::min(m, ts.mu(i));
  return m;
}

Matrix block_cols(const Matrix& M, int j, int n) { return M.middleCols(j * n, n); }

}  // namespace

CostateRecursion costate_recursion(const HigherOrderProblem& hp, const GridFunction& y) {
  const auto P = lagrangian_partials(hp, y);
  const int n = hp.n(), r = hp.r();
  const auto K = static_cast<Eigen::Index>(hp.end_index());
  const TimeScale& ts = hp.scale();
  const auto ru = static_cast<std::size_t>(r);

  // Terminal anchoring: ψ^{r−1}∘σ = −L_u, and each lower level follows from
  // ψ^j∘σ(t_k) − ψ^j∘σ(t_{k−1}) = −μ(t_k)(L_{y^j}(t_k) + ψ^{j−1}∘σ(t_k)).
  std::vector<Vector> end(ru);
  Matrix level = -P[ru];
  end[ru - 1] = level.row(K - 1).transpose();
  for (int j = r - 1; j >= 1; --j) {
    Matrix lower(K, n);
    lower.setZero();
    for (Eigen::Index k = r - j; k < K; ++k) {
      const double mu = ts.mu(static_cast<std::size_t>(k));
      lower.row(k) = -(level.row(k) - level.row(k - 1)) / mu - P[static_cast<std::size_t>(j)].row(k);
    }
    level = lower;
    end[static_cast<std::size_t>(j - 1)] = level.row(K - 1).transpose();
  }

  CostateRecursion out;
  out.constants.resize(r, n);
  Matrix prev = Matrix::Zero(K, n);
  for (int i = 0; i < r; ++i) {
    Matrix integrand = P[static_cast<std::size_t>(i)];
    if (i > 0) integrand += prev;
    const Matrix S = running(ts, integrand);
    const Vector c = end[static_cast<std::size_t>(i)] + S.row(K - 1).transpose();
    Matrix psi = (-S).rowwise() + c.transpose();
    out.constants.row(i) = c.transpose();
    out.psi_a.push_back(c);
    out.psi_end.push_back(psi.row(K - 1).transpose());
    out.psi_sigma.push_back(psi);
    prev = psi;
  }
  return out;
}

HoElResidual ho_el_residual(const HigherOrderProblem& hp, const GridFunction& y) {
  const auto P = lagrangian_partials(hp, y);
  const int n = hp.n(), r = hp.r();
  const auto K = static_cast<Eigen::Index>(hp.end_index());
  const TimeScale& ts = hp.scale();
  const auto ru = static_cast<std::size_t>(r);

  HoElResidual out;
  Matrix base = P[ru];
  double mag = 1.0 + detail::max_abs(P[ru]);
  for (int i = 0; i < r; ++i) {
    const Matrix term = nested(ts, P[static_cast<std::size_t>(i)], r - i);
    base += ((r - i) % 2 == 0 ? 1.0 : -1.0) * term;
    mag += detail::max_abs(term);
  }
  Matrix basis(K, r);  // column k: S^k[1]
  Matrix ones = Matrix::Ones(K, 1);
  for (int k = 0; k < r; ++k) {
    basis.col(k) = nested(ts, ones, k).col(0);
  }

  const CostateRecursion rec = costate_recursion(hp, y);
  out.d_anchored.resize(r, n);
  for (int k = 0; k < r; ++k) {
    out.d_anchored.row(k) = (k % 2 == 0 ? 1.0 : -1.0) * rec.constants.row(r - 1 - k);
  }
  out.anchored = base + basis * out.d_anchored;
  out.d_least_squares = -basis.colPivHouseholderQr().solve(base);
  out.least_squares = base + basis * out.d_least_squares;
  for (int k = 0; k < r; ++k) {
    mag += out.d_anchored.row(k).cwiseAbs().maxCoeff() * basis.col(k).cwiseAbs().maxCoeff();
  }
  out.max_anchored = detail::max_abs(out.anchored);
  out.max_least_squares = detail::max_abs(out.least_squares);
  out.magnitude = mag;
  for (Eigen::Index k = 0; k < K; ++k) out.checked_points.push_back(ts[static_cast<std::size_t>(k)]);
  for (std::size_t k = static_cast<std::size_t>(K); k < ts.size(); ++k) out.unchecked_points.push_back(ts[k]);
  for (int i = 0; i < r; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    if (!hp.bc_a()[iu]) out.transversality["a" + std::to_string(i)] = rec.psi_a[iu];
    if (!hp.bc_b()[iu]) out.transversality["b" + std::to_string(i)] = rec.psi_end[iu];
  }
  return out;
}

Matrix discrete_el_residual(const HigherOrderProblem& hp, const GridFunction& y) {
  if (!hp.scale().unit_spaced()) {
    throw Error(ErrorCode::Domain, "the discrete Euler-Lagrange checker needs unit spacing");
  }
  const auto P = lagrangian_partials(hp, y);
  const int r = hp.r();
  const auto ru = static_cast<std::size_t>(r);
  const Eigen::Index M = static_cast<Eigen::Index>(hp.scale().size()) - 2 * r;
  Matrix res = forward_diff(P[ru], ru).topRows(M);
  for (int i = 0; i < r; ++i) {
    const Matrix d = forward_diff(P[static_cast<std::size_t>(i)], static_cast<std::size_t>(i));
    res += ((r - i) % 2 == 0 ? 1.0 : -1.0) * d.middleRows(r - i, M);
  }
  return res;
}

double shift_identity_residual(const GridFunction& f, std::size_t j, std::size_t i) {
  const TimeScale& ts = f.scale();
  if (!ts.unit_spaced()) throw Error(ErrorCode::Domain, "the shift identity needs unit spacing");
  if (i >= j || j + 1 >= ts.size()) {
    throw Error(ErrorCode::InvalidArgument, "shift identity needs i < j < N - 1");
  }
  const Matrix S = nested(ts, f.values(), static_cast<int>(j - i));
  const Matrix lhs = forward_diff(S, j);
  const Matrix rhs = forward_diff(f.values(), i);
  const auto M = static_cast<Eigen::Index>(ts.size() - j - 1);
  return detail::max_abs(lhs.topRows(M) - rhs.middleRows(static_cast<Eigen::Index>(j - i), M));
}

bool HigherOrderReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Certificate& c) { return c.pass; });
}

namespace {

void add_el_checks(HigherOrderReport& rep, double tol) {
  const HoElResidual& el = rep.el;
  const double t = tol * el.magnitude;
  rep.checks.push_back({"euler_lagrange_final", el.max_anchored, t, el.max_anchored <= t});
  rep.checks.push_back(
      {"euler_lagrange_final_least_squares", el.max_least_squares, t, el.max_least_squares <= t});
  for (const auto& [key, v] : el.transversality) {
    const double res = v.cwiseAbs().maxCoeff();
    rep.checks.push_back({"transversality_" + key, res, t, res <= t});
  }
}

}  // namespace

HigherOrderReport certify_higher_order(const HigherOrderProblem& hp, const GridFunction& y,
                                       const Tolerances& tol) {
  HigherOrderReport rep;
  rep.el = ho_el_residual(hp, y);
  rep.stationarity = rep.el.anchored;
  const double amp = std::pow(std::max(1.0, 1.0 / min_graininess(hp.scale())), hp.r() - 1);
  add_el_checks(rep, tol.certificate * amp);
  return rep;
}

HigherOrderSolution solve_higher_order(const HigherOrderProblem& hp, const SolverOptions& opts) {
  const int n = hp.n(), r = hp.r();
  const ControlProblem cp = reduce_to_control(hp);
  ControlSolution red = solve_lagrange(cp, opts);

  const TimeScale& ts = hp.scale();
  const std::size_t N = ts.size();
  const std::size_t E = hp.end_index();
  Matrix Y(static_cast<Eigen::Index>(N), n);
  const Matrix& X = red.y.values();
  for (std::size_t k = 0; k <= E; ++k) {
    Y.row(static_cast<Eigen::Index>(k)) = X.row(static_cast<Eigen::Index>(k)).head(n);
  }
  // Continue past ρ^{r−1}(b) with y^{Δ^j}(σ(t)) = y^{Δ^j}(t) + μ(t) y^{Δ^{j+1}}(t).
  const Vector last = X.row(static_cast<Eigen::Index>(E)).transpose();
  Matrix D = Eigen::Map<const Matrix>(last.data(), n, r);
  for (std::size_t s = 1; E + s < N; ++s) {
    const double mu = ts.mu(E + s - 1);
    for (int j = 0; j < r - static_cast<int>(s); ++j) D.col(j) += mu * D.col(j + 1);
    Y.row(static_cast<Eigen::Index>(E + s)) = D.col(0).transpose();
  }
  GridFunction y(ts, Y);

  std::vector<GridFunction> psi;
  for (int j = 0; j < r; ++j) {
    psi.emplace_back(cp.scale(), block_cols(red.costate.psi.values(), j, n));
  }

  HigherOrderReport rep;
  rep.el = ho_el_residual(hp, y);
  const auto P = lagrangian_partials(hp, y);
  const auto K = static_cast<Eigen::Index>(E);
  rep.stationarity = psi[static_cast<std::size_t>(r - 1)].values().middleRows(1, K) + P[static_cast<std::size_t>(r)];
  const CostateRecursion rec = costate_recursion(hp, y);
  rep.recursion.resize(K, n * r);
  for (int j = 0; j < r; ++j) {
    rep.recursion.middleCols(j * n, n) =
        psi[static_cast<std::size_t>(j)].values().middleRows(1, K) - rec.psi_sigma[static_cast<std::size_t>(j)];
  }
  const double amp = std::pow(std::max(1.0, 1.0 / min_graininess(ts)), r - 1);
  const double base_tol = opts.tol.certificate * rep.el.magnitude;
  const double stat = detail::max_abs(rep.stationarity);
  rep.checks.push_back({"stationarity", stat, base_tol, stat <= base_tol});
  const double recd = detail::max_abs(rep.recursion);
  rep.checks.push_back({"costate_recursion", recd, base_tol * amp, recd <= base_tol * amp});
  add_el_checks(rep, opts.tol.certificate * amp);
  for (const Certificate& c : red.report.checks) rep.checks.push_back({"reduced_" + c.name, c.residual, c.tolerance, c.pass});

  return {std::move(y), derivative_stack(hp, GridFunction(ts, Y)), std::move(psi), std::move(red),
          std::move(rep)};
}

}  // namespace deltavar
