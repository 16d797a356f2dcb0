#include "deltavar/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deltavar/error.hpp"
#include "detail/linalg.hpp"

namespace deltavar {

Boundary boundary_from(const std::optional<Vector>& v, int n) {
  Boundary b(static_cast<std::size_t>(n));
  if (v) {
    for (int k = 0; k < n; ++k) b[static_cast<std::size_t>(k)] = (*v)(k);
  }
  return b;
}

ControlProblem::ControlProblem(TimeScale scale, int n, int m, Expr lagrangian,
                               std::vector<Expr> phi, Boundary bc_a, Boundary bc_b)
    : scale_(std::move(scale)),
      n_(n),
      m_(m),
      lagrangian_(std::move(lagrangian)),
      phi_(std::move(phi)),
      bc_a_(std::move(bc_a)),
      bc_b_(std::move(bc_b)) {
  if (n < 1 || m < 0 || m > n) {
    throw Error(ErrorCode::InvalidArgument, "control problem needs n >= 1 and 0 <= m <= n");
  }
  if (static_cast<int>(phi_.size()) != n) {
    throw Error(ErrorCode::InvalidArgument, "phi must have exactly n components");
  }
  const Arity want{n, 0, m};
  if (!(lagrangian_.arity() == want)) {
    throw Error(ErrorCode::Arity, "control Lagrangian must be declared with arity (n, 0, m)");
  }
  for (const Expr& e : phi_) {
    if (!(e.arity() == want)) {
      throw Error(ErrorCode::Arity, "dynamics must be declared with arity (n, 0, m)");
    }
  }
  for (Boundary* b : {&bc_a_, &bc_b_}) {
    if (b->empty()) b->resize(static_cast<std::size_t>(n));
    if (static_cast<int>(b->size()) != n) {
      throw Error(ErrorCode::InvalidArgument, "boundary data dimension does not match n");
    }
  }
}

ControlProblem embed_basic(const BasicProblem& p) {
  const int n = p.n();
  const bool sigma = p.form() == Form::Sigma;
  NodePtr root = substitute(p.lagrangian().root_ptr(), [sigma](const VarRef& v) -> NodePtr {
    if (v.kind == VarRef::Kind::Derivative) {
      return Node::variable({VarRef::Kind::Control, v.index, 0});
    }
    if (sigma && v.kind == VarRef::Kind::State) {
      return Node::binary(Node::Op::Add, Node::variable(v),
                          Node::binary(Node::Op::Mul, Node::variable({VarRef::Kind::Mu, 0, 0}),
                                       Node::variable({VarRef::Kind::Control, v.index, 0})));
    }
    return nullptr;
  });
  const Arity a{n, 0, n};
  std::vector<Expr> phi;
  for (int k = 0; k < n; ++k) phi.emplace_back(Node::variable({VarRef::Kind::Control, k, 0}), a);
  return ControlProblem(p.scale(), n, n, Expr(root, a), std::move(phi),
                        boundary_from(p.bc_a(), n), boundary_from(p.bc_b(), n));
}

namespace {

std::vector<double> eval_point(const ControlProblem& p, std::size_t i, const Vector& y,
                               const Vector& u) {
  const VarLayout layout = p.lagrangian().layout();
  std::vector<double> pt(layout.size(), 0.0);
  pt[layout.time()] = p.scale()[i];
  pt[layout.mu()] = p.scale().mu(i);
  for (int k = 0; k < p.n(); ++k) pt[layout.state(k)] = y(k);
  for (int l = 0; l < p.m(); ++l) pt[layout.control(l)] = u(l);
  return pt;
}

// L and φ with their partials at one point.
struct LocalEval {
  double L = 0.0;
  Vector L_y, L_u;
  Vector phi;
  Matrix phi_y, phi_u;  // row l: ∂φ_l
};

LocalEval local_eval(const ControlProblem& p, std::size_t i, const Vector& y, const Vector& u) {
  const VarLayout layout = p.lagrangian().layout();
  const int n = p.n(), m = p.m();
  const auto pt = eval_point(p, i, y, u);
  LocalEval e;
  const Evaluation le = p.lagrangian().eval_with_partials(pt);
  e.L = le.value;
  e.L_y.resize(n);
  e.L_u.resize(m);
  for (int k = 0; k < n; ++k) e.L_y(k) = le.partials[layout.state(k)];
  for (int l = 0; l < m; ++l) e.L_u(l) = le.partials[layout.control(l)];
  e.phi.resize(n);
  e.phi_y.resize(n, n);
  e.phi_u.resize(n, m);
  for (int j = 0; j < n; ++j) {
    const Evaluation pe = p.phi()[static_cast<std::size_t>(j)].eval_with_partials(pt);
    e.phi(j) = pe.value;
    for (int k = 0; k < n; ++k) e.phi_y(j, k) = pe.partials[layout.state(k)];
    for (int l = 0; l < m; ++l) e.phi_u(j, l) = pe.partials[layout.control(l)];
  }
  return e;
}

Vector row(const Matrix& M, std::size_t i) {
  return M.row(static_cast<Eigen::Index>(i)).transpose();
}

void check_shapes(const ControlProblem& p, const GridFunction& y, const GridFunction& u) {
  if (!(y.scale() == p.scale())) {
    throw Error(ErrorCode::Domain, "state trajectory is not on the problem's time scale");
  }
  if (u.size() + 1 != p.scale().size()) {
    throw Error(ErrorCode::Domain, "control must be given on T^k");
  }
  if (static_cast<int>(y.dim()) != p.n() || static_cast<int>(u.dim()) != p.m()) {
    throw Error(ErrorCode::InvalidArgument, "trajectory dimensions do not match (n, m)");
  }
}

double min_graininess(const TimeScale& ts) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) m = std::min(m, ts.mu(i));
  return m;
}

// Unknown bookkeeping: free state values, then controls.
struct Layout {
  std::vector<int> y_index;  // point * n + k -> unknown or -1
  int y_count = 0;
  int u_offset = 0;
  int count = 0;
  int n = 0, m = 0;
  std::size_t N = 0;

  int u_index(std::size_t i, int l) const { return u_offset + static_cast<int>(i) * m + l; }
  int y_at(std::size_t i, int k) const { return y_index[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(k)]; }
};

Layout make_layout(const ControlProblem& p) {
  Layout L;
  L.n = p.n();
  L.m = p.m();
  L.N = p.scale().size();
  L.y_index.assign(L.N * static_cast<std::size_t>(L.n), -1);
  for (std::size_t i = 0; i < L.N; ++i) {
    for (int k = 0; k < L.n; ++k) {
      const bool fixed = (i == 0 && !p.a_free(k)) || (i == L.N - 1 && !p.b_free(k));
      if (!fixed) L.y_index[i * static_cast<std::size_t>(L.n) + static_cast<std::size_t>(k)] = L.y_count++;
    }
  }
  L.u_offset = L.y_count;
  L.count = L.y_count + static_cast<int>(L.N - 1) * L.m;
  return L;
}

struct State {
  Matrix Y;  // N × n
  Matrix U;  // (N−1) × m
};

Vector gather(const Layout& L, const State& s) {
  Vector z(L.count);
  for (std::size_t i = 0; i < L.N; ++i) {
    for (int k = 0; k < L.n; ++k) {
      const int j = L.y_at(i, k);
      if (j >= 0) z(j) = s.Y(static_cast<Eigen::Index>(i), k);
    }
  }
  for (std::size_t i = 0; i + 1 < L.N; ++i) {
    for (int l = 0; l < L.m; ++l) z(L.u_index(i, l)) = s.U(static_cast<Eigen::Index>(i), l);
  }
  return z;
}

void scatter(const Layout& L, const Vector& z, State& s) {
  for (std::size_t i = 0; i < L.N; ++i) {
    for (int k = 0; k < L.n; ++k) {
      const int j = L.y_at(i, k);
      if (j >= 0) s.Y(static_cast<Eigen::Index>(i), k) = z(j);
    }
  }
  for (std::size_t i = 0; i + 1 < L.N; ++i) {
    for (int l = 0; l < L.m; ++l) s.U(static_cast<Eigen::Index>(i), l) = z(L.u_index(i, l));
  }
}

Transcription transcribe_state(const ControlProblem& p, const Layout& L, const State& s) {
  const int n = L.n, m = L.m;
  Transcription t;
  t.grad = Vector::Zero(L.count);
  t.constraints = Vector::Zero(static_cast<Eigen::Index>(L.N - 1) * n);
  t.jacobian = Matrix::Zero(t.constraints.size(), L.count);
  for (std::size_t i = 0; i + 1 < L.N; ++i) {
    const double mu = p.scale().mu(i);
    const LocalEval e = local_eval(p, i, row(s.Y, i), row(s.U, i));
    t.objective += mu * e.L;
    for (int k = 0; k < n; ++k) {
      const int j = L.y_at(i, k);
      if (j >= 0) t.grad(j) += mu * e.L_y(k);
    }
    for (int l = 0; l < m; ++l) t.grad(L.u_index(i, l)) += mu * e.L_u(l);
    for (int c = 0; c < n; ++c) {
      const Eigen::Index r = static_cast<Eigen::Index>(i) * n + c;
      const auto ii = static_cast<Eigen::Index>(i);
      t.constraints(r) = (s.Y(ii + 1, c) - s.Y(ii, c)) / mu - e.phi(c);
      for (int k = 0; k < n; ++k) {
        const int j0 = L.y_at(i, k);
        if (j0 >= 0) t.jacobian(r, j0) += (k == c ? -1.0 / mu : 0.0) - e.phi_y(c, k);
      }
      const int j1 = L.y_at(i + 1, c);
      if (j1 >= 0) t.jacobian(r, j1) += 1.0 / mu;
      for (int l = 0; l < m; ++l) t.jacobian(r, L.u_index(i, l)) -= e.phi_u(c, l);
    }
  }
  return t;
}

// Gradient over (y_i, u_i) of μ L − λ_i·φ, the only nonlinear part of the
// local Lagrangian term.
Vector local_lagrangian_grad(const ControlProblem& p, std::size_t i, const Vector& y,
                             const Vector& u, const Vector& lambda_i) {
  const int n = p.n(), m = p.m();
  const double mu = p.scale().mu(i);
  const LocalEval e = local_eval(p, i, y, u);
  Vector g(n + m);
  g.head(n) = mu * e.L_y - e.phi_y.transpose() * lambda_i;
  g.tail(m) = mu * e.L_u - e.phi_u.transpose() * lambda_i;
  return g;
}

Matrix lagrangian_hessian(const ControlProblem& p, const Layout& L, const State& s,
                          const Vector& lambda, double rel_step) {
  const int n = L.n, m = L.m;
  Matrix H = Matrix::Zero(L.count, L.count);
  for (std::size_t i = 0; i + 1 < L.N; ++i) {
    const Vector lam = lambda.segment(static_cast<Eigen::Index>(i) * n, n);
    Vector y = row(s.Y, i), u = row(s.U, i);
    auto unknown = [&](int v) { return v < n ? L.y_at(i, v) : L.u_index(i, v - n); };
    for (int v = 0; v < n + m; ++v) {
      const int col = unknown(v);
      if (col < 0) continue;
      double& x = v < n ? y(v) : u(v - n);
      const double x0 = x;
      const double h = rel_step * (1.0 + std::abs(x0));
      x = x0 + h;
      const Vector gp = local_lagrangian_grad(p, i, y, u, lam);
      x = x0 - h;
      const Vector gm = local_lagrangian_grad(p, i, y, u, lam);
      x = x0;
      const Vector d = (gp - gm) / (2.0 * h);
      for (int w = 0; w < n + m; ++w) {
        const int r = unknown(w);
        if (r >= 0) H(r, col) += d(w);
      }
    }
  }
  return 0.5 * (H + H.transpose());
}

bool is_qp(const ControlProblem& p) {
  const int dl = p.lagrangian().polynomial_degree();
  if (dl < 0 || dl > 2) return false;
  return std::all_of(p.phi().begin(), p.phi().end(), [](const Expr& e) {
    const int d = e.polynomial_degree();
    return d >= 0 && d <= 1;
  });
}

State initial_state(const ControlProblem& p) {
  const std::size_t N = p.scale().size();
  const int n = p.n();
  State s{Matrix::Zero(static_cast<Eigen::Index>(N), n), Matrix::Zero(static_cast<Eigen::Index>(N - 1), p.m())};
  for (int k = 0; k < n; ++k) {
    const auto& a = p.bc_a()[static_cast<std::size_t>(k)];
    const auto& b = p.bc_b()[static_cast<std::size_t>(k)];
    const double ya = a ? *a : (b ? *b : 0.0);
    const double yb = b ? *b : ya;
    for (std::size_t i = 0; i < N; ++i) {
      const double w = (p.scale()[i] - p.scale().front()) / (p.scale().back() - p.scale().front());
      s.Y(static_cast<Eigen::Index>(i), k) = (1.0 - w) * ya + w * yb;
    }
  }
  return s;
}

double inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

HamiltonianValue hamiltonian(const ControlProblem& p, std::size_t i, const Vector& y,
                             const Vector& u, double psi0, const Vector& psi_sigma) {
  const LocalEval e = local_eval(p, i, y, u);
  HamiltonianValue h;
  h.H = psi0 * e.L + psi_sigma.dot(e.phi);
  h.H_y = psi0 * e.L_y + e.phi_y.transpose() * psi_sigma;
  h.H_u = psi0 * e.L_u + e.phi_u.transpose() * psi_sigma;
  h.H_psi_sigma = e.phi;
  return h;
}

CostateTrajectory costate_sweep(const ControlProblem& p, const GridFunction& y,
                                const GridFunction& u, double psi0, const Vector& terminal) {
  check_shapes(p, y, u);
  const std::size_t N = p.scale().size();
  Matrix psi(static_cast<Eigen::Index>(N), p.n());
  psi.row(static_cast<Eigen::Index>(N - 1)) = terminal.transpose();
  for (std::size_t i = N - 1; i-- > 0;) {
    const Vector next = row(psi, i + 1);
    const HamiltonianValue h = hamiltonian(p, i, y.at(i), u.at(i), psi0, next);
    psi.row(static_cast<Eigen::Index>(i)) = (next + p.scale().mu(i) * h.H_y).transpose();
  }
  return {psi0, GridFunction(p.scale(), psi)};
}

bool WmpReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Certificate& c) { return c.pass; });
}

WmpReport wmp_residuals(const ControlProblem& p, const GridFunction& y, const GridFunction& u,
                        const CostateTrajectory& costate, double rel_tol) {
  check_shapes(p, y, u);
  const std::size_t N = p.scale().size();
  const int n = p.n(), m = p.m();
  const Matrix& psi = costate.psi.values();
  const auto K = static_cast<Eigen::Index>(N - 1);
  WmpReport r;
  r.dynamics_y.resize(K, n);
  r.dynamics_psi.resize(K, n);
  r.stationarity.resize(K, m);
  double mag = 1.0;
  for (std::size_t i = 0; i + 1 < N; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double mu = p.scale().mu(i);
    const LocalEval e = local_eval(p, i, y.at(i), u.at(i));
    const Vector psi_s = row(psi, i + 1);
    const Vector dy = (row(y.values(), i + 1) - y.at(i)) / mu;
    r.dynamics_y.row(ii) = (dy - e.phi).transpose();
    const Vector H_y = costate.psi0 * e.L_y + e.phi_y.transpose() * psi_s;
    const Vector H_u = costate.psi0 * e.L_u + e.phi_u.transpose() * psi_s;
    r.dynamics_psi.row(ii) = ((psi_s - row(psi, i)) / mu + H_y).transpose();
    r.stationarity.row(ii) = H_u.transpose();
    mag = std::max({mag, 1.0 + inf_norm(e.L_y), 1.0 + inf_norm(e.L_u), 1.0 + inf_norm(e.phi),
                    1.0 + detail::max_abs(e.phi_y), 1.0 + detail::max_abs(e.phi_u),
                    1.0 + inf_norm(dy)});
  }
  r.magnitude = mag;
  double scale = std::max(std::abs(costate.psi0), detail::max_abs(psi));
  const bool nontrivial = scale > 0.0;
  if (!nontrivial) scale = 1.0;
  const double inv_mu = std::max(1.0, 1.0 / min_graininess(p.scale()));

  Vector ta(n), tb(n);
  int na = 0, nb = 0;
  for (int k = 0; k < n; ++k) {
    if (p.a_free(k)) ta(na++) = psi(0, k);
    if (p.b_free(k)) tb(nb++) = psi(K, k);
  }
  if (na) r.transversality["a"] = ta.head(na);
  if (nb) r.transversality["b"] = tb.head(nb);

  auto add = [&](const std::string& name, double res, double tol) {
    r.checks.push_back({name, res, tol, res <= tol});
  };
  add("state_dynamics", detail::max_abs(r.dynamics_y), rel_tol * mag * inv_mu);
  add("costate_dynamics", detail::max_abs(r.dynamics_psi), rel_tol * mag * scale * inv_mu);
  add("stationarity", detail::max_abs(r.stationarity), rel_tol * mag * scale);
  for (const auto& [end, v] : r.transversality) {
    add("transversality_" + end, inf_norm(v), rel_tol * mag * scale);
  }
  r.checks.push_back({"nontrivial_multipliers", nontrivial ? 0.0 : 1.0, 0.0, nontrivial});
  return r;
}

Transcription transcribe(const ControlProblem& p, const GridFunction& y, const GridFunction& u) {
  check_shapes(p, y, u);
  const Layout L = make_layout(p);
  return transcribe_state(p, L, State{y.values(), u.values()});
}

ControlSolution solve_lagrange(const ControlProblem& p, const SolverOptions& opts) {
  const std::size_t N = p.scale().size();
  if (N < 3) {
    throw Error(ErrorCode::InsufficientPoints, "the Lagrange problem needs at least 3 points");
  }
  const int n = p.n();
  const Layout L = make_layout(p);
  const bool qp = is_qp(p);
  const double rel_step = qp ? 1.0 : 1e-5;
  const Eigen::Index nc = static_cast<Eigen::Index>(N - 1) * n;

  State s = initial_state(p);
  Vector z = gather(L, s);
  Vector lambda = Vector::Zero(nc);
  Transcription t = transcribe_state(p, L, s);
  auto kkt_residual = [&](const Transcription& tr, const Vector& lam) {
    Vector r(L.count + nc);
    r.head(L.count) = tr.grad + tr.jacobian.transpose() * lam;
    r.tail(nc) = tr.constraints;
    return r;
  };
  auto magnitude = [&](const Transcription& tr) {
    return 1.0 + std::max(inf_norm(tr.grad), detail::max_abs(tr.jacobian));
  };

  Vector best_z = z;
  double best_res = std::numeric_limits<double>::infinity();
  bool converged = false;
  int it = 0;
  for (; it < opts.max_iter; ++it) {
    const Vector res = kkt_residual(t, lambda);
    const double rn = inf_norm(res);
    if (rn < best_res) {
      best_res = rn;
      best_z = z;
    }
    if (rn <= 1e-13 * magnitude(t)) {
      converged = true;
      break;
    }
    const Matrix H = lagrangian_hessian(p, L, s, lambda, rel_step);
    Matrix K = Matrix::Zero(L.count + nc, L.count + nc);
    K.topLeftCorner(L.count, L.count) = H;
    K.topRightCorner(L.count, nc) = t.jacobian.transpose();
    K.bottomLeftCorner(nc, L.count) = t.jacobian;
    const Vector step = detail::solve_nonsingular(K, -res, "KKT system");

    bool accepted = false;
    double alpha = 1.0;
    State trial = s;
    Transcription tt;
    Vector lam_trial;
    for (int ls = 0; ls < 40; ++ls) {
      scatter(L, z + alpha * step.head(L.count), trial);
      lam_trial = lambda + alpha * step.tail(nc);
      try {
        tt = transcribe_state(p, L, trial);
        if (inf_norm(kkt_residual(tt, lam_trial)) < (1.0 - 1e-4 * alpha) * rn) {
          accepted = true;
          break;
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Domain) throw;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (rn <= 1e-10 * magnitude(t)) converged = true;
      break;
    }
    s = trial;
    z = gather(L, s);
    lambda = lam_trial;
    t = tt;
  }
  if (!converged) {
    throw NonConvergenceError(
        "solve_lagrange did not converge after " + std::to_string(it) + " iterations",
        std::vector<double>(best_z.data(), best_z.data() + best_z.size()), best_res);
  }

  // Least-squares polish of the multipliers at the final point.
  const Vector lam_ls =
      t.jacobian.transpose().colPivHouseholderQr().solve(-t.grad);
  if (inf_norm(t.grad + t.jacobian.transpose() * lam_ls) <=
      inf_norm(t.grad + t.jacobian.transpose() * lambda)) {
    lambda = lam_ls;
  }

  GridFunction y(p.scale(), s.Y);
  GridFunction u(k_restriction(p.scale(), 1), s.U);
  const Matrix multipliers =
      Eigen::Map<const Matrix>(lambda.data(), n, static_cast<Eigen::Index>(N - 1)).transpose();
  const double mu_last = p.scale().mu(N - 2);
  Vector terminal = Vector::Zero(n);
  for (int k = 0; k < n; ++k) {
    if (!p.b_free(k)) terminal(k) = -multipliers(static_cast<Eigen::Index>(N - 2), k) / mu_last;
  }
  CostateTrajectory costate = costate_sweep(p, y, u, 1.0, terminal);
  WmpReport report = wmp_residuals(p, y, u, costate, opts.tol.certificate);
  ControlSolution sol{std::move(y), std::move(u), std::move(costate), multipliers,
                      std::move(report), false, it, qp ? "kkt (quadratic program)" : "newton-kkt"};

  const Matrix H = lagrangian_hessian(p, L, s, lambda, rel_step);
  const Matrix Z = detail::nullspace(t.jacobian, 1e-12);
  sol.hessian_positive_definite =
      Z.cols() == 0 || Eigen::LLT<Matrix>(Z.transpose() * H * Z).info() == Eigen::Success;
  return sol;
}

std::vector<GridFunction> detect_abnormal(const ControlProblem& p, const GridFunction& y,
                                          const GridFunction& u) {
  check_shapes(p, y, u);
  const std::size_t N = p.scale().size();
  const int n = p.n(), m = p.m();
  const Eigen::Index unknowns = static_cast<Eigen::Index>(N) * n;
  auto col = [n](std::size_t i, int k) { return static_cast<Eigen::Index>(i) * n + k; };

  std::vector<Vector> rows;
  for (std::size_t i = 0; i + 1 < N; ++i) {
    const double mu = p.scale().mu(i);
    const LocalEval e = local_eval(p, i, y.at(i), u.at(i));
    // ψ_k(t) − Σ_l ψ_l(σ(t)) (δ_lk + μ ∂φ_l/∂y_k) = 0
    for (int k = 0; k < n; ++k) {
      Vector r = Vector::Zero(unknowns);
      r(col(i, k)) = 1.0;
      for (int l = 0; l < n; ++l) r(col(i + 1, l)) -= (l == k ? 1.0 : 0.0) + mu * e.phi_y(l, k);
      rows.push_back(std::move(r));
    }
    // Σ_l ψ_l(σ(t)) ∂φ_l/∂u_j = 0
    for (int j = 0; j < m; ++j) {
      Vector r = Vector::Zero(unknowns);
      for (int l = 0; l < n; ++l) r(col(i + 1, l)) = e.phi_u(l, j);
      rows.push_back(std::move(r));
    }
  }
  for (int k = 0; k < n; ++k) {
    if (p.a_free(k)) {
      Vector r = Vector::Zero(unknowns);
      r(col(0, k)) = 1.0;
      rows.push_back(std::move(r));
    }
    if (p.b_free(k)) {
      Vector r = Vector::Zero(unknowns);
      r(col(N - 1, k)) = 1.0;
      rows.push_back(std::move(r));
    }
  }
  Matrix A(static_cast<Eigen::Index>(rows.size()), unknowns);
  for (std::size_t r = 0; r < rows.size(); ++r) A.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();

  const Matrix Z = detail::nullspace(A, 1e-10);
  std::vector<GridFunction> out;
  for (Eigen::Index c = 0; c < Z.cols(); ++c) {
    Vector v = Z.col(c);
    Eigen::Index at = 0;
    v.cwiseAbs().maxCoeff(&at);
    v /= v(at);  // ‖ψ‖∞ = 1 with a positive largest entry
    Matrix psi = Eigen::Map<const Matrix>(v.data(), n, static_cast<Eigen::Index>(N)).transpose();
    out.emplace_back(p.scale(), psi);
  }
  return out;
}

ControlProblem isoperimetric_reduce(const ControlProblem& p, const Expr& g, double beta) {
  const int n = p.n(), m = p.m();
  if (!(g.arity() == Arity{n, 0, m})) {
    throw Error(ErrorCode::Arity, "isoperimetric integrand must be declared with arity (n, 0, m)");
  }
  const Arity wide{n + 1, 0, m};
  std::vector<Expr> phi;
  for (const Expr& e : p.phi()) phi.push_back(e.with_arity(wide));
  phi.push_back(g.with_arity(wide));
  Boundary a = p.bc_a(), b = p.bc_b();
  a.emplace_back(0.0);
  b.emplace_back(beta);
  return ControlProblem(p.scale(), n + 1, m, p.lagrangian().with_arity(wide), std::move(phi),
                        std::move(a), std::move(b));
}

}  // namespace deltavar
