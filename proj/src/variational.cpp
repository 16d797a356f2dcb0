#include "deltavar/variational.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deltavar/error.hpp"
#include "detail/linalg.hpp"

namespace deltavar {

BasicProblem::BasicProblem(TimeScale scale, Expr lagrangian, Form form,
                           std::optional<Vector> bc_a, std::optional<Vector> bc_b)
    : scale_(std::move(scale)),
      lagrangian_(std::move(lagrangian)),
      form_(form),
      bc_a_(std::move(bc_a)),
      bc_b_(std::move(bc_b)) {
  if (scale_.size() < 3) {
    throw Error(ErrorCode::InsufficientPoints,
                "the basic problem needs a time scale with at least 3 points, got " +
                    std::to_string(scale_.size()));
  }
  const Arity a = lagrangian_.arity();
  if (a.n < 1 || a.r != 1 || a.m != 0) {
    throw Error(ErrorCode::InvalidArgument,
                "basic-problem Lagrangian must have arity (n >= 1, r = 1, m = 0)");
  }
  for (const auto* bc : {&bc_a_, &bc_b_}) {
    if (*bc && (*bc)->size() != a.n) {
      throw Error(ErrorCode::InvalidArgument, "boundary value dimension does not match n");
    }
  }
}

bool ExtremalReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Certificate& c) { return c.pass; });
}

namespace {

// Evaluation point for the term at index i. The state slot holds y(t_i) in
// plain form and y(σ(t_i)) in sigma form.
std::vector<double> term_point(const BasicProblem& p, const Matrix& Y, std::size_t i) {
  const VarLayout layout = p.lagrangian().layout();
  const TimeScale& ts = p.scale();
  std::vector<double> pt(layout.size(), 0.0);
  const double mu = ts.mu(i);
  pt[layout.time()] = ts[i];
  pt[layout.mu()] = mu;
  const auto row = static_cast<Eigen::Index>(i);
  for (int k = 0; k < p.n(); ++k) {
    pt[layout.state(k)] = p.form() == Form::Plain ? Y(row, k) : Y(row + 1, k);
    pt[layout.derivative(k, 1)] = (Y(row + 1, k) - Y(row, k)) / mu;
  }
  return pt;
}

struct TermGradient {
  double value = 0.0;       // μ L
  Vector grad;              // ∂(μ L)/∂(y_i, y_{i+1}), length 2n
};

TermGradient term_gradient(const BasicProblem& p, const Matrix& Y, std::size_t i) {
  const VarLayout layout = p.lagrangian().layout();
  const int n = p.n();
  const double mu = p.scale().mu(i);
  const Evaluation ev = p.lagrangian().eval_with_partials(term_point(p, Y, i));
  TermGradient out;
  out.value = mu * ev.value;
  out.grad = Vector::Zero(2 * n);
  for (int k = 0; k < n; ++k) {
    const double ly = ev.partials[layout.state(k)];
    const double ld = ev.partials[layout.derivative(k, 1)];
    if (p.form() == Form::Plain) {
      out.grad(k) = mu * ly - ld;
      out.grad(n + k) = ld;
    } else {
      out.grad(k) = -ld;
      out.grad(n + k) = mu * ly + ld;
    }
  }
  return out;
}

void check_trajectory_shape(const BasicProblem& p, const GridFunction& y) {
  if (!(y.scale() == p.scale())) {
    throw Error(ErrorCode::Domain, "trajectory is not defined on the problem's time scale");
  }
  if (static_cast<int>(y.dim()) != p.n()) {
    throw Error(ErrorCode::InvalidArgument, "trajectory dimension does not match n");
  }
}

// Free/fixed bookkeeping for the transcription unknowns.
struct Unknowns {
  std::vector<int> index;  // (point * n + comp) -> unknown index, -1 when fixed
  int count = 0;
};

Unknowns make_unknowns(const BasicProblem& p) {
  const std::size_t N = p.scale().size();
  const int n = p.n();
  Unknowns u;
  u.index.assign(N * static_cast<std::size_t>(n), -1);
  for (std::size_t i = 0; i < N; ++i) {
    const bool fixed = (i == 0 && p.bc_a()) || (i == N - 1 && p.bc_b());
    if (fixed) continue;
    for (int k = 0; k < n; ++k) u.index[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(k)] = u.count++;
  }
  return u;
}

Matrix initial_guess(const BasicProblem& p) {
  const TimeScale& ts = p.scale();
  const Eigen::Index N = static_cast<Eigen::Index>(ts.size());
  const int n = p.n();
  Matrix Y = Matrix::Zero(N, n);
  Vector ya = p.bc_a() ? *p.bc_a() : (p.bc_b() ? *p.bc_b() : Vector::Zero(n));
  Vector yb = p.bc_b() ? *p.bc_b() : ya;
  for (Eigen::Index i = 0; i < N; ++i) {
    const double s = (ts[static_cast<std::size_t>(i)] - ts.front()) / (ts.back() - ts.front());
    Y.row(i) = ((1.0 - s) * ya + s * yb).transpose();
  }
  return Y;
}

void scatter(const Unknowns& u, const Vector& x, Matrix& Y) {
  const int n = static_cast<int>(Y.cols());
  for (std::size_t j = 0; j < u.index.size(); ++j) {
    if (u.index[j] >= 0) Y(static_cast<Eigen::Index>(j / n), static_cast<Eigen::Index>(j % n)) = x(u.index[j]);
  }
}

Vector gather(const Unknowns& u, const Matrix& Y) {
  const int n = static_cast<int>(Y.cols());
  Vector x(u.count);
  for (std::size_t j = 0; j < u.index.size(); ++j) {
    if (u.index[j] >= 0) x(u.index[j]) = Y(static_cast<Eigen::Index>(j / n), static_cast<Eigen::Index>(j % n));
  }
  return x;
}

// Local unknown indices of term i: (y_i, y_{i+1}).
int local_unknown(const Unknowns& u, int n, std::size_t i, int v) {
  const std::size_t point = i + static_cast<std::size_t>(v / n);
  return u.index[point * static_cast<std::size_t>(n) + static_cast<std::size_t>(v % n)];
}

struct Objective {
  double value = 0.0;
  Vector grad;
  double magnitude = 1.0;
};

Objective objective(const BasicProblem& p, const Unknowns& u, const Matrix& Y) {
  const int n = p.n();
  Objective out;
  out.grad = Vector::Zero(u.count);
  for (std::size_t i = 0; i + 1 < p.scale().size(); ++i) {
    const TermGradient tg = term_gradient(p, Y, i);
    out.value += tg.value;
    for (int v = 0; v < 2 * n; ++v) {
      const int j = local_unknown(u, n, i, v);
      if (j >= 0) out.grad(j) += tg.grad(v);
      out.magnitude = std::max(out.magnitude, 1.0 + std::abs(tg.grad(v)));
    }
  }
  return out;
}

// Hessian of the transcription by central differences of the exact local
// gradients; exact (up to rounding) when the gradient is affine.
Matrix hessian(const BasicProblem& p, const Unknowns& u, const Matrix& Y, double rel_step) {
  const int n = p.n();
  Matrix H = Matrix::Zero(u.count, u.count);
  Matrix work = Y;
  for (std::size_t i = 0; i + 1 < p.scale().size(); ++i) {
    for (int v = 0; v < 2 * n; ++v) {
      const int col = local_unknown(u, n, i, v);
      if (col < 0) continue;
      const auto r = static_cast<Eigen::Index>(i + static_cast<std::size_t>(v / n));
      const Eigen::Index c = v % n;
      const double x0 = Y(r, c);
      const double h = rel_step * (1.0 + std::abs(x0));
      work(r, c) = x0 + h;
      const Vector gp = term_gradient(p, work, i).grad;
      work(r, c) = x0 - h;
      const Vector gm = term_gradient(p, work, i).grad;
      work(r, c) = x0;
      const Vector d = (gp - gm) / (2.0 * h);
      for (int w = 0; w < 2 * n; ++w) {
        const int row = local_unknown(u, n, i, w);
        if (row >= 0) H(row, col) += d(w);
      }
    }
  }
  return 0.5 * (H + H.transpose());
}

void check_bcs(const BasicProblem& p, const GridFunction& y) {
  const auto N = static_cast<Eigen::Index>(p.scale().size());
  auto violated = [](const Vector& want, const Vector& got) {
    return ((want - got).cwiseAbs().array() > 1e-12 * (1.0 + want.cwiseAbs().array())).any();
  };
  if (p.bc_a() && violated(*p.bc_a(), y.values().row(0).transpose())) {
    throw Error(ErrorCode::Infeasible, "trajectory violates y(a) = y_a");
  }
  if (p.bc_b() && violated(*p.bc_b(), y.values().row(N - 1).transpose())) {
    throw Error(ErrorCode::Infeasible, "trajectory violates y(b) = y_b");
  }
}

double min_graininess(const TimeScale& ts) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) m = std::min(m, ts.mu(i));
  return m;
}

}  // namespace

LagrangianSamples sample_lagrangian(const BasicProblem& p, const GridFunction& y) {
  check_trajectory_shape(p, y);
  const VarLayout layout = p.lagrangian().layout();
  const std::size_t K = p.scale().size() - 1;
  const int n = p.n();
  LagrangianSamples s;
  s.value.resize(static_cast<Eigen::Index>(K));
  s.raw_y.resize(static_cast<Eigen::Index>(K), n);
  s.raw_dy.resize(static_cast<Eigen::Index>(K), n);
  for (std::size_t i = 0; i < K; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const Evaluation ev = p.lagrangian().eval_with_partials(term_point(p, y.values(), i));
    s.value(row) = ev.value;
    for (int k = 0; k < n; ++k) {
      s.raw_y(row, k) = ev.partials[layout.state(k)];
      s.raw_dy(row, k) = ev.partials[layout.derivative(k, 1)];
    }
  }
  s.plain_y = s.raw_y;
  s.plain_dy = s.raw_dy;
  if (p.form() == Form::Sigma) {
    for (std::size_t i = 0; i < K; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      s.plain_dy.row(row) += p.scale().mu(i) * s.raw_y.row(row);
    }
  }
  s.magnitude = 1.0 + std::max({detail::max_abs(s.raw_y), detail::max_abs(s.raw_dy),
                                detail::max_abs(s.plain_dy)});
  return s;
}

double evaluate_functional(const BasicProblem& p, const GridFunction& y) {
  check_trajectory_shape(p, y);
  check_bcs(p, y);
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < p.scale().size(); ++i) {
    sum += p.scale().mu(i) * p.lagrangian().value(term_point(p, y.values(), i));
  }
  return sum;
}

IntegralResidual el_integral_residual(const BasicProblem& p, const GridFunction& y) {
  const LagrangianSamples s = sample_lagrangian(p, y);
  IntegralResidual out;
  out.g = s.plain_dy - running_sigma_integral(p.scale(), s.plain_y);
  out.c_estimate = out.g.row(0).transpose();
  out.max_dev = 0.0;
  for (Eigen::Index i = 0; i < out.g.rows(); ++i) {
    out.max_dev = std::max(out.max_dev, (out.g.row(i).transpose() - out.c_estimate).cwiseAbs().maxCoeff());
  }
  return out;
}

Matrix el_differentiated_residual(const BasicProblem& p, const GridFunction& y) {
  const LagrangianSamples s = sample_lagrangian(p, y);
  const TimeScale& ts = p.scale();
  const Eigen::Index K = static_cast<Eigen::Index>(ts.size()) - 1;
  Matrix q(K, p.n());
  for (Eigen::Index i = 0; i < K; ++i) {
    if (p.form() == Form::Plain) {
      q.row(i) = s.raw_dy.row(i) - ts.mu(static_cast<std::size_t>(i)) * s.raw_y.row(i);
    } else {
      q.row(i) = s.raw_dy.row(i);
    }
  }
  Matrix res(K - 1, p.n());
  for (Eigen::Index i = 0; i + 1 < K; ++i) {
    const double mu = ts.mu(static_cast<std::size_t>(i));
    res.row(i) = (q.row(i + 1) - q.row(i)) / mu - s.raw_y.row(i);
  }
  return res;
}

std::map<std::string, Vector> transversality_residuals(const BasicProblem& p,
                                                       const GridFunction& y) {
  std::map<std::string, Vector> out;
  if (p.bc_a() && p.bc_b()) return out;
  const LagrangianSamples s = sample_lagrangian(p, y);
  const Eigen::Index last = s.plain_dy.rows() - 1;
  if (!p.bc_a()) {
    out["a"] = (s.plain_dy.row(0) - p.scale().mu(0) * s.plain_y.row(0)).transpose();
  }
  if (!p.bc_b()) {
    out["b"] = s.plain_dy.row(last).transpose();
  }
  return out;
}

BasicProblem sigma_form_transform(const BasicProblem& p) {
  const double sign = p.form() == Form::Sigma ? 1.0 : -1.0;
  NodePtr root = substitute(p.lagrangian().root_ptr(), [sign](const VarRef& v) -> NodePtr {
    if (v.kind != VarRef::Kind::State) return nullptr;
    NodePtr shift = Node::binary(Node::Op::Mul, Node::variable({VarRef::Kind::Mu, 0, 0}),
                                 Node::variable({VarRef::Kind::Derivative, v.index, 1}));
    return Node::binary(sign > 0 ? Node::Op::Add : Node::Op::Sub, Node::variable(v), shift);
  });
  return BasicProblem(p.scale(), Expr(root, p.lagrangian().arity()),
                      p.form() == Form::Sigma ? Form::Plain : Form::Sigma, p.bc_a(), p.bc_b());
}

ExtremalReport certify_basic(const BasicProblem& p, const GridFunction& y, const Tolerances& tol) {
  const LagrangianSamples s = sample_lagrangian(p, y);
  ExtremalReport r;
  r.magnitude = s.magnitude;
  const IntegralResidual ir = el_integral_residual(p, y);
  r.c_estimate = ir.c_estimate;
  r.el_integral_max_dev = ir.max_dev;
  r.el_diff_residuals = el_differentiated_residual(p, y);
  r.transversality = transversality_residuals(p, y);

  const double base = tol.certificate * r.magnitude;
  r.checks.push_back({"euler_lagrange_integral", ir.max_dev, base, ir.max_dev <= base});
  // The differentiated form divides by μ, which amplifies rounding by 1/μ.
  const double diff_tol = base * std::max(1.0, 1.0 / min_graininess(p.scale()));
  const double diff_res = detail::max_abs(r.el_diff_residuals);
  r.checks.push_back({"euler_lagrange_differentiated", diff_res, diff_tol, diff_res <= diff_tol});
  for (const auto& [end, v] : r.transversality) {
    const double res = v.cwiseAbs().maxCoeff();
    r.checks.push_back({"transversality_" + end, res, base, res <= base});
  }
  return r;
}

BasicSolution solve_basic(const BasicProblem& p, const SolverOptions& opts) {
  const Unknowns u = make_unknowns(p);
  Matrix Y = initial_guess(p);
  const bool quadratic = [&] {
    const int d = p.lagrangian().polynomial_degree();
    return d >= 0 && d <= 2;
  }();
  const double rel_step = quadratic ? 1.0 : 1e-5;

  Vector x = gather(u, Y);
  Objective obj = objective(p, u, Y);
  Vector best_x = x;
  double best_g = obj.grad.size() ? obj.grad.cwiseAbs().maxCoeff() : 0.0;
  int it = 0;
  bool converged = false;
  Matrix H;
  for (; it < opts.max_iter; ++it) {
    const double gnorm = obj.grad.size() ? obj.grad.cwiseAbs().maxCoeff() : 0.0;
    if (gnorm < best_g) {
      best_g = gnorm;
      best_x = x;
    }
    if (gnorm <= 1e-13 * obj.magnitude) {
      converged = true;
      break;
    }
    H = hessian(p, u, Y, rel_step);
    const Vector step = detail::solve_nonsingular(H, -obj.grad, "stationarity system");

    // Damped Newton on the gradient norm.
    double alpha = 1.0;
    bool accepted = false;
    Matrix trial = Y;
    Objective trial_obj;
    for (int ls = 0; ls < 40; ++ls) {
      scatter(u, x + alpha * step, trial);
      try {
        trial_obj = objective(p, u, trial);
        const double tn = trial_obj.grad.cwiseAbs().maxCoeff();
        if (tn < (1.0 - 1e-4 * alpha) * gnorm) {
          accepted = true;
          break;
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Domain) throw;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // Fall back to a gradient-descent step with Armijo backtracking.
      alpha = 1.0 / std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
      for (int ls = 0; ls < 60; ++ls) {
        scatter(u, x - alpha * obj.grad, trial);
        try {
          trial_obj = objective(p, u, trial);
          if (trial_obj.value < obj.value - 1e-4 * alpha * obj.grad.squaredNorm()) {
            accepted = true;
            break;
          }
        } catch (const Error& e) {
          if (e.code() != ErrorCode::Domain) throw;
        }
        alpha *= 0.5;
      }
    }
    if (!accepted) {
      // No further progress at working precision; accept when the gradient is
      // already at rounding level.
      if (gnorm <= 1e-10 * obj.magnitude) converged = true;
      break;
    }
    Y = trial;
    x = gather(u, Y);
    obj = trial_obj;
  }
  if (!converged) {
    throw NonConvergenceError(
        "solve_basic did not converge after " + std::to_string(it) + " iterations",
        std::vector<double>(best_x.data(), best_x.data() + best_x.size()), best_g);
  }

  GridFunction y(p.scale(), Y);
  ExtremalReport report = certify_basic(p, y, opts.tol);
  H = hessian(p, u, Y, rel_step);
  report.hessian_positive_definite = u.count == 0 || Eigen::LLT<Matrix>(H).info() == Eigen::Success;
  report.iterations = it;
  report.method = quadratic ? "newton (quadratic: exact linear solve)" : "damped newton";
  return {std::move(y), std::move(report)};
}

}  // namespace deltavar
