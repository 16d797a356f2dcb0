#include "deltavar/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <thread>

#include "deltavar/error.hpp"
#include "detail/linalg.hpp"
#include "detail/threads.hpp"

namespace deltavar {

std::uint64_t GridAxis::count() const {
  if (!(step > 0.0) || !std::isfinite(lo) || !std::isfinite(hi) || hi < lo) {
    throw Error(ErrorCode::InvalidArgument, "grid axis needs finite lo <= hi and step > 0");
  }
  return static_cast<std::uint64_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
}

namespace {

using Objective = std::function<std::optional<double>(const std::vector<double>&)>;

struct Best {
  double value = std::numeric_limits<double>::infinity();
  std::uint64_t flat = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t evaluated = 0;
  std::uint64_t feasible = 0;
};

GridSearchResult search(const GridSearchSpec& spec, std::size_t unknowns, const Objective& f) {
  if (spec.axes.empty()) throw Error(ErrorCode::InvalidArgument, "grid search needs at least one axis");
  if (spec.axes.size() != 1 && spec.axes.size() != unknowns) {
    throw Error(ErrorCode::InvalidArgument,
                "grid search needs one axis or one per unknown (" + std::to_string(unknowns) + ")");
  }
  std::vector<GridAxis> axes(unknowns, spec.axes.front());
  if (spec.axes.size() == unknowns) axes = spec.axes;

  std::vector<std::uint64_t> counts;
  std::uint64_t total = 1;
  for (const GridAxis& a : axes) {
    counts.push_back(a.count());
    if (total > spec.budget / counts.back()) {
      throw Error(ErrorCode::BudgetExceeded,
                  "grid search exceeds the budget of " + std::to_string(spec.budget) + " combinations");
    }
    total *= counts.back();
  }

  auto decode = [&](std::uint64_t flat, std::vector<std::uint64_t>& idx, std::vector<double>& x) {
    for (std::size_t d = unknowns; d-- > 0;) {
      idx[d] = flat % counts[d];
      flat /= counts[d];
      x[d] = axes[d].value(idx[d]);
    }
  };

  const unsigned workers = static_cast<unsigned>(
      std::min<std::uint64_t>(detail::worker_count(spec.threads), std::max<std::uint64_t>(1, total / 4096 + 1)));
  std::vector<Best> partial(workers);
  std::vector<std::exception_ptr> failures(workers);
  auto run = [&](unsigned w) {
    try {
      const std::uint64_t begin = total * w / workers, end = total * (w + 1) / workers;
      std::vector<std::uint64_t> idx(unknowns);
      std::vector<double> x(unknowns);
      Best& b = partial[w];
      for (std::uint64_t flat = begin; flat < end; ++flat) {
        decode(flat, idx, x);
        ++b.evaluated;
        std::optional<double> v;
        try {
          v = f(x);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::Domain) throw;
        }
        if (!v) continue;
        ++b.feasible;
        if (*v < b.value) {
          b.value = *v;
          b.flat = flat;
        }
      }
    } catch (...) {
      failures[w] = std::current_exception();
    }
  };
  if (workers == 1 || unknowns == 0) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : failures) {
    if (e) std::rethrow_exception(e);
  }

  Best best;
  for (const Best& b : partial) {
    best.evaluated += b.evaluated;
    best.feasible += b.feasible;
    if (b.value < best.value || (b.value == best.value && b.flat < best.flat)) {
      best.value = b.value;
      best.flat = b.flat;
    }
  }
  if (best.feasible == 0) throw Error(ErrorCode::Infeasible, "no feasible grid point");
  GridSearchResult out;
  out.index.resize(unknowns);
  out.argmin.resize(unknowns);
  decode(best.flat, out.index, out.argmin);
  out.objective = best.value;
  out.evaluated = best.evaluated;
  out.feasible = best.feasible;
  return out;
}

}  // namespace

GridSearchResult brute_force_minimize(const BasicProblem& p, const GridSearchSpec& spec) {
  const std::size_t N = p.scale().size();
  const int n = p.n();
  Matrix base = Matrix::Zero(static_cast<Eigen::Index>(N), n);
  if (p.bc_a()) base.row(0) = p.bc_a()->transpose();
  if (p.bc_b()) base.row(static_cast<Eigen::Index>(N - 1)) = p.bc_b()->transpose();
  std::vector<std::pair<Eigen::Index, int>> slots;
  for (std::size_t i = 0; i < N; ++i) {
    if ((i == 0 && p.bc_a()) || (i == N - 1 && p.bc_b())) continue;
    for (int k = 0; k < n; ++k) slots.emplace_back(static_cast<Eigen::Index>(i), k);
  }
  return search(spec, slots.size(), [&](const std::vector<double>& x) -> std::optional<double> {
    Matrix Y = base;
    for (std::size_t s = 0; s < slots.size(); ++s) Y(slots[s].first, slots[s].second) = x[s];
    return evaluate_functional(p, GridFunction(p.scale(), Y));
  });
}

GridSearchResult brute_force_minimize(const ControlProblem& p, const GridSearchSpec& spec,
                                      double feasibility_tol) {
  const std::size_t N = p.scale().size();
  const int n = p.n(), m = p.m();
  Vector ya(n);
  for (int k = 0; k < n; ++k) {
    if (p.a_free(k)) {
      throw Error(ErrorCode::InvalidArgument, "forward simulation needs every component of y(a) fixed");
    }
    ya(k) = *p.bc_a()[static_cast<std::size_t>(k)];
  }
  const VarLayout layout = p.lagrangian().layout();
  return search(spec, (N - 1) * static_cast<std::size_t>(m),
                [&](const std::vector<double>& x) -> std::optional<double> {
                  Vector y = ya;
                  std::vector<double> pt(layout.size(), 0.0);
                  double J = 0.0;
                  for (std::size_t i = 0; i + 1 < N; ++i) {
                    const double mu = p.scale().mu(i);
                    pt[layout.time()] = p.scale()[i];
                    pt[layout.mu()] = mu;
                    for (int k = 0; k < n; ++k) pt[layout.state(k)] = y(k);
                    for (int l = 0; l < m; ++l) pt[layout.control(l)] = x[i * static_cast<std::size_t>(m) + static_cast<std::size_t>(l)];
                    J += mu * p.lagrangian().value(pt);
                    for (int k = 0; k < n; ++k) y(k) += mu * p.phi()[static_cast<std::size_t>(k)].value(pt);
                  }
                  for (int k = 0; k < n; ++k) {
                    if (const auto& yb = p.bc_b()[static_cast<std::size_t>(k)]) {
                      if (std::abs(y(k) - *yb) > feasibility_tol * (1.0 + std::abs(*yb))) return std::nullopt;
                    }
                  }
                  return J;
                });
}

std::vector<std::size_t> higher_order_free_indices(const HigherOrderProblem& hp) {
  const std::size_t N = hp.scale().size();
  const auto r = static_cast<std::size_t>(hp.r());
  std::vector<bool> pinned(N, false);
  for (std::size_t i = 0; i < r; ++i) {
    if (hp.bc_a()[i]) pinned[i] = true;
    if (hp.bc_b()[i]) pinned[N - r + i] = true;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < N; ++i) {
    if (!pinned[i]) out.push_back(i);
  }
  return out;
}

GridFunction higher_order_trajectory(const HigherOrderProblem& hp, const std::vector<double>& free) {
  const std::size_t N = hp.scale().size();
  const auto r = static_cast<std::size_t>(hp.r());
  const int n = hp.n();
  const auto idx = higher_order_free_indices(hp);
  if (free.size() != idx.size() * static_cast<std::size_t>(n)) {
    throw Error(ErrorCode::InvalidArgument, "wrong number of free values");
  }
  Matrix Y = Matrix::Zero(static_cast<Eigen::Index>(N), n);
  for (std::size_t s = 0; s < idx.size(); ++s) {
    for (int k = 0; k < n; ++k) Y(static_cast<Eigen::Index>(idx[s]), k) = free[s * static_cast<std::size_t>(n) + static_cast<std::size_t>(k)];
  }
  // The j-th forward difference quotient at point `at` is affine in y(t_{at+j});
  // solve for that value from two evaluations.
  auto pin = [&](std::size_t at, std::size_t j, const Vector& target) {
    const auto row = static_cast<Eigen::Index>(at + j);
    auto diff = [&]() {
      if (j == 0) return Vector(Y.row(static_cast<Eigen::Index>(at)).transpose());
      const TimeScale sub(std::vector<double>(hp.scale().points().begin() + static_cast<long>(at),
                                              hp.scale().points().begin() + static_cast<long>(at + j + 1)));
      const GridFunction g(sub, Matrix(Y.middleRows(static_cast<Eigen::Index>(at), static_cast<Eigen::Index>(j + 1))));
      return delta_derivative(g, j).at(0);
    };
    Y.row(row).setZero();
    const Vector d0 = diff();
    Y.row(row).setOnes();
    const Vector slope = diff() - d0;
    Y.row(row) = ((target - d0).array() / slope.array()).matrix().transpose();
  };
  for (std::size_t i = 0; i < r; ++i) {
    if (const auto& blk = hp.bc_a()[i]) pin(0, i, *blk);
  }
  for (std::size_t i = 0; i < r; ++i) {
    if (const auto& blk = hp.bc_b()[i]) pin(N - r, i, *blk);
  }
  return GridFunction(hp.scale(), Y);
}

GridSearchResult brute_force_minimize(const HigherOrderProblem& hp, const GridSearchSpec& spec) {
  const std::size_t unknowns = higher_order_free_indices(hp).size() * static_cast<std::size_t>(hp.n());
  return search(spec, unknowns, [&](const std::vector<double>& x) -> std::optional<double> {
    return evaluate_functional(hp, higher_order_trajectory(hp, x));
  });
}

KktMultipliers kkt_multipliers(const ControlProblem& p, const GridFunction& y,
                               const GridFunction& u, double feasibility_tol) {
  const Transcription t = transcribe(p, y, u);
  KktMultipliers out;
  out.constraint_residual = t.constraints.size() ? t.constraints.cwiseAbs().maxCoeff() : 0.0;
  const double scale = 1.0 + detail::max_abs(y.values()) + detail::max_abs(u.values());
  out.feasible = out.constraint_residual <= feasibility_tol * scale;
  if (!out.feasible) return out;
  Eigen::ColPivHouseholderQR<Matrix> qr(t.jacobian.transpose());
  qr.setThreshold(1e-12);
  if (qr.rank() < t.jacobian.rows()) {
    throw Error(ErrorCode::Degenerate, "constraint Jacobian is rank deficient; multipliers are not unique");
  }
  const Vector lambda = qr.solve(-t.grad);
  out.stationarity_residual =
      t.grad.size() ? (t.grad + t.jacobian.transpose() * lambda).cwiseAbs().maxCoeff() : 0.0;
  const auto K = static_cast<Eigen::Index>(p.scale().size() - 1);
  out.multipliers = Eigen::Map<const Matrix>(lambda.data(), p.n(), K).transpose();
  return out;
}

double finite_diff_check(const Expr& e, const std::vector<double>& point, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw Error(ErrorCode::InvalidArgument, "finite-difference step must be positive");
  }
  const Evaluation ev = e.eval_with_partials(point);
  double worst = 0.0;
  std::vector<double> x = point;
  for (std::size_t v = 0; v < point.size(); ++v) {
    x[v] = point[v] + h;
    const double fp = e.value(x);
    x[v] = point[v] - h;
    const double fm = e.value(x);
    x[v] = point[v];
    const double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(ev.partials[v] - fd) / std::max(1.0, std::abs(ev.partials[v])));
  }
  return worst;
}

}  // namespace deltavar
