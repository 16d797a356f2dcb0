#include "test_main.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "deltavar/error.hpp"
#include "deltavar/variational.hpp"

using namespace deltavar;

namespace {

std::optional<Vector> val(double v) { return Vector::Constant(1, v); }

BasicProblem problem(std::vector<double> pts, const std::string& L,
                     std::optional<Vector> a, std::optional<Vector> b,
                     Form form = Form::Plain) {
  return BasicProblem(TimeScale(std::move(pts)), Expr::parse(L, {1, 1, 0}), form, a, b);
}

GridFunction traj(const BasicProblem& p, const std::vector<double>& v) {
  return GridFunction(p.scale(), v);
}

// Minimizes a function of two variables over a square grid.
template <class F>
std::pair<double, double> grid_argmin(F f, double lo, double hi, double step) {
  double best = std::numeric_limits<double>::infinity();
  std::pair<double, double> arg{0, 0};
  const int n = static_cast<int>(std::lround((hi - lo) / step));
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      const double x = lo + i * step, y = lo + j * step;
      const double v = f(x, y);
      if (v < best) { best = v; arg = {x, y}; }
    }
  }
  return arg;
}

}  // namespace

TEST_CASE("functional examples") {
  auto p = problem({0, 1, 2}, "dy[0]^2", std::nullopt, std::nullopt);
  CHECK(evaluate_functional(p, traj(p, {0, 1, 2})) == doctest::Approx(2.0));
  auto q = problem({0, 1, 3}, "dy[0]^2", std::nullopt, std::nullopt);
  CHECK(evaluate_functional(q, traj(q, {0, 1, 3})) == doctest::Approx(3.0));
  // 1·0² + 2·(3/2)²
  CHECK(evaluate_functional(q, traj(q, {0, 0, 3})) == doctest::Approx(4.5));

  auto fixed = problem({0, 1, 2}, "dy[0]^2", val(0), val(2));
  CHECK_THROWS_AS(evaluate_functional(fixed, traj(fixed, {0, 1, 3})), Error);
  try {
    evaluate_functional(fixed, traj(fixed, {1, 1, 2}));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Infeasible);
  }
}

TEST_CASE("too few points is rejected") {
  try {
    problem({0, 1}, "dy[0]^2", val(0), val(1));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientPoints);
  }
}

TEST_CASE("solve_basic examples") {
  {
    auto p = problem({0, 1, 2}, "dy[0]^2", val(0), val(2));
    auto sol = solve_basic(p);
    CHECK(sol.y.values()(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sol.report.pass());
    CHECK(sol.report.hessian_positive_definite);
  }
  {
    // minimize y1² + (3 − y1)²/2 by hand: y1 = 1
    auto p = problem({0, 1, 3}, "dy[0]^2", val(0), val(3));
    auto sol = solve_basic(p);
    CHECK(sol.y.values()(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sol.report.c_estimate(0) == doctest::Approx(2.0));
  }
  {
    auto p = problem({0, 1, 2}, "dy[0]^2", val(0), std::nullopt);
    auto sol = solve_basic(p);
    CHECK(sol.y.values().cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(sol.report.transversality.count("b") == 1);
    CHECK(std::abs(sol.report.transversality.at("b")(0)) < 1e-12);
  }
}

TEST_CASE("integral residual examples") {
  auto p = problem({0, 1, 2}, "dy[0]^2", std::nullopt, std::nullopt);
  auto r = el_integral_residual(p, traj(p, {0, 1, 2}));
  CHECK(r.c_estimate(0) == doctest::Approx(2.0));
  CHECK(r.max_dev == doctest::Approx(0.0));

  auto q = problem({0, 1, 3}, "dy[0]^2", std::nullopt, std::nullopt);
  r = el_integral_residual(q, traj(q, {0, 1, 3}));
  CHECK(r.c_estimate(0) == doctest::Approx(2.0));
  CHECK(r.max_dev == doctest::Approx(0.0));

  // g(0) = 2·0, g(1) = 2·2
  r = el_integral_residual(p, traj(p, {0, 0, 2}));
  CHECK(r.max_dev == doctest::Approx(4.0));
  CHECK_FALSE(certify_basic(p, traj(p, {0, 0, 2})).pass());
}

TEST_CASE("differentiated residual") {
  auto p = problem({0, 1, 2}, "dy[0]^2", std::nullopt, std::nullopt);
  Matrix res = el_differentiated_residual(p, traj(p, {0, 1, 2}));
  REQUIRE(res.rows() == 1);
  CHECK(res(0, 0) == doctest::Approx(0.0));

  auto s = sigma_form_transform(p);
  CHECK(s.form() == Form::Sigma);
  res = el_differentiated_residual(s, traj(s, {0, 1, 2}));
  CHECK(std::abs(res(0, 0)) < 1e-12);

  BasicProblem fine(TimeScale::uniform(0, 1, 64), Expr::parse("dy[0]^2 + y[0]^2", {1, 1, 0}),
                    Form::Plain, val(0), val(1));
  auto sol = solve_basic(fine);
  res = el_differentiated_residual(fine, sol.y);
  CHECK(res.rows() == 62);
  CHECK(res.cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("transversality examples") {
  auto pb = problem({0, 1, 2}, "dy[0]^2", val(0), std::nullopt);
  auto t = transversality_residuals(pb, traj(pb, {0, 0, 0}));
  REQUIRE(t.count("b") == 1);
  CHECK(t.count("a") == 0);
  CHECK(t.at("b")(0) == 0.0);

  auto pa = problem({0, 1, 2}, "dy[0]^2", std::nullopt, val(0));
  t = transversality_residuals(pa, traj(pa, {0, 0, 0}));
  REQUIRE(t.count("a") == 1);
  CHECK(t.at("a")(0) == 0.0);

  auto both = problem({0, 1, 2}, "dy[0]^2", val(0), val(0));
  CHECK(transversality_residuals(both, traj(both, {0, 0, 0})).empty());

  // a free, y(2) = 0: the a-residual is 2 y^Δ(0) − μ(0)·2.
  auto p = problem({0, 1, 2}, "dy[0]^2 + 2*y[0]", std::nullopt, val(0));
  const GridFunction probe = traj(p, {0.5, -1.0, 0.0});
  CHECK(transversality_residuals(p, probe).at("a")(0) == doctest::Approx(2 * (-1.5) - 2));

  auto J = [](double y0, double y1) {
    return (y1 - y0) * (y1 - y0) + 2 * y0 + y1 * y1 + 2 * y1;
  };
  const auto [b0, b1] = grid_argmin(J, -5.0, 5.0, 0.01);
  auto sol = solve_basic(p);
  CHECK(sol.y.values()(0, 0) == doctest::Approx(b0).epsilon(0.011));
  CHECK(sol.y.values()(1, 0) == doctest::Approx(b1).epsilon(0.011));
  CHECK(std::abs(sol.report.transversality.at("a")(0)) < 1e-10);
  const double at_grid = transversality_residuals(p, traj(p, {b0, b1, 0})).at("a")(0);
  CHECK(std::abs(at_grid) <= 2 * 0.02 + 1e-12);
}

TEST_CASE("sigma-form transform") {
  auto s = problem({0, 1, 3}, "y[0]", std::nullopt, std::nullopt, Form::Sigma);
  auto p = sigma_form_transform(s);
  CHECK(p.form() == Form::Plain);
  CHECK(p.lagrangian().to_string() == Expr::parse("y[0] + mu*dy[0][1]", {1, 1, 0}).to_string());

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(-2, 2);
  const char* lagrangians[] = {"dy[0]^2 + y[0]^2", "y[0]*dy[0] + t*y[0]^3", "exp(y[0]) + dy[0]^2",
                               "sin(y[0])*dy[0]"};
  for (const char* L : lagrangians) {
    for (Form f : {Form::Plain, Form::Sigma}) {
      auto base = problem({0, 0.5, 0.75, 3, 3.5}, L, std::nullopt, std::nullopt, f);
      auto once = sigma_form_transform(base);
      auto twice = sigma_form_transform(once);
      CHECK(twice.form() == f);
      for (int k = 0; k < 20; ++k) {
        std::vector<double> v(5);
        for (auto& x : v) x = d(rng);
        const GridFunction y = traj(base, v);
        const double e0 = evaluate_functional(base, y);
        CHECK(evaluate_functional(once, y) == doctest::Approx(e0).epsilon(1e-12));
        CHECK(evaluate_functional(twice, y) == doctest::Approx(e0).epsilon(1e-12));
        Matrix r0 = el_differentiated_residual(base, y);
        Matrix r1 = el_differentiated_residual(once, y);
        CHECK((r0 - r1).cwiseAbs().maxCoeff() <= 1e-9 * (1 + r0.cwiseAbs().maxCoeff()));
        CHECK(el_integral_residual(base, y).max_dev ==
              doctest::Approx(el_integral_residual(once, y).max_dev).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("minimizers of both forms coincide") {
  auto p = problem({0, 0.3, 1, 1.2, 2}, "dy[0]^2 + y[0]^2 + t*y[0]", val(1), std::nullopt);
  auto s = sigma_form_transform(p);
  auto a = solve_basic(p);
  auto b = solve_basic(s);
  CHECK((a.y.values() - b.y.values()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(a.report.pass());
  CHECK(b.report.pass());
}

TEST_CASE("solver certificates on convex quadratics") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> gap(0.1, 1.0), c(-2, 2);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> pts{0};
    const int N = 3 + trial % 8;
    for (int i = 1; i < N; ++i) pts.push_back(pts.back() + gap(rng));
    const std::string L = "dy[0]^2 + " + std::to_string(gap(rng)) + "*y[0]^2 + (" +
                          std::to_string(c(rng)) + ")*t*y[0]";
    const auto bca = trial % 3 == 0 ? std::nullopt : val(c(rng));
    const auto bcb = trial % 3 == 1 ? std::nullopt : val(c(rng));
    for (Form f : {Form::Plain, Form::Sigma}) {
      auto p = problem(pts, L, bca, bcb, f);
      auto sol = solve_basic(p);
      CHECK(sol.report.pass());
      CHECK(sol.report.el_integral_max_dev <= 1e-8 * (1 + sol.report.c_estimate.cwiseAbs().maxCoeff()));
      if (bca && bcb) {
        CHECK(sol.report.el_diff_residuals.cwiseAbs().maxCoeff() <= sol.report.checks[1].tolerance);
      }
    }
  }
}

TEST_CASE("non-quadratic Lagrangian") {
  BasicProblem p(TimeScale::uniform(0, 1, 20), Expr::parse("sqrt(1 + dy[0]^2) + exp(y[0])", {1, 1, 0}),
                 Form::Plain, val(0), val(1));
  auto sol = solve_basic(p);
  CHECK(sol.report.pass());
  CHECK(sol.report.iterations > 1);
}

TEST_CASE("vector-valued problem") {
  BasicProblem p(TimeScale({0, 0.5, 1.5, 2}), Expr::parse("dy[0]^2 + dy[1]^2 + y[0]*y[1]", {2, 1, 0}),
                 Form::Plain, Vector::Constant(2, 1.0), std::nullopt);
  auto sol = solve_basic(p);
  CHECK(sol.report.pass());
  CHECK(sol.report.transversality.at("b").size() == 2);
}

TEST_CASE("non-extremal detector") {
  BasicProblem p(TimeScale::uniform(0, 1, 16), Expr::parse("dy[0]^2 + y[0]^2", {1, 1, 0}),
                 Form::Plain, val(0), val(1));
  auto sol = solve_basic(p);
  REQUIRE(sol.report.pass());
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> idx(1, 14);
  std::uniform_real_distribution<double> eps(1e-3, 1e-1);
  std::bernoulli_distribution sign;
  for (int k = 0; k < 100; ++k) {
    Matrix v = sol.y.values();
    v(idx(rng), 0) += (sign(rng) ? 1 : -1) * eps(rng);
    auto rep = certify_basic(p, GridFunction(p.scale(), v));
    CHECK_FALSE(rep.pass());
    CHECK(rep.el_integral_max_dev > rep.checks[0].tolerance);
  }
}
