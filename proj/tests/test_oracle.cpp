#include "test_main.hpp"

#include <cmath>
#include <random>

#include "deltavar/error.hpp"
#include "deltavar/oracle.hpp"
#include "random_expr.hpp"

using namespace deltavar;

namespace {

std::optional<Vector> v1(double x) { return Vector::Constant(1, x); }

ControlProblem lq(std::optional<double> b) {
  const Arity a{1, 0, 1};
  return ControlProblem(TimeScale({0, 1, 2}), 1, 1, Expr::parse("u[0]^2", a), {Expr::parse("u[0]", a)},
                        Boundary{0.0}, Boundary{b});
}

}  // namespace

TEST_CASE("grid search on the basic problem") {
  BasicProblem p(TimeScale({0, 1, 3}), Expr::parse("dy[0]^2", {1, 1, 0}), Form::Plain, v1(0), v1(3));
  auto r = brute_force_minimize(p, {{{0.0, 2.0, 0.05}}});
  REQUIRE(r.argmin.size() == 1);
  CHECK(r.argmin[0] == doctest::Approx(1.0));
  CHECK(r.objective == doctest::Approx(3.0));
  CHECK(r.evaluated == 41);
}

TEST_CASE("grid search on the LQ instance") {
  auto r = brute_force_minimize(lq(2.0), {{{-2.0, 2.0, 0.01}}});
  REQUIRE(r.argmin.size() == 2);
  CHECK(r.argmin[0] == doctest::Approx(1.0));
  CHECK(r.argmin[1] == doctest::Approx(1.0));
  CHECK(r.objective == doctest::Approx(2.0));
  CHECK(r.feasible < r.evaluated);
}

TEST_CASE("grid search on the higher-order instance") {
  HigherOrderProblem hp(TimeScale({0, 1, 2, 3, 4}), 1, 2, Expr::parse("dy[0][2]^2", {1, 2, 0}),
                        {v1(0), v1(0)}, {v1(3), v1(1)});
  CHECK(higher_order_free_indices(hp) == std::vector<std::size_t>{2});
  auto y = higher_order_trajectory(hp, {4.0 / 3.0});
  CHECK(y.values()(1, 0) == doctest::Approx(0.0));
  CHECK(y.values()(3, 0) == doctest::Approx(3.0));
  CHECK(y.values()(4, 0) == doctest::Approx(4.0));
  auto r = brute_force_minimize(hp, {{{0.0, 3.0, 0.01}}});
  CHECK(r.argmin[0] == doctest::Approx(1.33));
}

TEST_CASE("pinned values on a nonuniform scale") {
  HigherOrderProblem hp(TimeScale({0, 0.5, 2, 2.25, 3, 4.5, 5}), 1, 2, Expr::parse("dy[0][2]^2", {1, 2, 0}),
                        {v1(1), v1(-2)}, {v1(0.5), v1(3)});
  auto y = higher_order_trajectory(hp, {0.1, 0.2, 0.3});
  auto d = delta_derivative(y, 1);
  CHECK(y.values()(0, 0) == doctest::Approx(1.0));
  CHECK(d.values()(0, 0) == doctest::Approx(-2.0));
  CHECK(y.values()(5, 0) == doctest::Approx(0.5));
  CHECK(d.values()(5, 0) == doctest::Approx(3.0));
}

TEST_CASE("grid search budget and ties") {
  BasicProblem p(TimeScale::uniform(0, 1, 6), Expr::parse("dy[0]^2", {1, 1, 0}), Form::Plain, v1(0), v1(1));
  try {
    brute_force_minimize(p, {{{-1.0, 1.0, 0.001}}});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BudgetExceeded);
  }
  // Flat objective: the lexicographically first grid point wins, independent
  // of the worker count.
  BasicProblem flat(TimeScale({0, 1, 2, 3}), Expr::parse("0*dy[0]", {1, 1, 0}), Form::Plain, v1(0), v1(0));
  for (unsigned threads : {1u, 3u, 8u}) {
    GridSearchSpec spec{{{-1.0, 1.0, 0.01}}, 10'000'000, threads};
    auto r = brute_force_minimize(flat, spec);
    CHECK(r.index == std::vector<std::uint64_t>{0, 0});
  }
}

TEST_CASE("oracle agrees with the solver") {
  BasicProblem p(TimeScale({0, 0.5, 1.5, 2}), Expr::parse("dy[0]^2 + y[0]^2", {1, 1, 0}), Form::Plain,
                 v1(1), std::nullopt);
  auto sol = solve_basic(p);
  const double step = 0.01;
  auto r = brute_force_minimize(p, {{{-0.5, 1.5, step}}});
  CHECK(evaluate_functional(p, sol.y) <= r.objective + 1e-12);
  for (std::size_t s = 0; s < r.argmin.size(); ++s) {
    CHECK(std::abs(r.argmin[s] - sol.y.values()(static_cast<Eigen::Index>(s + 1), 0)) <= step);
  }
}

TEST_CASE("KKT multipliers") {
  auto p = lq(2.0);
  auto sol = solve_lagrange(p);
  auto k = kkt_multipliers(p, sol.y, sol.u);
  REQUIRE(k.feasible);
  for (Eigen::Index i = 0; i < 2; ++i) {
    // λ(t) = −μ(t) ψ(σ(t))
    CHECK(k.multipliers(i, 0) == doctest::Approx(-1.0 * sol.costate.psi.values()(i + 1, 0)));
  }
  CHECK(k.stationarity_residual <= 1e-12);

  const Arity a{1, 0, 1};
  ControlProblem zero(TimeScale({0, 1, 2}), 1, 1, Expr::parse("0*u[0]", a), {Expr::parse("u[0]", a)},
                      Boundary{0.0}, Boundary{std::nullopt});
  auto zs = solve_lagrange(zero);
  auto zk = kkt_multipliers(zero, zs.y, zs.u);
  CHECK(zk.multipliers.cwiseAbs().maxCoeff() == 0.0);

  const TimeScale& ts = p.scale();
  auto bad = kkt_multipliers(p, GridFunction(ts, std::vector<double>{0, 1, 2}),
                             GridFunction(k_restriction(ts, 1), std::vector<double>{1, 5}));
  CHECK_FALSE(bad.feasible);
  CHECK(bad.multipliers.size() == 0);
  CHECK(bad.constraint_residual == doctest::Approx(4.0));
}

TEST_CASE("finite-difference gradient check") {
  const Arity a{2, 1, 1};
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(-1, 1);
  const VarLayout layout(a);
  for (int k = 0; k < 50; ++k) {
    Expr e(testing::random_polynomial(rng, a, 2), a);
    std::vector<double> pt(layout.size());
    for (auto& x : pt) x = d(rng);
    CHECK(finite_diff_check(e, pt, 1e-6) <= 1e-9 * (1 + std::abs(e.value(pt))));
  }
  Expr ex = Expr::parse("exp(y[0])", {1, 1, 0});
  CHECK(finite_diff_check(ex, {0, 0, 1, 0}, 1e-6) <= 1e-6);
  CHECK_THROWS_AS(finite_diff_check(ex, {0, 0, 1, 0}, 0.0), Error);
}
