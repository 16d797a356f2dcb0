#include "test_main.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "deltavar/error.hpp"
#include "deltavar/higher_order.hpp"

using namespace deltavar;

namespace {

std::optional<Vector> v1(double x) { return Vector::Constant(1, x); }

// r = 2 on {0,...,4}: y(0) = 0, y^Δ(0) = 0, y(3) = 3, y^Δ(3) = 1.
HigherOrderProblem golden() {
  return HigherOrderProblem(TimeScale({0, 1, 2, 3, 4}), 1, 2, Expr::parse("dy[0][2]^2", {1, 2, 0}),
                            {v1(0), v1(0)}, {v1(3), v1(1)});
}

GridFunction golden_y(double y2) { return GridFunction(TimeScale({0, 1, 2, 3, 4}), std::vector<double>{0, 0, y2, 3, 4}); }

}  // namespace

TEST_CASE("minimum point guards") {
  for (int r = 1; r <= 3; ++r) {
    std::vector<double> pts;
    for (int i = 0; i < 2 * r; ++i) pts.push_back(i);
    try {
      HigherOrderProblem(TimeScale(pts), 1, r, Expr::parse("dy[0][" + std::to_string(r) + "]^2", {1, r, 0}));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InsufficientPoints);
    }
    pts.push_back(2 * r);
    CHECK_NOTHROW(HigherOrderProblem(TimeScale(pts), 1, r,
                                     Expr::parse("dy[0][" + std::to_string(r) + "]^2", {1, r, 0})));
  }
}

TEST_CASE("integrator chain") {
  auto [A1, B1] = integrator_chain(1, 1);
  CHECK(A1.isZero());
  CHECK(B1.isIdentity());
  auto [A2, B2] = integrator_chain(1, 2);
  Matrix eA(2, 2), eB(2, 1);
  eA << 0, 1, 0, 0;
  eB << 0, 1;
  CHECK(A2 == eA);
  CHECK(B2 == eB);
  auto [A3, B3] = integrator_chain(2, 3);
  CHECK(A3.rows() == 6);
  CHECK(A3.block(0, 2, 2, 2).isIdentity());
  CHECK(A3.block(2, 4, 2, 2).isIdentity());
  CHECK(A3.sum() == 4.0);
  CHECK(B3.block(4, 0, 2, 2).isIdentity());

  // The reduced dynamics evaluate to A x + B u.
  HigherOrderProblem hp(TimeScale::uniform(0, 1, 9), 2, 3,
                        Expr::parse("dy[0][3]^2 + dy[1][3]^2", {2, 3, 0}));
  const ControlProblem cp = reduce_to_control(hp);
  CHECK(cp.n() == 6);
  CHECK(cp.m() == 2);
  CHECK(cp.scale().size() == 7);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(-1, 1);
  Vector x(6), u(2);
  for (auto& v : x) v = d(rng);
  for (auto& v : u) v = d(rng);
  const auto h = hamiltonian(cp, 0, x, u, 0.0, Vector::Zero(6));
  CHECK((h.H_psi_sigma - (A3 * x + B3 * u)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("golden second-order instance") {
  auto hp = golden();
  auto sol = solve_higher_order(hp);
  CHECK(std::abs(sol.y.values()(2, 0) - 4.0 / 3.0) <= 1e-10);
  CHECK(sol.y.values()(4, 0) == doctest::Approx(4.0));
  CHECK(sol.report.pass());
  CHECK(sol.report.stationarity.cwiseAbs().maxCoeff() <= 1e-10);

  // Exhaustive search over the single free value.
  double best = std::numeric_limits<double>::infinity(), arg = 0;
  for (int k = 0; k <= 300; ++k) {
    const double y2 = 0.01 * k;
    const double J = y2 * y2 + (3 - 2 * y2) * (3 - 2 * y2) + (y2 - 2) * (y2 - 2);
    if (J < best) { best = J; arg = y2; }
  }
  CHECK(arg == doctest::Approx(1.33));
  CHECK(std::abs(sol.y.values()(2, 0) - arg) <= 0.01);

  // ψ^1(σ(t)) = −L_u(t) = −2Δ²y(t), with 2Δ²y = (8/3, 2/3, −4/3).
  const double expect[] = {8.0 / 3, 2.0 / 3, -4.0 / 3};
  for (int k = 0; k < 3; ++k) {
    CHECK(sol.psi[1].values()(k + 1, 0) == doctest::Approx(-expect[k]).epsilon(1e-10));
  }
  auto rec = costate_recursion(hp, sol.y);
  for (int k = 0; k < 3; ++k) CHECK(rec.psi_sigma[1](k, 0) == doctest::Approx(-expect[k]).epsilon(1e-10));

  Matrix disc = discrete_el_residual(hp, sol.y);
  REQUIRE(disc.rows() == 1);
  CHECK(std::abs(disc(0, 0)) <= 1e-12);

  CHECK(detect_abnormal(reduce_to_control(hp), sol.reduced.y, sol.reduced.u).empty());
}

TEST_CASE("Euler-Lagrange residual in integral form") {
  auto hp = golden();
  auto el = ho_el_residual(hp, golden_y(4.0 / 3.0));
  CHECK(el.max_anchored <= 1e-12);
  CHECK(el.max_least_squares <= 1e-12);
  CHECK(el.checked_points.size() == 3);
  CHECK(el.unchecked_points.size() == 2);
  CHECK(el.transversality.empty());

  auto bad = ho_el_residual(hp, golden_y(4.0 / 3.0 + 0.5));
  CHECK(bad.max_anchored > 0.1);
  CHECK(bad.max_least_squares > 0.1);
  CHECK_FALSE(certify_higher_order(hp, golden_y(4.0 / 3.0 + 0.5)).pass());
  CHECK(certify_higher_order(hp, golden_y(4.0 / 3.0)).pass());
}

TEST_CASE("first order reduces to the basic problem") {
  TimeScale ts({0, 0.3, 1, 1.4, 2, 2.2});
  const std::string L = "dy[0]^2 + y[0]^2 + t*y[0]";
  BasicProblem bp(ts, Expr::parse(L, {1, 1, 0}), Form::Plain, v1(1), std::nullopt);
  HigherOrderProblem hp(ts, 1, 1, Expr::parse(L, {1, 1, 0}), {v1(1)}, {std::nullopt});
  auto a = solve_basic(bp);
  auto b = solve_higher_order(hp);
  CHECK((a.y.values() - b.y.values()).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(b.report.pass());

  // ψ^0(σ(t)) = −S[L_y](t) + c_0 reproduces the integral Euler-Lagrange form.
  auto rec = costate_recursion(hp, b.y);
  auto samples = sample_lagrangian(bp, b.y);
  const Matrix g = -rec.psi_sigma[0];
  for (Eigen::Index k = 0; k < g.rows(); ++k) {
    CHECK(g(k, 0) == doctest::Approx(samples.plain_dy(k, 0)).epsilon(1e-9));
  }
  auto el = ho_el_residual(hp, b.y);
  CHECK(el.max_anchored <= 1e-9);
  CHECK(el.transversality.count("b0") == 1);
}

TEST_CASE("quadratic candidate is optimal") {
  const std::size_t N = 9;
  TimeScale ts = TimeScale::uniform(0, 2, N);
  std::vector<double> y(N);
  for (std::size_t i = 0; i < N; ++i) y[i] = ts[i] * ts[i] / 2;
  auto grid = GridFunction(ts, y);
  auto stack = [&](std::size_t k) { return delta_derivative(grid, 1).values()(static_cast<Eigen::Index>(k), 0); };
  HigherOrderProblem hp(ts, 1, 2, Expr::parse("dy[0][2]^2", {1, 2, 0}), {v1(0), v1(stack(0))},
                        {v1(y[N - 2]), v1(stack(N - 2))});
  auto sol = solve_higher_order(hp);
  for (std::size_t i = 0; i < N; ++i) CHECK(sol.y.values()(static_cast<Eigen::Index>(i), 0) == doctest::Approx(y[i]));
  CHECK(ho_el_residual(hp, grid).max_anchored <= 1e-10);

  // Central differences of the objective in the free values vanish.
  const double h = ts.mu(0);
  auto J = [&](const std::vector<double>& v) {
    double s = 0;
    for (std::size_t k = 0; k + 2 < N; ++k) {
      const double d2 = (v[k + 2] - 2 * v[k + 1] + v[k]) / (h * h);
      s += h * d2 * d2;
    }
    return s;
  };
  for (std::size_t i = 2; i + 2 < N; ++i) {
    auto p = y, m = y;
    p[i] += 1e-5;
    m[i] -= 1e-5;
    CHECK(std::abs((J(p) - J(m)) / 2e-5) <= 1e-6);
  }
}

TEST_CASE("discrete checker") {
  HigherOrderProblem hp(TimeScale({0, 1, 2, 3, 4}), 1, 1, Expr::parse("dy[0]^2", {1, 1, 0}));
  Matrix r = discrete_el_residual(hp, GridFunction(hp.scale(), std::vector<double>{1, 3, 5, 7, 9}));
  CHECK(r.rows() == 3);
  CHECK(r.cwiseAbs().maxCoeff() == 0.0);

  HigherOrderProblem uneven(TimeScale({0, 1, 2.5, 3, 4}), 1, 1, Expr::parse("dy[0]^2", {1, 1, 0}));
  try {
    discrete_el_residual(uneven, GridFunction(uneven.scale(), std::vector<double>(5, 0.0)));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Domain);
  }
}

TEST_CASE("integral and discrete forms agree on unit-spaced scales") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> d(-1, 1);
  for (int r = 1; r <= 3; ++r) {
    const std::size_t N = static_cast<std::size_t>(2 * r + 4);
    std::vector<double> pts(N);
    for (std::size_t i = 0; i < N; ++i) pts[i] = static_cast<double>(i);
    const std::string top = "dy[0][" + std::to_string(r) + "]";
    HigherOrderProblem hp(TimeScale(pts), 1, r, Expr::parse(top + "^2 + y[0]^2 + t*dy[0][1]", {1, r, 0}),
                          std::vector<std::optional<Vector>>(static_cast<std::size_t>(r), v1(0.5)),
                          std::vector<std::optional<Vector>>(static_cast<std::size_t>(r), v1(-0.25)));
    auto sol = solve_higher_order(hp);
    CHECK(sol.report.pass());
    CHECK(ho_el_residual(hp, sol.y).max_least_squares <= 1e-8);
    CHECK(discrete_el_residual(hp, sol.y).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(detect_abnormal(reduce_to_control(hp), sol.reduced.y, sol.reduced.u).empty());

    Matrix v = sol.y.values();
    v(r, 0) += d(rng) > 0 ? 0.3 : -0.3;
    const GridFunction bad(hp.scale(), v);
    CHECK(ho_el_residual(hp, bad).max_least_squares > 1e-3);
    CHECK(discrete_el_residual(hp, bad).cwiseAbs().maxCoeff() > 1e-3);
  }
}

TEST_CASE("nested sums shift identity") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-5, 5);
  std::vector<double> pts(7);
  for (int i = 0; i < 7; ++i) pts[static_cast<std::size_t>(i)] = i;
  TimeScale ts(pts);
  std::vector<double> f(7);
  for (auto& x : f) x = d(rng);
  const GridFunction g(ts, f);
  // j = 1, i = 0: Δ of the running σ-sum is f^σ.
  const Matrix S = running_sigma_integral(ts, g.values());
  for (int k = 0; k < 5; ++k) CHECK(S(k + 1, 0) - S(k, 0) == doctest::Approx(f[static_cast<std::size_t>(k + 1)]));
  for (std::size_t j = 1; j <= 3; ++j) {
    for (std::size_t i = 0; i < j; ++i) CHECK(shift_identity_residual(g, j, i) <= 1e-12 * 1e3);
  }
  CHECK_THROWS_AS(shift_identity_residual(g, 1, 1), Error);
}

TEST_CASE("free boundary blocks carry transversality") {
  HigherOrderProblem hp(TimeScale::uniform(0, 1, 8), 1, 2, Expr::parse("dy[0][2]^2 + y[0]^2", {1, 2, 0}),
                        {v1(1), std::nullopt}, {std::nullopt, std::nullopt});
  auto sol = solve_higher_order(hp);
  CHECK(sol.report.pass());
  auto el = ho_el_residual(hp, sol.y);
  CHECK(el.transversality.count("a1") == 1);
  CHECK(el.transversality.count("b0") == 1);
  CHECK(el.transversality.count("b1") == 1);
  for (const auto& [k, v] : el.transversality) CHECK(v.cwiseAbs().maxCoeff() <= 1e-7);
}

TEST_CASE("reduction consistency") {
  auto hp = golden();
  auto a = solve_higher_order(hp);
  auto b = solve_lagrange(reduce_to_control(hp));
  CHECK((a.reduced.y.values() - b.y.values()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((a.reduced.costate.psi.values() - b.costate.psi.values()).cwiseAbs().maxCoeff() <= 1e-12);
}
