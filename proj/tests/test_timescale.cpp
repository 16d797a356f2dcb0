#include "test_main.hpp"

#include <cstdint>
#include <numeric>
#include <random>

#include "deltavar/error.hpp"
#include "deltavar/timescale.hpp"

using namespace deltavar;

namespace {

// Minimal exact rational used as an independent oracle for the
// integration-by-parts formulas.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Rational(std::int64_t n = 0, std::int64_t d = 1) : num(n), den(d) { normalize(); }
  void normalize() {
    if (den < 0) { num = -num; den = -den; }
    const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) { num /= g; den /= g; }
  }
  friend Rational operator+(Rational a, Rational b) { return {a.num * b.den + b.num * a.den, a.den * b.den}; }
  friend Rational operator-(Rational a, Rational b) { return {a.num * b.den - b.num * a.den, a.den * b.den}; }
  friend Rational operator*(Rational a, Rational b) { return {a.num * b.num, a.den * b.den}; }
  friend Rational operator/(Rational a, Rational b) { return {a.num * b.den, a.den * b.num}; }
  friend bool operator==(Rational a, Rational b) { return a.num == b.num && a.den == b.den; }
};

GridFunction scalar(const std::vector<double>& pts, const std::vector<double>& vals) {
  return GridFunction(TimeScale(pts), vals);
}

}  // namespace

TEST_CASE("jump operators") {
  TimeScale ts({1, 2, 4});
  auto j = jump_operators(ts, 1);
  CHECK(j.sigma == 2);
  CHECK(j.rho == 1);
  CHECK(j.mu == 1);

  j = jump_operators(ts, 4);
  CHECK(j.sigma == 4);
  CHECK(j.rho == 2);
  CHECK(j.mu == 0);

  TimeScale ts2({0, 0.5, 0.75, 3});
  j = jump_operators(ts2, 0.75);
  CHECK(j.sigma == 3);
  CHECK(j.rho == 0.5);
  CHECK(j.mu == 2.25);

  CHECK_THROWS_AS(jump_operators(ts, 3), Error);
  try {
    jump_operators(ts, 3);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Domain);
  }
}

TEST_CASE("time scale construction rejects bad point sets") {
  CHECK_THROWS_AS(TimeScale({1.0}), Error);
  CHECK_THROWS_AS(TimeScale({0.0, 0.0, 1.0}), Error);
  CHECK_THROWS_AS(TimeScale({0.0, 2.0, 1.0}), Error);
}

TEST_CASE("delta derivative") {
  auto d = delta_derivative(scalar({0, 1, 3}, {0, 2, 8}), 1);
  REQUIRE(d.size() == 2);
  CHECK(d.values()(0, 0) == 2);
  CHECK(d.values()(1, 0) == 3);
  CHECK(d.scale().points() == std::vector<double>{0, 1});

  d = delta_derivative(scalar({0, 1, 2, 3}, {0, 1, 4, 9}), 2);
  REQUIRE(d.size() == 2);
  CHECK(d.values()(0, 0) == 2);
  CHECK(d.values()(1, 0) == 2);

  d = delta_derivative(scalar({0, 1}, {5, 5}), 1);
  REQUIRE(d.size() == 1);
  CHECK(d.values()(0, 0) == 0);

  try {
    delta_derivative(scalar({0, 1}, {5, 5}), 2);
    FAIL("expected insufficient points");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientPoints);
  }
}

TEST_CASE("delta integral") {
  auto f = scalar({0, 1, 3}, {0, 2, 8});
  CHECK(delta_integral(f, 0.0, 3.0)(0) == 4);
  CHECK(delta_integral(f, 1.0, 1.0)(0) == 0);
  CHECK(delta_integral(f, 1.0, 3.0)(0) == 4);
  try {
    delta_integral(f, 3.0, 1.0);
    FAIL("expected reversed bounds");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ReversedBounds);
  }
  CHECK_THROWS_AS(delta_integral(f, 0.5, 3.0), Error);
}

TEST_CASE("k restriction") {
  TimeScale ts({0, 1, 2, 3});
  CHECK(k_restriction(ts, 1).points() == std::vector<double>{0, 1, 2});
  CHECK(k_restriction(ts, 3).points() == std::vector<double>{0});
  CHECK(k_restriction(ts, 0).points() == ts.points());
  try {
    k_restriction(TimeScale({0, 1}), 2);
    FAIL("expected insufficient points");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientPoints);
  }
}

TEST_CASE("integration by parts: hand cases") {
  auto r = integration_by_parts_residuals(scalar({0, 1, 2}, {1, 1, 1}), scalar({0, 1, 2}, {0, 1, 2}));
  CHECK(r.sigma_form == 0);
  CHECK(r.plain_form == 0);

  // Hand expansion: [fg] = -3, ∫f^σ g^Δ = -4, ∫f^Δ g = 1, ∫f g^Δ = 4, ∫f^Δ g^σ = -7.
  r = integration_by_parts_residuals(scalar({0, 1, 3}, {1, 2, 0}), scalar({0, 1, 3}, {3, 1, 4}));
  CHECK(r.sigma_form <= 1e-12 * r.magnitude);
  CHECK(r.plain_form <= 1e-12 * r.magnitude);

  CHECK_THROWS_AS(integration_by_parts_residuals(scalar({0, 1, 3}, {1, 2, 0}),
                                                 scalar({0, 1, 2}, {3, 1, 4})),
                  Error);
}

TEST_CASE("integration by parts: exact rational oracle on {0, 1/2, 2, 9/4}") {
  const std::vector<Rational> pts{Rational(0), Rational(1, 2), Rational(2), Rational(9, 4)};
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dist(-9, 9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::int64_t> fi(4), gi(4);
    for (int k = 0; k < 4; ++k) {
      fi[k] = dist(rng);
      gi[k] = dist(rng);
    }
    // Exact evaluation of both sides of both formulas.
    Rational lhs1, rhs1, lhs2, rhs2;
    const Rational boundary = Rational(fi[3] * gi[3]) - Rational(fi[0] * gi[0]);
    for (int k = 0; k < 3; ++k) {
      const Rational mu = pts[k + 1] - pts[k];
      const Rational df = (Rational(fi[k + 1]) - Rational(fi[k])) / mu;
      const Rational dg = (Rational(gi[k + 1]) - Rational(gi[k])) / mu;
      lhs1 = lhs1 + mu * Rational(fi[k + 1]) * dg;
      rhs1 = rhs1 + mu * df * Rational(gi[k]);
      lhs2 = lhs2 + mu * Rational(fi[k]) * dg;
      rhs2 = rhs2 + mu * df * Rational(gi[k + 1]);
    }
    REQUIRE(lhs1 == boundary - rhs1);
    REQUIRE(lhs2 == boundary - rhs2);

    std::vector<double> fd(fi.begin(), fi.end()), gd(gi.begin(), gi.end());
    auto r = integration_by_parts_residuals(scalar({0, 0.5, 2, 2.25}, fd), scalar({0, 0.5, 2, 2.25}, gd));
    CHECK(r.sigma_form <= 1e-12 * r.magnitude);
    CHECK(r.plain_form <= 1e-12 * r.magnitude);
  }
}

TEST_CASE("calculus identities hold on random scales") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> gap(0.1, 2.0), coef(-2.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + trial % 20;
    std::vector<double> pts{coef(rng)};
    for (int i = 1; i < n; ++i) pts.push_back(pts.back() + gap(rng));
    TimeScale ts(pts);
    Matrix fv(n, 2);
    for (int i = 0; i < n; ++i) {
      fv(i, 0) = coef(rng) + coef(rng) * pts[i] + coef(rng) * pts[i] * pts[i];
      fv(i, 1) = coef(rng);
    }
    GridFunction f(ts, fv);
    auto fd = delta_derivative(f, 1);
    auto fs = sigma_shift(f);
    double mag = 1.0 + fv.cwiseAbs().maxCoeff() + fd.values().cwiseAbs().maxCoeff();
    for (int i = 0; i + 1 < n; ++i) {
      for (int c = 0; c < 2; ++c) {
        CHECK(std::abs(fs.values()(i, c) - (fv(i, c) + ts.mu(i) * fd.values()(i, c))) <= 1e-12 * mag);
      }
    }
    // Fundamental theorem.
    Vector integral = delta_integral_by_index(fd, 0, static_cast<std::size_t>(n - 2));
    Vector full = integral + ts.mu(n - 2) * fd.at(static_cast<std::size_t>(n - 2));
    CHECK((full - (f.at(n - 1) - f.at(0))).cwiseAbs().maxCoeff() <= 1e-12 * mag * n);
  }
}

TEST_CASE("unit spacing gives forward differences") {
  TimeScale ts({3, 4, 5, 6, 7});
  GridFunction f(ts, std::vector<double>{1, -2, 5, 0, 4});
  auto d = delta_derivative(f, 1);
  for (int i = 0; i < 4; ++i) CHECK(d.values()(i, 0) == f.values()(i + 1, 0) - f.values()(i, 0));
  CHECK(ts.unit_spaced());
  CHECK_FALSE(TimeScale({0, 1, 3}).unit_spaced());
}

TEST_CASE("running sigma integral uses the parent graininess") {
  TimeScale ts({0, 1, 3});
  Matrix rows(2, 1);
  rows << 5, 7;  // a sequence living on T^k
  Matrix s = running_sigma_integral(ts, rows);
  CHECK(s(0, 0) == 5);        // ∫_0^1
  CHECK(s(1, 0) == 5 + 14);   // ∫_0^3
  auto mu = graininess(ts);
  CHECK(mu.values()(2, 0) == 0);
  CHECK(delta_derivative(mu, 1).values()(0, 0) == 1);
}
