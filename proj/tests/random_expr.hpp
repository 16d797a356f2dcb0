#pragma once

// Random expression generators shared by the property tests.

#include <random>
#include <string>

#include "deltavar/expr.hpp"

namespace deltavar::testing {

inline NodePtr random_polynomial(std::mt19937_64& rng, Arity a, int depth) {
  std::uniform_int_distribution<int> pick(0, 9);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  const int k = depth <= 0 ? pick(rng) % 3 : pick(rng);
  auto leaf_var = [&]() -> NodePtr {
    std::uniform_int_distribution<int> kind(0, 4);
    switch (kind(rng)) {
      case 0: return Node::variable({VarRef::Kind::Time, 0, 0});
      case 1:
        if (a.m > 0) return Node::variable({VarRef::Kind::Control, static_cast<int>(rng() % a.m), 0});
        [[fallthrough]];
      case 2:
        if (a.r > 0) {
          return Node::variable({VarRef::Kind::Derivative, static_cast<int>(rng() % a.n),
                                 1 + static_cast<int>(rng() % a.r)});
        }
        [[fallthrough]];
      default: return Node::variable({VarRef::Kind::State, static_cast<int>(rng() % a.n), 0});
    }
  };
  switch (k) {
    case 0: return Node::number(std::round(coef(rng) * 100) / 100);
    case 1:
    case 2: return leaf_var();
    case 3:
    case 4: return Node::binary(Node::Op::Add, random_polynomial(rng, a, depth - 1), random_polynomial(rng, a, depth - 1));
    case 5: return Node::binary(Node::Op::Sub, random_polynomial(rng, a, depth - 1), random_polynomial(rng, a, depth - 1));
    case 6:
    case 7: return Node::binary(Node::Op::Mul, random_polynomial(rng, a, depth - 1), random_polynomial(rng, a, depth - 1));
    case 8: return Node::unary(Node::Op::Neg, random_polynomial(rng, a, depth - 1));
    default:
      return Node::binary(Node::Op::Pow, random_polynomial(rng, a, depth - 1),
                          Node::number(static_cast<double>(rng() % 3)));
  }
}

}  // namespace deltavar::testing
