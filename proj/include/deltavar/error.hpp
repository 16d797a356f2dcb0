#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace deltavar {

enum class ErrorCode {
  Domain = 1,
  InsufficientPoints,
  ReversedBounds,
  Syntax,
  UnknownIdentifier,
  Arity,
  Infeasible,
  Degenerate,
  NonConvergence,
  BudgetExceeded,
  InvalidArgument,
  Schema,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Base exception for every failure raised by the library. The code maps 1:1
/// onto the C API status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failure; carries the byte offset into the source text.
class SyntaxError : public Error {
 public:
  SyntaxError(ErrorCode code, const std::string& what, std::size_t offset)
      : Error(code, what + " at offset " + std::to_string(offset)),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Iterative solver gave up; the best iterate found (flattened unknowns) is kept.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, std::vector<double> best,
                      double best_residual)
      : Error(ErrorCode::NonConvergence, what),
        best_(std::move(best)),
        best_residual_(best_residual) {}

  const std::vector<double>& best_iterate() const noexcept { return best_; }
  double best_residual() const noexcept { return best_residual_; }

 private:
  std::vector<double> best_;
  double best_residual_;
};

}  // namespace deltavar
