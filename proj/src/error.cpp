#include "deltavar/error.hpp"

namespace deltavar {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Domain: return "domain";
    case ErrorCode::InsufficientPoints: return "insufficient-points";
    case ErrorCode::ReversedBounds: return "reversed-bounds";
    case ErrorCode::Syntax: return "syntax";
    case ErrorCode::UnknownIdentifier: return "unknown-identifier";
    case ErrorCode::Arity: return "arity";
    case ErrorCode::Infeasible: return "infeasible";
    case ErrorCode::Degenerate: return "degenerate";
    case ErrorCode::NonConvergence: return "non-convergence";
    case ErrorCode::BudgetExceeded: return "budget-exceeded";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Schema: return "schema";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

}  // namespace deltavar
