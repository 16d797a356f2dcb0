#pragma once

// Problem files and reports (JSON, schema "deltavar/1").
//
// Problem files carry a "kind" of "basic", "control" or "higher_order"; see
// docs/schema.md. Reports are deterministic JSON text: keys sorted, numbers
// printed to round-trip precision, non-finite values as null.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deltavar/control.hpp"
#include "deltavar/higher_order.hpp"
#include "deltavar/oracle.hpp"
#include "deltavar/refine.hpp"
#include "deltavar/variational.hpp"

namespace deltavar::io {

inline constexpr std::string_view kSchema = "deltavar/1";

enum class Kind { Basic, Control, HigherOrder };

enum class Command { Solve, Check, Abnormal, Refine, Oracle };

/// Candidate trajectory supplied for `check` and `abnormal`.
struct Candidate {
  std::optional<Matrix> y;    // rows on the scale
  std::optional<Matrix> u;    // rows on T^k (control problems)
  std::optional<Matrix> psi;  // rows on the scale (control problems)
  double psi0 = 1.0;
};

struct ProblemFile {
  Kind kind = Kind::Basic;
  std::optional<BasicProblem> basic;
  std::optional<ControlProblem> control;
  std::optional<HigherOrderProblem> higher_order;

  std::optional<RefineSpec> refine;      // basic problems
  std::vector<Expr> reference;           // analytic reference, one per component
  std::size_t reference_fine_n = 0;      // or a fine-grid reference
  std::vector<std::size_t> ladder;       // default ladder

  Candidate candidate;
  std::optional<GridSearchSpec> oracle;
};

/// Throws Error(Schema) on malformed JSON or schema violations; expression,
/// scale and problem-construction errors keep their own codes.
ProblemFile parse_problem(std::string_view json_text);

/// Throws Error(Io) when the file cannot be read.
ProblemFile load_problem(const std::string& path);

struct RunOptions {
  std::optional<double> tol;          // certificate tolerance override (> 0)
  bool oracle = false;                // `check`: compare with the grid oracle
  std::vector<std::size_t> ladder;    // `refine`: overrides the file's ladder
  unsigned threads = 0;               // 0: DELTAVAR_THREADS or hardware
};

struct RunOutput {
  std::string report;  // JSON
  std::string csv;     // `refine` only
  bool certified = true;
};

/// Throws Error(InvalidArgument) on unknown names.
Command parse_command(std::string_view name);
std::string_view to_string(Command c) noexcept;
std::string_view to_string(Kind k) noexcept;

/// Runs one command. `certified` is false when a residual certificate fails.
RunOutput run(Command command, const ProblemFile& problem, const RunOptions& options = {});

}  // namespace deltavar::io
