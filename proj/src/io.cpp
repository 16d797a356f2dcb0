#include "deltavar/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "deltavar/error.hpp"
#include "json.hpp"

namespace deltavar::io {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------- parsing

[[noreturn]] void schema_error(const std::string& what) { throw Error(ErrorCode::Schema, what); }

const json& required(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) schema_error(std::string("missing field \"") + key + "\"");
  return j.at(key);
}

double number(const json& j, const std::string& what) {
  if (!j.is_number()) schema_error(what + " must be a number");
  return j.get<double>();
}

std::size_t count(const json& j, const std::string& what) {
  if (!j.is_number_integer() && !(j.is_number() && std::floor(j.get<double>()) == j.get<double>())) {
    schema_error(what + " must be an integer");
  }
  const double v = j.get<double>();
  if (v < 0) schema_error(what + " must be nonnegative");
  return static_cast<std::size_t>(v);
}

int dimension(const json& j, const std::string& what) {
  const std::size_t v = count(j, what);
  if (v < 1 || v > 64) schema_error(what + " must be between 1 and 64");
  return static_cast<int>(v);
}

std::string text(const json& j, const std::string& what) {
  if (!j.is_string()) schema_error(what + " must be a string");
  return j.get<std::string>();
}

TimeScale parse_scale(const json& j) {
  if (j.is_array()) {
    std::vector<double> pts;
    for (const auto& v : j) pts.push_back(number(v, "scale point"));
    return TimeScale(std::move(pts));
  }
  if (j.is_object() && j.contains("uniform")) {
    const json& u = j.at("uniform");
    return TimeScale::uniform(number(required(u, "a"), "uniform.a"), number(required(u, "b"), "uniform.b"),
                              count(required(u, "n"), "uniform.n"));
  }
  schema_error("scale must be an array of numbers or {\"uniform\": {\"a\", \"b\", \"n\"}}");
}

/// n numbers; a bare number is accepted when n == 1.
Vector parse_vector(const json& j, int n, const std::string& what) {
  if (n == 1 && j.is_number()) return Vector::Constant(1, j.get<double>());
  if (!j.is_array() || j.size() != static_cast<std::size_t>(n)) {
    schema_error(what + " must be an array of " + std::to_string(n) + " numbers");
  }
  Vector v(n);
  for (int k = 0; k < n; ++k) v(k) = number(j[static_cast<std::size_t>(k)], what);
  return v;
}

std::optional<Vector> parse_optional_vector(const json& obj, const char* key, int n) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return parse_vector(obj.at(key), n, key);
}

/// Rows of `cols` numbers; bare numbers stand for single-column rows.
Matrix parse_matrix(const json& j, std::size_t rows, int cols, const std::string& what) {
  if (!j.is_array() || j.size() != rows) {
    schema_error(what + " must have " + std::to_string(rows) + " rows");
  }
  Matrix M(static_cast<Eigen::Index>(rows), cols);
  for (std::size_t i = 0; i < rows; ++i) {
    M.row(static_cast<Eigen::Index>(i)) = parse_vector(j[i], cols, what).transpose();
  }
  return M;
}

Boundary parse_boundary(const json& obj, const char* key, int n) {
  if (!obj.contains(key) || obj.at(key).is_null()) return {};
  const json& j = obj.at(key);
  if (n == 1 && j.is_number()) return Boundary{j.get<double>()};
  if (!j.is_array() || j.size() != static_cast<std::size_t>(n)) {
    schema_error(std::string(key) + " must be an array of " + std::to_string(n) + " numbers or nulls");
  }
  Boundary b;
  for (const auto& v : j) {
    if (v.is_null()) {
      b.emplace_back(std::nullopt);
    } else {
      b.emplace_back(number(v, key));
    }
  }
  return b;
}

std::vector<std::optional<Vector>> parse_blocks(const json& bc, const char* key, int n, int r) {
  if (!bc.contains(key) || bc.at(key).is_null()) return {};
  const json& j = bc.at(key);
  if (!j.is_array() || j.size() != static_cast<std::size_t>(r)) {
    schema_error(std::string("bc.") + key + " must hold " + std::to_string(r) + " blocks");
  }
  std::vector<std::optional<Vector>> out;
  for (const auto& blk : j) {
    if (blk.is_null()) {
      out.emplace_back(std::nullopt);
    } else {
      out.emplace_back(parse_vector(blk, n, std::string("bc.") + key));
    }
  }
  return out;
}

Form parse_form(const json& j) {
  if (!j.contains("form")) return Form::Plain;
  const std::string f = text(j.at("form"), "form");
  if (f == "plain") return Form::Plain;
  if (f == "sigma") return Form::Sigma;
  schema_error("form must be \"plain\" or \"sigma\"");
}

GridSearchSpec parse_oracle(const json& j) {
  GridSearchSpec spec;
  const json& axes = required(j, "axes");
  if (!axes.is_array() || axes.empty()) schema_error("oracle.axes must be a nonempty array");
  for (const auto& a : axes) {
    spec.axes.push_back({number(required(a, "lo"), "axis lo"), number(required(a, "hi"), "axis hi"),
                         number(required(a, "step"), "axis step")});
  }
  if (j.contains("budget")) spec.budget = static_cast<std::uint64_t>(count(j.at("budget"), "oracle.budget"));
  return spec;
}

void parse_candidate(const json& j, ProblemFile& f, std::size_t N, int n, int m) {
  if (!j.is_object()) schema_error("candidate must be an object");
  if (j.contains("y")) f.candidate.y = parse_matrix(j.at("y"), N, n, "candidate.y");
  if (j.contains("u")) {
    if (m == 0) schema_error("candidate.u is only meaningful for control problems");
    f.candidate.u = parse_matrix(j.at("u"), N - 1, m, "candidate.u");
  }
  if (j.contains("psi")) {
    if (m == 0) schema_error("candidate.psi is only meaningful for control problems");
    f.candidate.psi = parse_matrix(j.at("psi"), N, n, "candidate.psi");
  }
  if (j.contains("psi0")) f.candidate.psi0 = number(j.at("psi0"), "candidate.psi0");
}

void parse_basic(const json& j, ProblemFile& f) {
  const TimeScale ts = parse_scale(required(j, "scale"));
  int n = 1;
  if (j.contains("n")) {
    n = dimension(j.at("n"), "n");
  } else if (j.contains("bc_a") && j.at("bc_a").is_array()) {
    n = static_cast<int>(j.at("bc_a").size());
  } else if (j.contains("bc_b") && j.at("bc_b").is_array()) {
    n = static_cast<int>(j.at("bc_b").size());
  }
  const Expr L = Expr::parse(text(required(j, "L"), "L"), {n, 1, 0});
  const Form form = parse_form(j);
  auto bc_a = parse_optional_vector(j, "bc_a", n);
  auto bc_b = parse_optional_vector(j, "bc_b", n);
  f.refine = RefineSpec{ts.front(), ts.back(), L, form, bc_a, bc_b};
  f.basic.emplace(ts, L, form, bc_a, bc_b);
  if (j.contains("reference")) {
    const json& r = j.at("reference");
    if (r.contains("y")) {
      const json& ys = r.at("y");
      if (!ys.is_array() || ys.size() != static_cast<std::size_t>(n)) {
        schema_error("reference.y must hold one expression per component");
      }
      for (const auto& e : ys) f.reference.push_back(Expr::parse(text(e, "reference.y"), {n, 0, 0}));
    } else if (r.contains("fine_n")) {
      f.reference_fine_n = count(r.at("fine_n"), "reference.fine_n");
    } else {
      schema_error("reference needs \"y\" or \"fine_n\"");
    }
  }
  if (j.contains("ladder")) {
    const json& l = j.at("ladder");
    if (!l.is_array()) schema_error("ladder must be an array");
    for (const auto& v : l) f.ladder.push_back(count(v, "ladder entry"));
  }
  if (j.contains("candidate")) parse_candidate(j.at("candidate"), f, ts.size(), n, 0);
}

void parse_control(const json& j, ProblemFile& f) {
  const TimeScale ts = parse_scale(required(j, "scale"));
  const int n = dimension(required(j, "n"), "n");
  const int m = dimension(required(j, "m"), "m");
  const Arity a{n, 0, m};
  const Expr L = Expr::parse(text(required(j, "L"), "L"), a);
  const json& phi_j = required(j, "phi");
  if (!phi_j.is_array() || phi_j.size() != static_cast<std::size_t>(n)) {
    schema_error("phi must hold one expression per state component");
  }
  std::vector<Expr> phi;
  for (const auto& e : phi_j) phi.push_back(Expr::parse(text(e, "phi"), a));
  ControlProblem p(ts, n, m, L, std::move(phi), parse_boundary(j, "bc_a", n), parse_boundary(j, "bc_b", n));
  if (j.contains("isoperimetric")) {
    json blocks = j.at("isoperimetric");
    if (blocks.is_object()) blocks = json::array({blocks});
    if (!blocks.is_array()) schema_error("isoperimetric must be an object or an array of objects");
    for (const auto& blk : blocks) {
      const Expr g = Expr::parse(text(required(blk, "g"), "isoperimetric.g"), {p.n(), 0, m});
      p = isoperimetric_reduce(p, g, number(required(blk, "beta"), "isoperimetric.beta"));
    }
  }
  f.control.emplace(std::move(p));
  if (j.contains("candidate")) parse_candidate(j.at("candidate"), f, ts.size(), f.control->n(), m);
}

void parse_higher_order(const json& j, ProblemFile& f) {
  const TimeScale ts = parse_scale(required(j, "scale"));
  const int n = j.contains("n") ? dimension(j.at("n"), "n") : 1;
  const int r = dimension(required(j, "r"), "r");
  const Expr L = Expr::parse(text(required(j, "L"), "L"), {n, r, 0});
  std::vector<std::optional<Vector>> bc_a, bc_b;
  if (j.contains("bc") && !j.at("bc").is_null()) {
    const json& bc = j.at("bc");
    if (!bc.is_object()) schema_error("bc must be an object with \"a\" and \"b\"");
    bc_a = parse_blocks(bc, "a", n, r);
    bc_b = parse_blocks(bc, "b", n, r);
  }
  f.higher_order.emplace(ts, n, r, L, bc_a, bc_b);
  if (j.contains("candidate")) parse_candidate(j.at("candidate"), f, ts.size(), n, 0);
}

// ---------------------------------------------------------------- reports

json to_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(to_json(v(i)));
  return a;
}

json to_json(const Matrix& M) {
  json a = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) a.push_back(to_json(Vector(M.row(i).transpose())));
  return a;
}

json to_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(to_json(x));
  return a;
}

json to_json(const GridFunction& g) { return {{"t", g.scale().points()}, {"values", to_json(g.values())}}; }

json to_json(const std::vector<Certificate>& checks) {
  json a = json::array();
  for (const auto& c : checks) {
    a.push_back({{"name", c.name}, {"residual", to_json(c.residual)}, {"tolerance", to_json(c.tolerance)},
                 {"pass", c.pass}});
  }
  return a;
}

json to_json(const std::map<std::string, Vector>& m) {
  json o = json::object();
  for (const auto& [k, v] : m) o[k] = to_json(v);
  return o;
}

double max_abs(const Matrix& M) { return M.size() ? M.cwiseAbs().maxCoeff() : 0.0; }

bool all_pass(const std::vector<Certificate>& checks) {
  for (const auto& c : checks) {
    if (!c.pass) return false;
  }
  return true;
}

json extremal_json(const ExtremalReport& r) {
  return {{"c_estimate", to_json(r.c_estimate)},
          {"el_integral_max_dev", to_json(r.el_integral_max_dev)},
          {"el_diff_residuals", to_json(r.el_diff_residuals)},
          {"transversality", to_json(r.transversality)},
          {"magnitude", to_json(r.magnitude)},
          {"hessian_positive_definite", r.hessian_positive_definite},
          {"iterations", r.iterations},
          {"method", r.method}};
}

json wmp_json(const WmpReport& r) {
  return {{"dynamics_y", to_json(r.dynamics_y)},
          {"dynamics_psi", to_json(r.dynamics_psi)},
          {"stationarity", to_json(r.stationarity)},
          {"transversality", to_json(r.transversality)},
          {"magnitude", to_json(r.magnitude)}};
}

json costate_json(const CostateTrajectory& c) { return {{"psi0", to_json(c.psi0)}, {"psi", to_json(c.psi)}}; }

json basis_json(const std::vector<GridFunction>& basis) {
  json a = json::array();
  for (const auto& g : basis) a.push_back(to_json(g));
  return a;
}

json higher_order_json(const HigherOrderProblem& hp, const GridFunction& y, const HigherOrderReport& r) {
  const HoElResidual& el = r.el;
  json out = {{"stationarity_max", to_json(max_abs(r.stationarity))},
              {"recursion_max", to_json(max_abs(r.recursion))},
              {"el",
               {{"anchored", to_json(el.anchored)},
                {"least_squares", to_json(el.least_squares)},
                {"d_anchored", to_json(el.d_anchored)},
                {"d_least_squares", to_json(el.d_least_squares)},
                {"max_anchored", to_json(el.max_anchored)},
                {"max_least_squares", to_json(el.max_least_squares)},
                {"magnitude", to_json(el.magnitude)},
                {"checked_points", to_json(el.checked_points)},
                {"unchecked_points", to_json(el.unchecked_points)},
                {"transversality", to_json(el.transversality)}}}};
  if (hp.scale().unit_spaced()) {
    const Matrix d = discrete_el_residual(hp, y);
    out["discrete_el"] = {{"residual", to_json(d)}, {"max", to_json(max_abs(d))}};
  }
  return out;
}

json header(Kind kind, Command command) {
  return {{"schema", std::string(kSchema)}, {"kind", std::string(to_string(kind))},
          {"command", std::string(to_string(command))}};
}

RunOutput finish(json report, const std::vector<Certificate>& checks) {
  RunOutput out;
  out.certified = all_pass(checks);
  report["checks"] = to_json(checks);
  report["certified"] = out.certified;
  report["classification"] = out.certified ? "stationary" : "not_stationary";
  out.report = report.dump(2) + "\n";
  return out;
}

Certificate boundary_certificate(double residual, double scale, double tol) {
  const double t = tol * (1.0 + scale);
  return {"boundary_conditions", residual, t, residual <= t};
}

// ---------------------------------------------------------------- helpers

struct Context {
  Tolerances tol;
  SolverOptions solver;
  double rel_tol = 1e-8;
  unsigned threads = 0;
};

Context make_context(const RunOptions& o) {
  Context c;
  if (o.tol) {
    if (!(*o.tol > 0) || !std::isfinite(*o.tol)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");
    c.tol.certificate = *o.tol;
    c.rel_tol = *o.tol;
  }
  c.solver.tol = c.tol;
  c.threads = o.threads;
  return c;
}

const Matrix& need(const std::optional<Matrix>& m, const char* what) {
  if (!m) schema_error(std::string("this command needs candidate.") + what);
  return *m;
}

GridSearchSpec oracle_spec(const ProblemFile& f, const Context& c) {
  if (!f.oracle) schema_error("the oracle needs an \"oracle\" block with grid axes");
  GridSearchSpec s = *f.oracle;
  s.threads = c.threads;
  return s;
}

json oracle_json(const GridSearchResult& r) {
  return {{"argmin", to_json(r.argmin)}, {"index", r.index},           {"objective", to_json(r.objective)},
          {"evaluated", r.evaluated},     {"feasible", r.feasible}};
}

GridFunction basic_oracle_trajectory(const BasicProblem& p, const std::vector<double>& x) {
  const std::size_t N = p.scale().size();
  const int n = p.n();
  Matrix Y = Matrix::Zero(static_cast<Eigen::Index>(N), n);
  if (p.bc_a()) Y.row(0) = p.bc_a()->transpose();
  if (p.bc_b()) Y.row(static_cast<Eigen::Index>(N - 1)) = p.bc_b()->transpose();
  std::size_t s = 0;
  for (std::size_t i = 0; i < N; ++i) {
    if ((i == 0 && p.bc_a()) || (i == N - 1 && p.bc_b())) continue;
    for (int k = 0; k < n; ++k) Y(static_cast<Eigen::Index>(i), k) = x[s++];
  }
  return GridFunction(p.scale(), Y);
}

/// Forward simulation of the dynamics from the fixed y(a).
std::pair<GridFunction, GridFunction> control_oracle_trajectory(const ControlProblem& p,
                                                                const std::vector<double>& x) {
  const TimeScale& ts = p.scale();
  const std::size_t N = ts.size();
  const int n = p.n(), m = p.m();
  Matrix Y(static_cast<Eigen::Index>(N), n), U(static_cast<Eigen::Index>(N - 1), m);
  for (int k = 0; k < n; ++k) Y(0, k) = *p.bc_a()[static_cast<std::size_t>(k)];
  const VarLayout layout = p.lagrangian().layout();
  std::vector<double> pt(layout.size(), 0.0);
  for (std::size_t i = 0; i + 1 < N; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (int l = 0; l < m; ++l) U(row, l) = x[i * static_cast<std::size_t>(m) + static_cast<std::size_t>(l)];
    pt[layout.time()] = ts[i];
    pt[layout.mu()] = ts.mu(i);
    for (int k = 0; k < n; ++k) pt[layout.state(k)] = Y(row, k);
    for (int l = 0; l < m; ++l) pt[layout.control(l)] = U(row, l);
    for (int k = 0; k < n; ++k) Y(row + 1, k) = Y(row, k) + ts.mu(i) * p.phi()[static_cast<std::size_t>(k)].value(pt);
  }
  return {GridFunction(ts, Y), GridFunction(k_restriction(ts, 1), U)};
}

/// Appends the oracle block and the objective-bound certificate.
void add_oracle(json& report, std::vector<Certificate>& checks, const GridSearchResult& r,
                std::optional<double> candidate_objective, double tol) {
  report["oracle"] = oracle_json(r);
  const double bound = tol * (1.0 + std::abs(r.objective));
  const double residual = candidate_objective ? std::max(0.0, *candidate_objective - r.objective)
                                              : std::numeric_limits<double>::infinity();
  checks.push_back({"oracle_objective_bound", residual, bound, residual <= bound});
}

// ---------------------------------------------------------------- commands

RunOutput solve_cmd(const ProblemFile& f, const Context& c) {
  json rep = header(f.kind, Command::Solve);
  switch (f.kind) {
    case Kind::Basic: {
      const auto sol = solve_basic(*f.basic, c.solver);
      rep["solution"] = {{"y", to_json(sol.y)}, {"objective", to_json(evaluate_functional(*f.basic, sol.y))}};
      rep["report"] = extremal_json(sol.report);
      return finish(rep, sol.report.checks);
    }
    case Kind::Control: {
      const ControlProblem& p = *f.control;
      const auto sol = solve_lagrange(p, c.solver);
      rep["solution"] = {{"y", to_json(sol.y)},
                         {"u", to_json(sol.u)},
                         {"costate", costate_json(sol.costate)},
                         {"multipliers", to_json(sol.multipliers)},
                         {"objective", to_json(transcribe(p, sol.y, sol.u).objective)}};
      rep["report"] = wmp_json(sol.report);
      rep["report"]["hessian_positive_definite"] = sol.hessian_positive_definite;
      rep["report"]["iterations"] = sol.iterations;
      rep["report"]["method"] = sol.method;
      rep["abnormal_basis"] = basis_json(detect_abnormal(p, sol.y, sol.u));
      auto checks = sol.report.checks;
      if (c.rel_tol != 1e-8) checks = wmp_residuals(p, sol.y, sol.u, sol.costate, c.rel_tol).checks;
      return finish(rep, checks);
    }
    case Kind::HigherOrder: {
      const HigherOrderProblem& hp = *f.higher_order;
      const auto sol = solve_higher_order(hp, c.solver);
      json derivs = json::array(), psi = json::array();
      for (const auto& d : sol.derivatives) derivs.push_back(to_json(d));
      for (const auto& g : sol.psi) psi.push_back(to_json(g));
      rep["solution"] = {{"y", to_json(sol.y)},
                         {"derivatives", derivs},
                         {"psi", psi},
                         {"objective", to_json(evaluate_functional(hp, sol.y))}};
      rep["report"] = higher_order_json(hp, sol.y, sol.report);
      rep["report"]["iterations"] = sol.reduced.iterations;
      rep["report"]["method"] = sol.reduced.method;
      rep["report"]["hessian_positive_definite"] = sol.reduced.hessian_positive_definite;
      return finish(rep, sol.report.checks);
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown problem kind");
}

RunOutput check_cmd(const ProblemFile& f, const Context& c, bool with_oracle) {
  json rep = header(f.kind, Command::Check);
  const double tol = c.tol.certificate;
  switch (f.kind) {
    case Kind::Basic: {
      const BasicProblem& p = *f.basic;
      const GridFunction y(p.scale(), need(f.candidate.y, "y"));
      const ExtremalReport r = certify_basic(p, y, c.tol);
      auto checks = r.checks;
      double dev = 0.0, size = 0.0;
      if (p.bc_a()) {
        dev = std::max(dev, (y.at(0) - *p.bc_a()).cwiseAbs().maxCoeff());
        size = std::max(size, p.bc_a()->cwiseAbs().maxCoeff());
      }
      if (p.bc_b()) {
        dev = std::max(dev, (y.at(y.size() - 1) - *p.bc_b()).cwiseAbs().maxCoeff());
        size = std::max(size, p.bc_b()->cwiseAbs().maxCoeff());
      }
      if (p.bc_a() || p.bc_b()) checks.push_back(boundary_certificate(dev, size, tol));
      std::optional<double> J;
      try {
        J = evaluate_functional(p, y);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Infeasible) throw;
      }
      rep["candidate"] = {{"y", to_json(y)}, {"objective", J ? to_json(*J) : json(nullptr)}};
      rep["report"] = extremal_json(r);
      if (with_oracle) {
        const auto o = brute_force_minimize(p, oracle_spec(f, c));
        add_oracle(rep, checks, o, J, tol);
        rep["oracle"]["trajectory"] = to_json(basic_oracle_trajectory(p, o.argmin));
      }
      return finish(rep, checks);
    }
    case Kind::Control: {
      const ControlProblem& p = *f.control;
      const TimeScale& ts = p.scale();
      const GridFunction y(ts, need(f.candidate.y, "y"));
      const GridFunction u(k_restriction(ts, 1), need(f.candidate.u, "u"));
      CostateTrajectory costate{f.candidate.psi0, GridFunction(ts, Matrix::Zero(static_cast<Eigen::Index>(ts.size()), p.n()))};
      std::string source = "candidate";
      if (f.candidate.psi) {
        costate.psi = GridFunction(ts, *f.candidate.psi);
      } else {
        // Terminal value from the transcription multipliers, then the sweep.
        source = "kkt";
        Vector terminal = Vector::Zero(p.n());
        try {
          const auto k = kkt_multipliers(p, y, u);
          if (k.feasible) {
            const auto last = k.multipliers.rows() - 1;
            terminal = -k.multipliers.row(last).transpose() / ts.mu(static_cast<std::size_t>(last));
            terminal *= f.candidate.psi0;
          }
        } catch (const Error& e) {
          if (e.code() != ErrorCode::Degenerate) throw;
        }
        costate = costate_sweep(p, y, u, f.candidate.psi0, terminal);
      }
      const WmpReport r = wmp_residuals(p, y, u, costate, c.rel_tol);
      auto checks = r.checks;
      double dev = 0.0, size = 0.0;
      bool any = false;
      for (int k = 0; k < p.n(); ++k) {
        const auto sk = static_cast<std::size_t>(k);
        if (const auto& v = p.bc_a()[sk]) {
          dev = std::max(dev, std::abs(y.values()(0, k) - *v));
          size = std::max(size, std::abs(*v));
          any = true;
        }
        if (const auto& v = p.bc_b()[sk]) {
          dev = std::max(dev, std::abs(y.values()(static_cast<Eigen::Index>(ts.size() - 1), k) - *v));
          size = std::max(size, std::abs(*v));
          any = true;
        }
      }
      if (any) checks.push_back(boundary_certificate(dev, size, tol));
      const double J = transcribe(p, y, u).objective;
      rep["candidate"] = {{"y", to_json(y)}, {"u", to_json(u)}, {"objective", to_json(J)}};
      rep["costate"] = costate_json(costate);
      rep["costate_source"] = source;
      rep["report"] = wmp_json(r);
      if (with_oracle) {
        const auto o = brute_force_minimize(p, oracle_spec(f, c));
        add_oracle(rep, checks, o, J, tol);
        const auto [oy, ou] = control_oracle_trajectory(p, o.argmin);
        rep["oracle"]["trajectory"] = {{"y", to_json(oy)}, {"u", to_json(ou)}};
      }
      return finish(rep, checks);
    }
    case Kind::HigherOrder: {
      const HigherOrderProblem& hp = *f.higher_order;
      const GridFunction y(hp.scale(), need(f.candidate.y, "y"));
      const HigherOrderReport r = certify_higher_order(hp, y, c.tol);
      auto checks = r.checks;
      const auto stack = derivative_stack(hp, y);
      double dev = 0.0, size = 0.0;
      bool any = false;
      for (std::size_t i = 0; i < static_cast<std::size_t>(hp.r()); ++i) {
        if (const auto& blk = hp.bc_a()[i]) {
          dev = std::max(dev, (stack[i].at(0) - *blk).cwiseAbs().maxCoeff());
          size = std::max(size, blk->cwiseAbs().maxCoeff());
          any = true;
        }
        if (const auto& blk = hp.bc_b()[i]) {
          dev = std::max(dev, (stack[i].at(hp.end_index()) - *blk).cwiseAbs().maxCoeff());
          size = std::max(size, blk->cwiseAbs().maxCoeff());
          any = true;
        }
      }
      if (any) checks.push_back(boundary_certificate(dev, size, tol));
      const double J = evaluate_functional(hp, y);
      rep["candidate"] = {{"y", to_json(y)}, {"objective", to_json(J)}};
      rep["report"] = higher_order_json(hp, y, r);
      if (with_oracle) {
        const auto o = brute_force_minimize(hp, oracle_spec(f, c));
        add_oracle(rep, checks, o, J, tol);
        rep["oracle"]["trajectory"] = to_json(higher_order_trajectory(hp, o.argmin));
      }
      return finish(rep, checks);
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown problem kind");
}

RunOutput abnormal_cmd(const ProblemFile& f, const Context& c) {
  json rep = header(f.kind, Command::Abnormal);
  std::vector<GridFunction> basis;
  switch (f.kind) {
    case Kind::Basic: {
      const BasicProblem& p = *f.basic;
      const GridFunction y =
          f.candidate.y ? GridFunction(p.scale(), *f.candidate.y) : solve_basic(p, c.solver).y;
      basis = detect_abnormal(embed_basic(p), y, delta_derivative(y));
      rep["trajectory"] = {{"y", to_json(y)}};
      break;
    }
    case Kind::Control: {
      const ControlProblem& p = *f.control;
      if (f.candidate.y || f.candidate.u) {
        const GridFunction y(p.scale(), need(f.candidate.y, "y"));
        const GridFunction u(k_restriction(p.scale(), 1), need(f.candidate.u, "u"));
        basis = detect_abnormal(p, y, u);
        rep["trajectory"] = {{"y", to_json(y)}, {"u", to_json(u)}};
      } else {
        const auto sol = solve_lagrange(p, c.solver);
        basis = detect_abnormal(p, sol.y, sol.u);
        rep["trajectory"] = {{"y", to_json(sol.y)}, {"u", to_json(sol.u)}};
      }
      break;
    }
    case Kind::HigherOrder: {
      const HigherOrderProblem& hp = *f.higher_order;
      const GridFunction y =
          f.candidate.y ? GridFunction(hp.scale(), *f.candidate.y) : solve_higher_order(hp, c.solver).y;
      const auto stack = derivative_stack(hp, y);
      const auto n = static_cast<Eigen::Index>(hp.n());
      const auto K = static_cast<Eigen::Index>(hp.end_index());
      Matrix X(K + 1, n * hp.r());
      for (int j = 0; j < hp.r(); ++j) X.middleCols(j * n, n) = stack[static_cast<std::size_t>(j)].values().topRows(K + 1);
      const auto r = static_cast<std::size_t>(hp.r());
      const GridFunction x(k_restriction(hp.scale(), r - 1), X);
      const GridFunction u(k_restriction(hp.scale(), r), Matrix(stack[r].values().topRows(K)));
      basis = detect_abnormal(reduce_to_control(hp), x, u);
      rep["trajectory"] = {{"y", to_json(y)}};
      break;
    }
  }
  rep["abnormal_basis"] = basis_json(basis);
  rep["dimension"] = basis.size();
  rep["normal"] = basis.empty();
  RunOutput out;
  out.report = rep.dump(2) + "\n";
  return out;
}

RunOutput oracle_cmd(const ProblemFile& f, const Context& c) {
  json rep = header(f.kind, Command::Oracle);
  const GridSearchSpec spec = oracle_spec(f, c);
  switch (f.kind) {
    case Kind::Basic: {
      const auto r = brute_force_minimize(*f.basic, spec);
      rep["oracle"] = oracle_json(r);
      rep["oracle"]["trajectory"] = to_json(basic_oracle_trajectory(*f.basic, r.argmin));
      break;
    }
    case Kind::Control: {
      const auto r = brute_force_minimize(*f.control, spec);
      rep["oracle"] = oracle_json(r);
      const auto [y, u] = control_oracle_trajectory(*f.control, r.argmin);
      rep["oracle"]["trajectory"] = {{"y", to_json(y)}, {"u", to_json(u)}};
      break;
    }
    case Kind::HigherOrder: {
      const auto r = brute_force_minimize(*f.higher_order, spec);
      rep["oracle"] = oracle_json(r);
      rep["oracle"]["trajectory"] = to_json(higher_order_trajectory(*f.higher_order, r.argmin));
      break;
    }
  }
  RunOutput out;
  out.report = rep.dump(2) + "\n";
  return out;
}

std::string format(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

RunOutput refine_cmd(const ProblemFile& f, const Context& c, const std::vector<std::size_t>& ladder_override) {
  if (f.kind != Kind::Basic) throw Error(ErrorCode::InvalidArgument, "refine supports basic problems only");
  const std::vector<std::size_t>& ladder = ladder_override.empty() ? f.ladder : ladder_override;
  ConvergenceTable table;
  json ref;
  if (!f.reference.empty()) {
    table = refine_study(*f.refine, ladder, expression_reference(f.reference), c.threads);
    json ys = json::array();
    for (const auto& e : f.reference) ys.push_back(e.to_string());
    ref = {{"y", ys}};
  } else if (f.reference_fine_n > 0) {
    table = refine_study(*f.refine, ladder, f.reference_fine_n, c.threads);
    ref = {{"fine_n", f.reference_fine_n}};
  } else {
    schema_error("refine needs a \"reference\" block");
  }
  json rep = header(f.kind, Command::Refine);
  json rows = json::array();
  std::ostringstream csv;
  csv << "n,h,error,error_values,error_derivative,ratio,order\n";
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    const auto& r = table.rows[k];
    rows.push_back({{"n", r.n},
                    {"h", to_json(r.h)},
                    {"error", to_json(r.error)},
                    {"error_values", to_json(r.error_values)},
                    {"error_derivative", to_json(r.error_derivative)}});
    csv << r.n << ',' << format(r.h) << ',' << format(r.error) << ',' << format(r.error_values) << ','
        << format(r.error_derivative) << ',' << (k ? format(table.ratios[k - 1]) : "") << ','
        << (k ? format(table.orders[k - 1]) : "") << '\n';
  }
  rep["rows"] = rows;
  rep["ratios"] = to_json(table.ratios);
  rep["orders"] = to_json(table.orders);
  rep["norm"] = "sup|y - y_ref| + sup|y^delta - y_ref'|";
  rep["reference"] = ref;
  RunOutput out;
  out.report = rep.dump(2) + "\n";
  out.csv = csv.str();
  return out;
}

}  // namespace

ProblemFile parse_problem(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    schema_error(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) schema_error("problem file must be a JSON object");
  if (text(required(j, "schema"), "schema") != kSchema) {
    schema_error("unsupported schema (expected \"" + std::string(kSchema) + "\")");
  }
  ProblemFile f;
  const std::string kind = text(required(j, "kind"), "kind");
  try {
    if (kind == "basic") {
      f.kind = Kind::Basic;
      parse_basic(j, f);
    } else if (kind == "control") {
      f.kind = Kind::Control;
      parse_control(j, f);
    } else if (kind == "higher_order") {
      f.kind = Kind::HigherOrder;
      parse_higher_order(j, f);
    } else {
      schema_error("kind must be \"basic\", \"control\" or \"higher_order\"");
    }
    if (j.contains("oracle")) f.oracle = parse_oracle(j.at("oracle"));
  } catch (const json::exception& e) {
    schema_error(e.what());
  }
  return f;
}

ProblemFile load_problem(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::Io, "cannot read " + path);
  return parse_problem(buf.str());
}

Command parse_command(std::string_view name) {
  if (name == "solve") return Command::Solve;
  if (name == "check") return Command::Check;
  if (name == "abnormal") return Command::Abnormal;
  if (name == "refine") return Command::Refine;
  if (name == "oracle") return Command::Oracle;
  throw Error(ErrorCode::InvalidArgument, "unknown command \"" + std::string(name) + "\"");
}

std::string_view to_string(Command c) noexcept {
  switch (c) {
    case Command::Solve: return "solve";
    case Command::Check: return "check";
    case Command::Abnormal: return "abnormal";
    case Command::Refine: return "refine";
    case Command::Oracle: return "oracle";
  }
  return "?";
}

std::string_view to_string(Kind k) noexcept {
  switch (k) {
    case Kind::Basic: return "basic";
    case Kind::Control: return "control";
    case Kind::HigherOrder: return "higher_order";
  }
  return "?";
}

RunOutput run(Command command, const ProblemFile& problem, const RunOptions& options) {
  const Context c = make_context(options);
  switch (command) {
    case Command::Solve: return solve_cmd(problem, c);
    case Command::Check: return check_cmd(problem, c, options.oracle);
    case Command::Abnormal: return abnormal_cmd(problem, c);
    case Command::Refine: return refine_cmd(problem, c, options.ladder);
    case Command::Oracle: return oracle_cmd(problem, c);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown command");
}

}  // namespace deltavar::io
