#include "test_main.hpp"

#include <string>

#include "deltavar/error.hpp"
#include "deltavar/io.hpp"
#include "json.hpp"

using namespace deltavar;
using nlohmann::json;

namespace {

const char* kLq = R"({
  "schema": "deltavar/1", "kind": "control", "scale": [0, 1, 2], "n": 1, "m": 1,
  "L": "u[0]^2", "phi": ["u[0]"], "bc_a": [0], "bc_b": [2]
})";

ErrorCode code_of(const std::string& text) {
  try {
    io::parse_problem(text);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Domain;
}

json run(const std::string& text, io::Command c, const io::RunOptions& o = {}) {
  return json::parse(io::run(c, io::parse_problem(text), o).report);
}

}  // namespace

TEST_CASE("schema validation") {
  CHECK(code_of("{\"schema\": ") == ErrorCode::Schema);
  CHECK(code_of("[1, 2]") == ErrorCode::Schema);
  CHECK(code_of(R"({"kind": "basic"})") == ErrorCode::Schema);
  CHECK(code_of(R"({"schema": "deltavar/2", "kind": "basic"})") == ErrorCode::Schema);
  CHECK(code_of(R"({"schema": "deltavar/1", "kind": "nope"})") == ErrorCode::Schema);
  CHECK(code_of(R"({"schema": "deltavar/1", "kind": "basic", "scale": [0, 1, 2]})") == ErrorCode::Schema);
  CHECK(code_of(R"({"schema": "deltavar/1", "kind": "basic", "scale": "x", "L": "y[0]"})") == ErrorCode::Schema);
  CHECK(code_of(R"({"schema": "deltavar/1", "kind": "basic", "scale": [0, 1, 2], "L": "y[0] +"})") ==
        ErrorCode::Syntax);
  CHECK(code_of(R"({"schema": "deltavar/1", "kind": "basic", "scale": [0, 1, 2], "L": "z"})") ==
        ErrorCode::UnknownIdentifier);
  CHECK(code_of(R"({"schema": "deltavar/1", "kind": "basic", "scale": [0, 1], "L": "y[0]"})") ==
        ErrorCode::InsufficientPoints);
  CHECK(code_of(R"({"schema": "deltavar/1", "kind": "basic", "scale": [0, 1, 2], "n": 2, "L": "y[0]",
                    "bc_a": [1]})") == ErrorCode::Schema);
  CHECK(code_of(R"({"schema": "deltavar/1", "kind": "control", "scale": [0, 1, 2], "n": 1, "m": 1,
                    "L": "u[0]", "phi": []})") == ErrorCode::Schema);
  CHECK(code_of(R"({"schema": "deltavar/1", "kind": "higher_order", "scale": [0, 1, 2, 3], "r": 2,
                    "L": "dy[0][2]^2"})") == ErrorCode::InsufficientPoints);
  CHECK(code_of(R"({"schema": "deltavar/1", "kind": "basic", "scale": [0, 1, 2], "L": "y[0]",
                    "candidate": {"y": [1, 2]}})") == ErrorCode::Schema);
  CHECK_THROWS_AS(io::load_problem("/nonexistent/problem.json"), Error);
}

TEST_CASE("scales, boundary values and isoperimetric blocks") {
  auto f = io::parse_problem(R"({"schema": "deltavar/1", "kind": "basic",
    "scale": {"uniform": {"a": 0, "b": 2, "n": 5}}, "L": "dy[0]^2", "bc_a": [0], "bc_b": null})");
  REQUIRE(f.basic);
  CHECK(f.basic->scale().points() == std::vector<double>{0, 0.5, 1, 1.5, 2});
  CHECK(f.basic->bc_a());
  CHECK_FALSE(f.basic->bc_b());

  auto c = io::parse_problem(R"({"schema": "deltavar/1", "kind": "control", "scale": [0, 1, 2, 3],
    "n": 2, "m": 1, "L": "u[0]^2", "phi": ["y[1]", "u[0]"], "bc_a": [0, null], "bc_b": [1, 0],
    "isoperimetric": {"g": "y[0]", "beta": 1}})");
  REQUIRE(c.control);
  CHECK(c.control->n() == 3);
  CHECK(c.control->a_free(1));
  CHECK_FALSE(c.control->a_free(0));

  auto h = io::parse_problem(R"({"schema": "deltavar/1", "kind": "higher_order", "scale": [0, 1, 2, 3, 4],
    "r": 2, "L": "dy[0][2]^2", "bc": {"a": [[0], null], "b": [3, [1]]}})");
  REQUIRE(h.higher_order);
  CHECK(h.higher_order->bc_a()[0]);
  CHECK_FALSE(h.higher_order->bc_a()[1]);
  CHECK((*h.higher_order->bc_b()[0])(0) == 3.0);
}

TEST_CASE("solve report for the LQ instance") {
  const json r = run(kLq, io::Command::Solve);
  CHECK(r["schema"] == "deltavar/1");
  CHECK(r["kind"] == "control");
  CHECK(r["certified"] == true);
  CHECK(r["classification"] == "stationary");
  for (const auto& row : r["solution"]["u"]["values"]) CHECK(row[0].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& row : r["solution"]["costate"]["psi"]["values"]) {
    CHECK(row[0].get<double>() == doctest::Approx(-2.0).epsilon(1e-12));
  }
  CHECK(r["abnormal_basis"].empty());
  CHECK(r["solution"]["objective"].get<double>() == doctest::Approx(2.0));
}

TEST_CASE("reports are deterministic") {
  const auto f = io::parse_problem(kLq);
  CHECK(io::run(io::Command::Solve, f).report == io::run(io::Command::Solve, f).report);
}

TEST_CASE("check uses the candidate and derives the costate") {
  std::string good = kLq;
  good.insert(good.rfind('}'), R"(, "candidate": {"y": [0, 1, 2], "u": [1, 1]})");
  const json r = run(good, io::Command::Check);
  CHECK(r["certified"] == true);
  CHECK(r["costate_source"] == "kkt");
  CHECK(r["costate"]["psi"]["values"][0][0].get<double>() == doctest::Approx(-2.0));

  std::string bad = kLq;
  bad.insert(bad.rfind('}'), R"(, "candidate": {"y": [0, 1, 2.5], "u": [1, 1.5]})");
  const json b = run(bad, io::Command::Check);
  CHECK(b["certified"] == false);
  bool boundary_failed = false;
  for (const auto& c : b["checks"]) {
    if (c["name"] == "boundary_conditions") boundary_failed = !c["pass"].get<bool>();
  }
  CHECK(boundary_failed);

  CHECK_THROWS_AS(io::run(io::Command::Check, io::parse_problem(kLq)), Error);
}

TEST_CASE("basic problems through the driver") {
  const char* text = R"({"schema": "deltavar/1", "kind": "basic", "scale": [0, 1, 3],
    "L": "dy[0]^2", "bc_a": [0], "bc_b": [3], "candidate": {"y": [0, 1, 3]},
    "oracle": {"axes": [{"lo": 0, "hi": 2, "step": 0.05}]}})";
  const json s = run(text, io::Command::Solve);
  CHECK(s["solution"]["y"]["values"][1][0].get<double>() == doctest::Approx(1.0));
  io::RunOptions o;
  o.oracle = true;
  const json c = run(text, io::Command::Check, o);
  CHECK(c["certified"] == true);
  CHECK(c["oracle"]["argmin"][0].get<double>() == doctest::Approx(1.0));
  const json a = run(text, io::Command::Abnormal);
  CHECK(a["dimension"] == 0);
  CHECK(a["normal"] == true);
}

TEST_CASE("refine through the driver") {
  const char* text = R"({"schema": "deltavar/1", "kind": "basic", "scale": {"uniform": {"a": 0, "b": 1, "n": 3}},
    "L": "dy[0]^2", "bc_a": [0], "bc_b": [1], "reference": {"y": ["t"]}, "ladder": [4, 8, 16]})";
  const auto f = io::parse_problem(text);
  const auto out = io::run(io::Command::Refine, f);
  const json r = json::parse(out.report);
  REQUIRE(r["rows"].size() == 3);
  for (const auto& row : r["rows"]) CHECK(row["error"].get<double>() <= 1e-12);
  for (const auto& v : r["ratios"]) CHECK(v.is_null());
  CHECK(out.csv.rfind("n,h,error,", 0) == 0);

  io::RunOptions o;
  o.ladder = {8, 16};
  CHECK_THROWS_AS(io::run(io::Command::Refine, f, o), Error);
  CHECK_THROWS_AS(io::run(io::Command::Refine, io::parse_problem(kLq)), Error);
  o.ladder.clear();
  o.tol = 0.0;
  CHECK_THROWS_AS(io::run(io::Command::Solve, f, o), Error);
}

TEST_CASE("command names") {
  for (auto c : {io::Command::Solve, io::Command::Check, io::Command::Abnormal, io::Command::Refine,
                 io::Command::Oracle}) {
    CHECK(io::parse_command(io::to_string(c)) == c);
  }
  CHECK_THROWS_AS(io::parse_command("plot"), Error);
}
