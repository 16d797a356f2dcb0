#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "deltavar/deltavar.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNotCertified = 2;

struct Args {
  std::string in;
  std::string out;
  std::string csv;
  double tol = 0.0;
  std::vector<std::size_t> ladder;
  bool oracle = false;
  unsigned threads = 0;
};

int error(const std::string& what) {
  std::cerr << "deltavar: " << what << "\n";
  return kExitError;
}

int execute(const std::string& name, const Args& a) {
  dv_command command;
  if (dv_command_parse(name.c_str(), &command) != DV_OK) return error(dv_last_error());

  dv_problem* problem = nullptr;
  if (dv_status s = dv_problem_load(a.in.c_str(), &problem); s != DV_OK) {
    return error(std::string(dv_status_string(s)) + ": " + dv_last_error());
  }
  dv_options opts;
  dv_options_init(&opts);
  opts.tol = a.tol;
  opts.oracle = a.oracle ? 1 : 0;
  opts.ladder = a.ladder.empty() ? nullptr : a.ladder.data();
  opts.ladder_len = a.ladder.size();
  opts.threads = a.threads;

  dv_report* report = nullptr;
  const dv_status s = dv_run(problem, command, &opts, &report);
  dv_problem_free(problem);
  if (s != DV_OK) return error(std::string(dv_status_string(s)) + ": " + dv_last_error());

  int code = dv_report_certified(report) ? kExitOk : kExitNotCertified;
  if (a.out.empty()) {
    std::fputs(dv_report_json(report), stdout);
  } else if (dv_report_write(report, a.out.c_str()) != DV_OK) {
    code = error(dv_last_error());
  }
  if (code != kExitError && !a.csv.empty()) {
    std::ofstream f(a.csv, std::ios::binary | std::ios::trunc);
    f << dv_report_csv(report);
    if (!f) code = error("cannot write " + a.csv);
  }
  dv_report_free(report);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational problems and optimal control on finite time scales"};
  app.require_subcommand(1);
  Args args;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--in", args.in, "Problem file (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", args.out, "Report file (default: standard output)");
    sub->add_option("--tol", args.tol, "Certificate tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--threads", args.threads, "Worker threads (DELTAVAR_THREADS caps this)");
  };
  common(app.add_subcommand("solve", "Solve and certify the problem"));
  auto* check = app.add_subcommand("check", "Certify the candidate in the problem file");
  common(check);
  check->add_flag("--oracle", args.oracle, "Also compare against the grid-search oracle");
  common(app.add_subcommand("abnormal", "Basis of abnormal multipliers along a trajectory"));
  auto* refine = app.add_subcommand("refine", "Grid-refinement study against a reference");
  common(refine);
  refine->add_option("--ladder", args.ladder, "Grid sizes, e.g. 16,32,64")->delimiter(',');
  refine->add_option("--csv", args.csv, "Also write the convergence table as CSV");
  common(app.add_subcommand("oracle", "Grid-search oracle"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }
  return execute(app.get_subcommands().front()->get_name(), args);
}
