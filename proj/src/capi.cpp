#include "deltavar/deltavar.h"

#include <fstream>
#include <new>
#include <string>

#include "deltavar/error.hpp"
#include "deltavar/io.hpp"
#include "deltavar/timescale.hpp"

struct dv_problem {
  deltavar::io::ProblemFile file;
  std::string kind;
};

struct dv_report {
  deltavar::io::RunOutput out;
};

struct dv_timescale {
  deltavar::TimeScale ts;
};

namespace {

thread_local std::string last_error;

dv_status fail(dv_status s, const char* what) {
  last_error = what;
  return s;
}

/// Runs `fn`, translating exceptions into status codes.
template <class Fn>
dv_status guarded(Fn&& fn) noexcept {
  try {
    fn();
    return DV_OK;
  } catch (const deltavar::Error& e) {
    return fail(static_cast<dv_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(DV_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(DV_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(DV_ERR_INTERNAL, "unknown error");
  }
}

dv_status null_arg(const char* name) { return fail(DV_ERR_INVALID_ARGUMENT, (std::string(name) + " is NULL").c_str()); }

}  // namespace

extern "C" {

const char* dv_version(void) { return "1.0.0"; }

const char* dv_status_string(dv_status status) {
  switch (status) {
    case DV_OK: return "ok";
    case DV_ERR_INTERNAL: return "internal";
    default: break;
  }
  const int c = static_cast<int>(status);
  if (c >= 1 && c <= static_cast<int>(deltavar::ErrorCode::Io)) {
    return deltavar::to_string(static_cast<deltavar::ErrorCode>(c)).data();
  }
  return "unknown";
}

const char* dv_last_error(void) { return last_error.c_str(); }

void dv_options_init(dv_options* options) {
  if (options) *options = dv_options{0.0, 0, nullptr, 0, 0};
}

dv_status dv_problem_parse(const char* json_text, dv_problem** out) {
  if (!json_text) return null_arg("json_text");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guarded([&] {
    auto file = deltavar::io::parse_problem(json_text);
    std::string kind(deltavar::io::to_string(file.kind));
    *out = new dv_problem{std::move(file), std::move(kind)};
  });
}

dv_status dv_problem_load(const char* path, dv_problem** out) {
  if (!path) return null_arg("path");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guarded([&] {
    auto file = deltavar::io::load_problem(path);
    std::string kind(deltavar::io::to_string(file.kind));
    *out = new dv_problem{std::move(file), std::move(kind)};
  });
}

const char* dv_problem_kind(const dv_problem* problem) { return problem ? problem->kind.c_str() : ""; }

void dv_problem_free(dv_problem* problem) { delete problem; }

dv_status dv_command_parse(const char* name, dv_command* out) {
  if (!name) return null_arg("name");
  if (!out) return null_arg("out");
  return guarded([&] { *out = static_cast<dv_command>(deltavar::io::parse_command(name)); });
}

dv_status dv_run(const dv_problem* problem, dv_command command, const dv_options* options, dv_report** out) {
  if (!problem) return null_arg("problem");
  if (!out) return null_arg("out");
  *out = nullptr;
  if (command < DV_CMD_SOLVE || command > DV_CMD_ORACLE) return fail(DV_ERR_INVALID_ARGUMENT, "unknown command");
  return guarded([&] {
    deltavar::io::RunOptions o;
    if (options) {
      if (options->tol > 0) o.tol = options->tol;
      o.oracle = options->oracle != 0;
      if (options->ladder) o.ladder.assign(options->ladder, options->ladder + options->ladder_len);
      o.threads = options->threads;
    }
    auto result = deltavar::io::run(static_cast<deltavar::io::Command>(command), problem->file, o);
    *out = new dv_report{std::move(result)};
  });
}

int dv_report_certified(const dv_report* report) { return report && report->out.certified ? 1 : 0; }

const char* dv_report_json(const dv_report* report) { return report ? report->out.report.c_str() : ""; }

const char* dv_report_csv(const dv_report* report) { return report ? report->out.csv.c_str() : ""; }

dv_status dv_report_write(const dv_report* report, const char* path) {
  if (!report) return null_arg("report");
  if (!path) return null_arg("path");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) return fail(DV_ERR_IO, (std::string("cannot open ") + path).c_str());
  f << report->out.report;
  f.close();
  if (!f) return fail(DV_ERR_IO, (std::string("cannot write ") + path).c_str());
  return DV_OK;
}

void dv_report_free(dv_report* report) { delete report; }

dv_status dv_timescale_create(const double* points, size_t n, dv_timescale** out) {
  if (!points) return null_arg("points");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guarded([&] { *out = new dv_timescale{deltavar::TimeScale(std::vector<double>(points, points + n))}; });
}

dv_status dv_timescale_uniform(double a, double b, size_t n, dv_timescale** out) {
  if (!out) return null_arg("out");
  *out = nullptr;
  return guarded([&] { *out = new dv_timescale{deltavar::TimeScale::uniform(a, b, n)}; });
}

size_t dv_timescale_size(const dv_timescale* ts) { return ts ? ts->ts.size() : 0; }

dv_status dv_timescale_jump(const dv_timescale* ts, double t, double* sigma, double* rho, double* mu) {
  if (!ts) return null_arg("ts");
  return guarded([&] {
    const auto j = deltavar::jump_operators(ts->ts, t);
    if (sigma) *sigma = j.sigma;
    if (rho) *rho = j.rho;
    if (mu) *mu = j.mu;
  });
}

dv_status dv_delta_derivative(const dv_timescale* ts, const double* values, double* out) {
  if (!ts) return null_arg("ts");
  if (!values) return null_arg("values");
  if (!out) return null_arg("out");
  return guarded([&] {
    const deltavar::GridFunction f(ts->ts, std::vector<double>(values, values + ts->ts.size()));
    const auto d = deltavar::delta_derivative(f);
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = d.values()(static_cast<Eigen::Index>(i), 0);
  });
}

dv_status dv_delta_integral(const dv_timescale* ts, const double* values, double lo, double hi, double* out) {
  if (!ts) return null_arg("ts");
  if (!values) return null_arg("values");
  if (!out) return null_arg("out");
  return guarded([&] {
    const deltavar::GridFunction f(ts->ts, std::vector<double>(values, values + ts->ts.size()));
    *out = deltavar::delta_integral(f, lo, hi)(0);
  });
}

void dv_timescale_free(dv_timescale* ts) { delete ts; }

}  // extern "C"
