#ifndef DELTAVAR_H
#define DELTAVAR_H

/* C interface to the deltavar library.
 *
 * Every fallible call returns a dv_status; on failure the message is
 * available from dv_last_error() (per thread, valid until the next failing
 * call on that thread). Objects are opaque and owned by the caller, which
 * releases them with the matching *_free function. */

#include <stddef.h>

#if defined(_WIN32)
#  if defined(DELTAVAR_BUILDING)
#    define DV_API __declspec(dllexport)
#  else
#    define DV_API __declspec(dllimport)
#  endif
#else
#  define DV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dv_status {
  DV_OK = 0,
  DV_ERR_DOMAIN = 1,
  DV_ERR_INSUFFICIENT_POINTS = 2,
  DV_ERR_REVERSED_BOUNDS = 3,
  DV_ERR_SYNTAX = 4,
  DV_ERR_UNKNOWN_IDENTIFIER = 5,
  DV_ERR_ARITY = 6,
  DV_ERR_INFEASIBLE = 7,
  DV_ERR_DEGENERATE = 8,
  DV_ERR_NON_CONVERGENCE = 9,
  DV_ERR_BUDGET_EXCEEDED = 10,
  DV_ERR_INVALID_ARGUMENT = 11,
  DV_ERR_SCHEMA = 12,
  DV_ERR_IO = 13,
  DV_ERR_INTERNAL = 100
} dv_status;

typedef enum dv_command {
  DV_CMD_SOLVE = 0,
  DV_CMD_CHECK = 1,
  DV_CMD_ABNORMAL = 2,
  DV_CMD_REFINE = 3,
  DV_CMD_ORACLE = 4
} dv_command;

typedef struct dv_problem dv_problem;
typedef struct dv_report dv_report;
typedef struct dv_timescale dv_timescale;

typedef struct dv_options {
  double tol;            /* certificate tolerance; <= 0 keeps the default */
  int oracle;            /* check: also run the grid oracle */
  const size_t* ladder;  /* refine: ladder override (NULL: the file's) */
  size_t ladder_len;
  unsigned threads;      /* 0: DELTAVAR_THREADS or hardware concurrency */
} dv_options;

DV_API const char* dv_version(void);
DV_API const char* dv_status_string(dv_status status);
DV_API const char* dv_last_error(void);

DV_API void dv_options_init(dv_options* options);

/* Problem files (JSON, schema "deltavar/1"). */
DV_API dv_status dv_problem_parse(const char* json_text, dv_problem** out);
DV_API dv_status dv_problem_load(const char* path, dv_problem** out);
DV_API const char* dv_problem_kind(const dv_problem* problem);
DV_API void dv_problem_free(dv_problem* problem);

/* Commands. `options` may be NULL. */
DV_API dv_status dv_command_parse(const char* name, dv_command* out);
DV_API dv_status dv_run(const dv_problem* problem, dv_command command, const dv_options* options,
                        dv_report** out);

/* Reports. */
DV_API int dv_report_certified(const dv_report* report);
DV_API const char* dv_report_json(const dv_report* report);
DV_API const char* dv_report_csv(const dv_report* report); /* "" unless refine */
DV_API dv_status dv_report_write(const dv_report* report, const char* path);
DV_API void dv_report_free(dv_report* report);

/* Finite time scales and Δ-calculus on scalar grid functions. */
DV_API dv_status dv_timescale_create(const double* points, size_t n, dv_timescale** out);
DV_API dv_status dv_timescale_uniform(double a, double b, size_t n, dv_timescale** out);
DV_API size_t dv_timescale_size(const dv_timescale* ts);
DV_API dv_status dv_timescale_jump(const dv_timescale* ts, double t, double* sigma, double* rho,
                                   double* mu);
/* values[n] -> out[n - 1]: the Δ-derivative on T^k. */
DV_API dv_status dv_delta_derivative(const dv_timescale* ts, const double* values, double* out);
/* ∫_lo^hi f Δt for scale points lo <= hi. */
DV_API dv_status dv_delta_integral(const dv_timescale* ts, const double* values, double lo, double hi,
                                   double* out);
DV_API void dv_timescale_free(dv_timescale* ts);

#ifdef __cplusplus
}
#endif

#endif /* DELTAVAR_H */
