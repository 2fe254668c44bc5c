#ifndef BICONVEX_H
#define BICONVEX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum BcxCode {
  BCX_CODE_OK = 0,
  // A required pointer argument was null.
  BCX_CODE_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  BCX_CODE_UTF8 = 2,
  // The problem text did not parse or build.
  BCX_CODE_PARSE = 3,
  // The problem is not DBCP-compliant.
  BCX_CODE_NOT_DBCP = 4,
  // Invalid options or a solver failure before any report was produced.
  BCX_CODE_SOLVER = 5,
  // A panic was caught at the boundary.
  BCX_CODE_PANIC = 6,
} BcxCode;

// Final status of a solve.
typedef enum BcxStatus {
  BCX_STATUS_CONVERGED = 0,
  BCX_STATUS_MAX_ITERS = 1,
  BCX_STATUS_SUBPROBLEM_INFEASIBLE = 2,
  BCX_STATUS_SUBPROBLEM_UNBOUNDED = 3,
  BCX_STATUS_NOT_DBCP = 4,
  BCX_STATUS_SOLVER_ERROR = 5,
} BcxStatus;

// A parsed and verified problem.
typedef struct BcxProblem BcxProblem;

// The outcome of `bcx_solve`.
typedef struct BcxReport BcxReport;

// Solve options. Start from `bcx_options_default`.
typedef struct BcxOptions {
  // Proximal weight, nonnegative.
  double lbd;
  // Slack penalty for problems marked `relax`.
  double nu;
  double gap_tol;
  uint64_t max_iters;
  uint64_t seed;
} BcxOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failing call on this thread; empty after a success.
// The pointer stays valid until the next call into this library on the same
// thread.
const char *bcx_last_error(void);

// Library version as a static string.
const char *bcx_version(void);

// Parse problem text. `base_dir` resolves `@csv` paths and may be null for
// the current directory. On success `*out` owns a new problem.
//
// # Safety
// `text` and a non-null `base_dir` must be nul-terminated strings; `out` must
// be valid for writes.
enum BcxCode bcx_problem_from_text(const char *text, const char *base_dir, struct BcxProblem **out);

// Release a problem. Null is ignored.
//
// # Safety
// `problem` must come from `bcx_problem_from_text` and not be used again.
void bcx_problem_free(struct BcxProblem *problem);

// Write whether the problem is DBCP-compliant to `*compliant`. A non-null
// `verdict_json` receives the verdict with source locations.
//
// # Safety
// `problem` must be a live handle; `compliant` must be valid for writes, as
// must `verdict_json` when non-null.
enum BcxCode bcx_check_dbcp(const struct BcxProblem *problem, bool *compliant, char **verdict_json);

// Defaults matching the command-line tool.
struct BcxOptions bcx_options_default(void);

// Solve with alternating convex search. `options` may be null for defaults.
// A report is produced for every outcome that reaches the solver, including
// iteration caps and subproblem failures; inspect it with
// `bcx_report_status`.
//
// # Safety
// `problem` must be a live handle, `options` null or valid, and `out` valid
// for writes.
enum BcxCode bcx_solve(const struct BcxProblem *problem,
                       const struct BcxOptions *options,
                       struct BcxReport **out);

// Release a report. Null is ignored.
//
// # Safety
// `report` must come from `bcx_solve` and not be used again.
void bcx_report_free(struct BcxReport *report);

// # Safety
// `report` must be a live handle.
enum BcxStatus bcx_report_status(const struct BcxReport *report);

// Final objective; NaN for a null handle or a failed solve.
//
// # Safety
// `report` must be a live handle or null.
double bcx_report_objective(const struct BcxReport *report);

// Completed iterations; zero for a null handle.
//
// # Safety
// `report` must be a live handle or null.
uint64_t bcx_report_iterations(const struct BcxReport *report);

// The JSON report, identical to the command-line tool's output.
//
// # Safety
// `report` must be a live handle and `out` valid for writes.
enum BcxCode bcx_report_json(const struct BcxReport *report, char **out);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used again.
void bcx_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BICONVEX_H */
