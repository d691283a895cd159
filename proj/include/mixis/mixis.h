/* C interface to the mixis library: loading and solving mixture-weight
 * optimization problems, and running the built-in benchmark experiments.
 *
 * All functions returning mixis_status set a thread-local error message
 * readable through mixis_last_error() on failure. Objects returned through
 * out-parameters are owned by the caller and released with the matching
 * _free function; every _free accepts NULL.
 */
#ifndef MIXIS_H
#define MIXIS_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define MIXIS_API __declspec(dllexport)
#else
#define MIXIS_API __attribute__((visibility("default")))
#endif

typedef enum mixis_status {
    MIXIS_OK = 0,
    MIXIS_ERR_INVALID_ARGUMENT = 1,
    MIXIS_ERR_IO = 2,
    MIXIS_ERR_NUMERICAL = 3
} mixis_status;

/* Library version string (semantic version plus build metadata). */
MIXIS_API const char* mixis_version(void);

/* Message for the most recent failure on this thread; empty after success. */
MIXIS_API const char* mixis_last_error(void);

/* An assembled optimization problem: minimize the weighted residual
 * criterion sum_i (Y_i - X_i'beta)^2 / (Z_i'alpha) over mixture weights
 * alpha (floors + unit-sum constraint) and coefficients beta. */
typedef struct mixis_problem mixis_problem;
typedef struct mixis_solution mixis_solution;

/* Reads a problem from the plain-text "mixis-problem 1" format. */
MIXIS_API mixis_status mixis_problem_load(const char* path, mixis_problem** out);
MIXIS_API mixis_status mixis_problem_save(const mixis_problem* problem,
                                          const char* path);
MIXIS_API void mixis_problem_free(mixis_problem* problem);

/* Any out-pointer may be NULL to skip that dimension. */
MIXIS_API mixis_status mixis_problem_dims(const mixis_problem* problem,
                                          int32_t* n, int32_t* num_components,
                                          int32_t* num_covariates);

/* Replaces the per-component lower bounds with a uniform floor. The floor
 * must be nonnegative and small enough to leave the region feasible. */
MIXIS_API mixis_status mixis_problem_set_uniform_floor(mixis_problem* problem,
                                                       double floor_value);

/* Barrier solve. certificate_tolerance bounds the accepted relative
 * optimality gap; pass a nonpositive value for the default 1e-6. A solve
 * that stops on iteration limits or numerical breakdown still returns
 * MIXIS_OK with a solution whose certified flag is 0; inspect
 * mixis_solution_status for the cause. */
MIXIS_API mixis_status mixis_problem_solve(const mixis_problem* problem,
                                           double certificate_tolerance,
                                           mixis_solution** out);

/* Copies the optimized mixture weights (length num_components). `len` must
 * match exactly. */
MIXIS_API mixis_status mixis_solution_mixture(const mixis_solution* solution,
                                              double* alpha, int32_t len);

/* Copies the fitted coefficients (length num_covariates). */
MIXIS_API mixis_status mixis_solution_coefficients(const mixis_solution* solution,
                                                   double* beta, int32_t len);

/* Criterion value at the returned (alpha, beta). */
MIXIS_API mixis_status mixis_solution_objective(const mixis_solution* solution,
                                                double* value);

/* 1 when the duality-gap certificate met the tolerance, else 0. */
MIXIS_API mixis_status mixis_solution_certified(const mixis_solution* solution,
                                                int32_t* flag);

/* 0 = certified, 1 = iteration limit, 2 = numerical breakdown. */
MIXIS_API mixis_status mixis_solution_status(const mixis_solution* solution,
                                             int32_t* status);

MIXIS_API void mixis_solution_free(mixis_solution* solution);

/* Runs a built-in experiment described by a JSON document (the document
 * itself, not a path) and writes results.csv plus results.json into
 * out_dir, creating it if needed. Recognized fields:
 *
 *   {
 *     "schema_version": 1,
 *     "experiment": "singular" | "rare-event",      // required
 *     "scale": "desk" | "paper",                    // default "desk"
 *     "seed": 1,                                    // unsigned 64-bit
 *     "replicates": 30,                             // default per scale
 *     "methods": ["uniform", "uniform_cv",
 *                 "opt_alpha", "opt_alpha_cv"],     // default all four
 *     "epsilon": 0.00196,                           // floor, default 0.1/J
 *     "threads": 0,                                 // 0 = all cores
 *     "timing": "none" | "csv"                      // default "none"
 *   }
 *
 * With "timing": "none" the CSV's wall_seconds column prints 0.000 so runs
 * with one seed are byte-identical regardless of threads; measured timings
 * are always present in results.json. */
MIXIS_API mixis_status mixis_run_experiment(const char* config_json,
                                            const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* MIXIS_H */
