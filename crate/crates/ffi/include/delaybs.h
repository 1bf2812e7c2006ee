#ifndef DELAYBS_H
#define DELAYBS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum DelaybsStatus {
  DelaybsStatus_Ok = 0,
  DelaybsStatus_NullPointer = 1,
  DelaybsStatus_InvalidArgument = 2,
  DelaybsStatus_NoConvergence = 3,
  DelaybsStatus_GeometryError = 4,
  DelaybsStatus_IoError = 5,
  DelaybsStatus_FormatError = 6,
  DelaybsStatus_InternalError = 7,
} DelaybsStatus;

/**
 * A solved feedback law (kernel plus control geometry).
 */
typedef struct DelaybsLaw DelaybsLaw;

/**
 * A trained operator model.
 */
typedef struct DelaybsModel DelaybsModel;

/**
 * Plant coefficients plus an admissible delay function.
 */
typedef struct DelaybsScenario DelaybsScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent error on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *delaybs_last_error(void);

/**
 * Package version as a static string.
 */
const char *delaybs_version(void);

/**
 * Build a scenario from the JSON document also accepted by the command-line
 * tool: `{"c": {"family": ..., "params": [...]}, "f": {...}, "delay": {...},
 * "grid": 41}`.
 *
 * # Safety
 * `json` must be a valid NUL-terminated UTF-8 string; `out` must point to
 * writable storage for one pointer.
 */
enum DelaybsStatus delaybs_scenario_from_json(const char *json, struct DelaybsScenario **out);

/**
 * # Safety
 * `scenario` must be a pointer returned by [`delaybs_scenario_from_json`],
 * not yet freed.
 */
void delaybs_scenario_free(struct DelaybsScenario *scenario);

/**
 * Solve the feedback kernel for a scenario and build the control law.
 *
 * # Safety
 * `scenario` must be a live scenario handle; `out` must point to writable
 * storage for one pointer.
 */
enum DelaybsStatus delaybs_law_solve(const struct DelaybsScenario *scenario,
                                     double spacing,
                                     double tolerance,
                                     struct DelaybsLaw **out);

/**
 * # Safety
 * `law` must be a pointer returned by [`delaybs_law_solve`], not yet freed.
 */
void delaybs_law_free(struct DelaybsLaw *law);

/**
 * Kernel value at `(s, q)` on the triangle (bilinear off nodes).
 *
 * # Safety
 * `law` must be a live law handle; `out` must point to one writable double.
 */
enum DelaybsStatus delaybs_kernel_value(const struct DelaybsLaw *law,
                                        double s,
                                        double q,
                                        double *out);

/**
 * Convergence diagnostics of the solved kernel.
 *
 * # Safety
 * `law` must be a live law handle; the out pointers may be NULL to skip a
 * field, otherwise they must be writable.
 */
enum DelaybsStatus delaybs_kernel_info(const struct DelaybsLaw *law,
                                       double *residual,
                                       uint32_t *iterations_branch1,
                                       uint32_t *iterations_branch2,
                                       double *sup_abs);

/**
 * Exact boundary feedback on a sampled state. `x` holds `x_len` samples of
 * the transported state on a uniform grid over `[0, 1]`; `u` holds
 * `u_rows * u_cols` row-major samples of the delay line with
 * `u_rows == x_len`.
 *
 * # Safety
 * `law` must be a live law handle; `x` and `u` must point to readable
 * arrays of the stated lengths; `out` must point to one writable double.
 */
enum DelaybsStatus delaybs_control(const struct DelaybsLaw *law,
                                   const double *x,
                                   size_t x_len,
                                   const double *u,
                                   size_t u_rows,
                                   size_t u_cols,
                                   double *out);

/**
 * Load a trained operator model from its JSON file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated UTF-8 path; `out` must point to
 * writable storage for one pointer.
 */
enum DelaybsStatus delaybs_model_load(const char *path, struct DelaybsModel **out);

/**
 * # Safety
 * `model` must be a pointer returned by [`delaybs_model_load`], not freed.
 */
void delaybs_model_free(struct DelaybsModel *model);

/**
 * Learned-operator inference. Channels may be sampled on any uniform grids
 * (at least two nodes per axis); they are resampled internally.
 *
 * # Safety
 * `model` must be a live model handle; `tau`, `x`, `u` must point to
 * readable arrays of the stated lengths; `out` must point to one writable
 * double.
 */
enum DelaybsStatus delaybs_model_predict(const struct DelaybsModel *model,
                                         const double *tau,
                                         size_t tau_len,
                                         const double *x,
                                         size_t x_len,
                                         const double *u,
                                         size_t u_rows,
                                         size_t u_cols,
                                         double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* DELAYBS_H */
