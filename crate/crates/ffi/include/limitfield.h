#ifndef LIMITFIELD_H
#define LIMITFIELD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LfStatus {
  LF_STATUS_OK = 0,
  LF_STATUS_NULL_POINTER = 1,
  LF_STATUS_INVALID_ARGUMENT = 2,
  LF_STATUS_PARSE_ERROR = 3,
  LF_STATUS_EVAL_ERROR = 4,
  LF_STATUS_KINK_ERROR = 5,
  LF_STATUS_SOLVER_ERROR = 6,
  LF_STATUS_PANIC = 7,
} LfStatus;

/**
 * Opaque smoothing family.
 */
typedef struct LfFamily LfFamily;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a builtin family by name (`sin`, `hat`, `chen`, `signsqrt`,
 * `absl1`, `maxfinite`, `nonlipq`).
 *
 * # Safety
 * `name` must be a valid C string and `out` a valid pointer.
 */
enum LfStatus lf_family_builtin(const char *name, struct LfFamily **out);

/**
 * Parses a family from its JSON description.
 *
 * # Safety
 * `json` must be a valid C string and `out` a valid pointer.
 */
enum LfStatus lf_family_from_json(const char *json, struct LfFamily **out);

/**
 * Releases a family; null is ignored.
 *
 * # Safety
 * `fam` must come from this library and not be used afterwards.
 */
void lf_family_free(struct LfFamily *fam);

/**
 * Dimension of the family's domain, or 0 for a null handle.
 *
 * # Safety
 * `fam` must be null or a live handle.
 */
uintptr_t lf_family_dimension(const struct LfFamily *fam);

/**
 * Writes `f_a(x)` to `out`.
 *
 * # Safety
 * `x` must point to `len` doubles and `out` to one.
 */
enum LfStatus lf_family_eval(const struct LfFamily *fam,
                             const double *x,
                             uintptr_t len,
                             double a,
                             double *out);

/**
 * Writes `∇f_a(x)` to `grad`, which must hold `len` doubles.
 *
 * # Safety
 * `x` and `grad` must each point to `len` doubles.
 */
enum LfStatus lf_family_grad(const struct LfFamily *fam,
                             const double *x,
                             uintptr_t len,
                             double a,
                             double *grad);

/**
 * Estimates the limit field at `x` and returns it as JSON. `config_json`
 * may be null for defaults; builtin families get their probe curves unless
 * the config lists its own.
 *
 * # Safety
 * `x` must point to `len` doubles; `config_json` null or a C string; `out`
 * a valid pointer.
 */
enum LfStatus lf_estimate_json(const struct LfFamily *fam,
                               const double *x,
                               uintptr_t len,
                               const char *config_json,
                               char **out);

/**
 * Runs the smoothing method from `x0` and returns `{trace, certificate}` as
 * JSON. `schedule_json` may be null for defaults.
 *
 * # Safety
 * As for `lf_estimate_json`.
 */
enum LfStatus lf_solve_json(const struct LfFamily *fam,
                            const double *x0,
                            uintptr_t len,
                            const char *schedule_json,
                            char **out);

/**
 * Minimum-norm point of the hull of `count` points of dimension `dim`,
 * stored row-major in `points`.
 *
 * # Safety
 * `points` must hold `count * dim` doubles, `out_point` `dim` doubles and
 * `out_distance` one.
 */
enum LfStatus lf_min_norm_point(const double *points,
                                uintptr_t count,
                                uintptr_t dim,
                                double *out_point,
                                double *out_distance);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library on the same thread.
 */
const char *lf_last_error_message(void);

/**
 * Releases a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void lf_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIMITFIELD_H */
