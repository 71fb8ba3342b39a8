/* C interface for the combwalk persistent-walk library.
 * Strings returned through char** outputs are owned by the library;
 * release them with cw_string_free. Models are opaque handles released
 * with cw_model_free. All functions are safe to call from any thread;
 * cw_last_error_message returns a thread-local string valid until the
 * next failing call on the same thread. */

#ifndef COMBWALK_H
#define COMBWALK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Run direction, matching the JSON encoding ("up" / "down").
 */
typedef enum CwDirection {
  CW_DIRECTION_UP = 0,
  CW_DIRECTION_DOWN = 1,
} CwDirection;

/**
 * Status code returned by every fallible function. Anything other than Ok
 * leaves a description in cw_last_error_message.
 */
typedef enum CwStatus {
  CW_STATUS_OK = 0,
  CW_STATUS_NULL_POINTER = 1,
  CW_STATUS_INVALID_UTF8 = 2,
  CW_STATUS_JSON = 3,
  CW_STATUS_INVALID_MODEL = 4,
  CW_STATUS_SAMPLE_CAP_EXCEEDED = 5,
  CW_STATUS_HORIZON_TOO_LARGE = 6,
  CW_STATUS_BUDGET_EXCEEDED = 7,
  CW_STATUS_RANGE_VIOLATION = 8,
  CW_STATUS_CONTEXT_UNRESOLVABLE = 9,
  CW_STATUS_CONFIG = 10,
  CW_STATUS_IO = 11,
  CW_STATUS_PANIC = 12,
} CwStatus;

/**
 * Opaque model handle. Create with cw_model_from_json, release with
 * cw_model_free. Handles are immutable and cheap to share.
 */
typedef struct CwModel CwModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parse a JSON model descriptor and return a new handle through `out`.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string; `out` must be valid for a
 * single pointer write.
 */
enum CwStatus cw_model_from_json(const char *json, struct CwModel **out);

/**
 * Release a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must be null or a pointer obtained from cw_model_from_json that
 * has not been freed already.
 */
void cw_model_free(struct CwModel *model);

/**
 * Probability of switching direction after `n` steps of a run.
 *
 * # Safety
 * `model` must be a live handle; `out` must be valid for a double write.
 */
enum CwStatus cw_alpha(const struct CwModel *model,
                       enum CwDirection direction,
                       uint64_t n,
                       double *out);

/**
 * Survival probability that a run lasts at least `n` steps.
 *
 * # Safety
 * Same contract as cw_alpha.
 */
enum CwStatus cw_tail(const struct CwModel *model,
                      enum CwDirection direction,
                      uint64_t n,
                      double *out);

/**
 * Expected run length truncated at `horizon`.
 *
 * # Safety
 * Same contract as cw_alpha.
 */
enum CwStatus cw_truncated_mean(const struct CwModel *model,
                                enum CwDirection direction,
                                uint64_t horizon,
                                double *out);

/**
 * Classify the model; the result is a JSON document written through
 * `out_json`. Pass zero budgets for the defaults.
 *
 * # Safety
 * `model` must be a live handle; `out_json` must be valid for a pointer
 * write. Release the string with cw_string_free.
 */
enum CwStatus cw_classify_json(const struct CwModel *model,
                               uint64_t budget_terms,
                               double budget_seconds,
                               char **out_json);

/**
 * Simulate `steps` steps and return the trajectory summary as JSON.
 *
 * # Safety
 * Same contract as cw_classify_json.
 */
enum CwStatus cw_simulate_json(const struct CwModel *model,
                               uint64_t steps,
                               uint64_t seed,
                               uint64_t replica,
                               char **out_json);

/**
 * Release a string returned through a char** output. Null is a no-op.
 *
 * # Safety
 * `s` must be null or a string handed out by this library that has not
 * been freed already.
 */
void cw_string_free(char *s);

/**
 * Message for the most recent failure on this thread. Never null; empty
 * before the first failure. Valid until the next failing call here.
 */
const char *cw_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COMBWALK_H */
