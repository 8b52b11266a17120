#ifndef CSLOW_H
#define CSLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CslowStatus {
  CSLOW_STATUS_OK = 0,
  /**
   * A required pointer was null.
   */
  CSLOW_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not UTF-8.
   */
  CSLOW_STATUS_INVALID_UTF8 = 2,
  /**
   * The design or options were rejected.
   */
  CSLOW_STATUS_USER_ERROR = 3,
  CSLOW_STATUS_INTERNAL = 4,
  CSLOW_STATUS_PANIC = 5,
} CslowStatus;

/**
 * A parsed and elaborated design.
 */
typedef struct CslowDesign CslowDesign;

/**
 * A rewritten design with its schedule and cut report.
 */
typedef struct CslowResult CslowResult;

/**
 * Options for `cslow_csr`. Obtain defaults from `cslow_options_default`.
 */
typedef struct CslowOptions {
  uint32_t cmf;
  bool align_outputs;
  bool tie_clocks;
  bool sp_delay;
  bool warmup_gate;
  uint64_t seed;
  uint64_t cycles;
} CslowOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into this library on the same thread.
 */
const char *cslow_last_error(void);

struct CslowOptions cslow_options_default(void);

/**
 * Load a design from one Verilog file. `top` may be null to infer it.
 *
 * # Safety
 * `path` and `top` must be null or NUL-terminated; `out` must be writable.
 */
enum CslowStatus cslow_design_load(const char *path, const char *top, struct CslowDesign **out);

/**
 * # Safety
 * `d` must be null or a handle from `cslow_design_load` not yet freed.
 */
void cslow_design_free(struct CslowDesign *d);

/**
 * Longest register-to-register path in the cost table's units.
 *
 * # Safety
 * `d` must be a live design handle; `out` must be writable.
 */
enum CslowStatus cslow_design_t2ild(const struct CslowDesign *d, uint64_t *out);

/**
 * Rewrite a design. `fault` names a register to sabotage (`name` or
 * `name:bit`) and is normally null.
 *
 * # Safety
 * `d` must be a live design handle, `opts` readable, `fault` null or
 * NUL-terminated and `out` writable.
 */
enum CslowStatus cslow_csr(const struct CslowDesign *d,
                           const struct CslowOptions *opts,
                           const char *fault,
                           struct CslowResult **out);

/**
 * # Safety
 * `r` must be null or a handle from `cslow_csr` not yet freed.
 */
void cslow_result_free(struct CslowResult *r);

/**
 * Emitted Verilog; owned by the result.
 *
 * # Safety
 * `r` must be null or a live result handle.
 */
const char *cslow_result_verilog(const struct CslowResult *r);

/**
 * Schedule JSON; owned by the result.
 *
 * # Safety
 * `r` must be null or a live result handle.
 */
const char *cslow_result_schedule_json(const struct CslowResult *r);

/**
 * Cut report JSON; owned by the result.
 *
 * # Safety
 * `r` must be null or a live result handle.
 */
const char *cslow_result_report_json(const struct CslowResult *r);

/**
 * Total pipeline register bits the rewrite inserted.
 *
 * # Safety
 * `r` must be null or a live result handle.
 */
uint64_t cslow_result_register_bits(const struct CslowResult *r);

/**
 * Simulate the rewrite against the original with the seed and cycle count
 * given to `cslow_csr`. Writes 1 to `pass` when every thread matches.
 *
 * # Safety
 * `d` must be the design `r` was produced from; `pass` must be writable.
 */
enum CslowStatus cslow_check(const struct CslowDesign *d,
                             const struct CslowResult *r,
                             int32_t *pass);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSLOW_H */
