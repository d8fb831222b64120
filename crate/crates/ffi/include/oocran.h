#ifndef OOCRAN_H
#define OOCRAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum OocranStatus {
  OOCRAN_STATUS_OK = 0,
  OOCRAN_STATUS_NULL_ARGUMENT = 1,
  OOCRAN_STATUS_INVALID_UTF8 = 2,
  OOCRAN_STATUS_INVALID_ARGUMENT = 3,
  OOCRAN_STATUS_PARSE = 4,
  OOCRAN_STATUS_NOT_FOUND = 5,
  OOCRAN_STATUS_CONFLICT = 6,
  OOCRAN_STATUS_CAPACITY = 7,
  OOCRAN_STATUS_INTERNAL = 8,
  OOCRAN_STATUS_PANIC = 9,
} OocranStatus;

typedef enum OocranNsState {
  OOCRAN_NS_STATE_PENDING = 0,
  OOCRAN_NS_STATE_DEPLOYING = 1,
  OOCRAN_NS_STATE_ACTIVE = 2,
  OOCRAN_NS_STATE_RECONFIGURING = 3,
  OOCRAN_NS_STATE_TERMINATING = 4,
  OOCRAN_NS_STATE_TERMINATED = 5,
  OOCRAN_NS_STATE_FAILED = 6,
} OocranNsState;

// Opaque engine handle. Not thread-safe; use one handle per thread or lock.
typedef struct OocranEngine OocranEngine;

typedef struct OocranLinkBudget {
  double path_loss_db;
  double rx_power_dbm;
  double noise_dbm;
  double snr_db;
  bool operational;
} OocranLinkBudget;

typedef struct OocranPlan {
  uint32_t n_enodebs;
  double covered_area_m2;
  double estimated_setup_s;
} OocranPlan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL.
// The pointer stays valid until the next failing call on this thread.
const char *oocran_last_error_message(void);

// Static, NUL-terminated library version.
const char *oocran_version(void);

// Releases a string returned by this library. NULL is a no-op.
//
// # Safety
// `s` must come from this library and not have been freed.
void oocran_string_free(char *s);

// Free-space path loss in dB.
//
// # Safety
// `out` must be a valid pointer to a double.
enum OocranStatus oocran_fspl_db(double distance_m, double frequency_hz, double *out);

// Line-of-sight link budget.
//
// # Safety
// `out` must be a valid pointer to an `OocranLinkBudget`.
enum OocranStatus oocran_link_budget(double tx_power_dbm,
                                     double frequency_hz,
                                     double distance_m,
                                     double bandwidth_hz,
                                     double snr_threshold_db,
                                     struct OocranLinkBudget *out);

// Estimated seconds until a service of `n_enodebs` eNodeBs is ACTIVE,
// using the reference table or, when `linear` is set, its linear fit.
//
// # Safety
// `out` must be a valid pointer to a double.
enum OocranStatus oocran_estimate_setup_time(uint32_t n_enodebs, bool linear, double *out);

// Sizes a VWI covering `target_area_m2` with cells of `cell_radius_m`.
//
// # Safety
// `out` must be a valid pointer to an `OocranPlan`.
enum OocranStatus oocran_plan(double target_area_m2,
                              double cell_radius_m,
                              bool linear,
                              struct OocranPlan *out);

// Creates an engine on a simulated infrastructure.
// `scenario_toml` may be NULL for the default infrastructure; it must use
// the VIRTUAL clock. Its `actions` are ignored.
//
// # Safety
// `scenario_toml` must be NULL or NUL-terminated; `out` must be valid.
enum OocranStatus oocran_engine_new(const char *scenario_toml, struct OocranEngine **out);

// Releases an engine. NULL is a no-op.
//
// # Safety
// `engine` must come from `oocran_engine_new` and not have been freed.
void oocran_engine_free(struct OocranEngine *engine);

// Submits a service descriptor (TOML, or JSON when it starts with `{`).
// The service starts DEPLOYING; advance time to bring it up.
//
// # Safety
// `engine` and `out_ns_id` must be valid; `descriptor` NUL-terminated.
enum OocranStatus oocran_engine_deploy(struct OocranEngine *engine,
                                       const char *descriptor,
                                       uint64_t *out_ns_id);

// Starts tearing a service down.
//
// # Safety
// `engine` must be valid.
enum OocranStatus oocran_engine_delete(struct OocranEngine *engine, uint64_t ns_id);

// Advances virtual time by `dt_s` seconds, running due work.
//
// # Safety
// `engine` must be valid.
enum OocranStatus oocran_engine_advance(struct OocranEngine *engine, double dt_s);

// Runs until no work is pending. Writes the resulting time if `out_now_s` is not NULL.
//
// # Safety
// `engine` must be valid; `out_now_s` NULL or valid.
enum OocranStatus oocran_engine_run_until_settled(struct OocranEngine *engine, double *out_now_s);

// Current virtual time in seconds.
//
// # Safety
// `engine` and `out` must be valid.
enum OocranStatus oocran_engine_now(struct OocranEngine *engine, double *out);

// Lifecycle state of a service.
//
// # Safety
// `engine` and `out` must be valid.
enum OocranStatus oocran_engine_ns_state(struct OocranEngine *engine,
                                         uint64_t ns_id,
                                         enum OocranNsState *out);

// Infrastructure snapshot as JSON. Free the string with `oocran_string_free`.
//
// # Safety
// `engine` and `out` must be valid.
enum OocranStatus oocran_engine_infrastructure_json(struct OocranEngine *engine, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OOCRAN_H */
