#ifndef ETGP_H
#define ETGP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum EtgpStatus {
  ETGP_STATUS_OK = 0,
  ETGP_STATUS_NULL_POINTER = 1,
  ETGP_STATUS_INVALID_UTF8 = 2,
  ETGP_STATUS_INVALID_CONFIG = 3,
  ETGP_STATUS_INVALID_ARGUMENT = 4,
  ETGP_STATUS_NOT_CONNECTED = 5,
  ETGP_STATUS_NON_POSITIVE_WEIGHT = 6,
  ETGP_STATUS_BUFFER_TOO_SMALL = 7,
  ETGP_STATUS_INTERNAL = 8,
} EtgpStatus;

// Opaque engine handle.
typedef struct EtgpEngine EtgpEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Builds an engine for trial 0 of the config given as NUL-terminated TOML
// text. An empty string selects the defaults. On success `*out` owns a new
// handle.
//
// # Safety
// `config_toml` must be a valid NUL-terminated string and `out` a valid
// pointer to writable storage.
enum EtgpStatus etgp_engine_new(const char *config_toml, struct EtgpEngine **out);

// Releases a handle; null is ignored.
//
// # Safety
// `engine` must be null or a handle from [`etgp_engine_new`] not yet freed.
void etgp_engine_free(struct EtgpEngine *engine);

// Advances `rounds` synchronous rounds.
//
// # Safety
// `engine` must be a live handle.
enum EtgpStatus etgp_engine_step(struct EtgpEngine *engine, size_t rounds);

// Rounds completed so far; 0 for a null handle.
//
// # Safety
// `engine` must be null or a live handle.
size_t etgp_engine_round(const struct EtgpEngine *engine);

// Number of agents `m`; 0 for a null handle.
//
// # Safety
// `engine` must be null or a live handle.
size_t etgp_engine_agents(const struct EtgpEngine *engine);

// Decision dimension `d`; 0 for a null handle.
//
// # Safety
// `engine` must be null or a live handle.
size_t etgp_engine_dim(const struct EtgpEngine *engine);

// Copies the ratio estimates `ẑ` (row-major, `m × d`) into `out`.
//
// # Safety
// `out` must point to at least `len` writable doubles.
enum EtgpStatus etgp_engine_copy_z_hat(const struct EtgpEngine *engine, double *out, size_t len);

// Copies the states `x` (row-major, `m × d`) into `out`.
//
// # Safety
// `out` must point to at least `len` writable doubles.
enum EtgpStatus etgp_engine_copy_x(const struct EtgpEngine *engine, double *out, size_t len);

// Copies the push-sum weights `y` (length `m`) into `out`.
//
// # Safety
// `out` must point to at least `len` writable doubles.
enum EtgpStatus etgp_engine_copy_y(const struct EtgpEngine *engine, double *out, size_t len);

// Total x- and y-channel triggers summed over agents.
//
// # Safety
// `x_total` and `y_total` must be valid writable pointers.
enum EtgpStatus etgp_engine_trigger_totals(const struct EtgpEngine *engine,
                                           uint64_t *x_total,
                                           uint64_t *y_total);

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len − 1` bytes) and returns the full message length.
// Pass a null `buf` to query the length.
//
// # Safety
// `buf` must be null or point to at least `len` writable bytes.
size_t etgp_last_error(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *etgp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ETGP_H */
