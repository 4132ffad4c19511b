#ifndef GEOINT_H
#define GEOINT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of the C API.
 */
typedef enum GiStatus {
  GI_STATUS_OK = 0,
  GI_STATUS_NULL_POINTER = 1,
  GI_STATUS_INVALID_ARGUMENT = 2,
  GI_STATUS_DIMENSION = 3,
  GI_STATUS_CONVERGENCE = 4,
  GI_STATUS_LINEAR_SOLVE = 5,
  GI_STATUS_DOMAIN = 6,
  GI_STATUS_MEMBERSHIP = 7,
  GI_STATUS_PANIC = 8,
  GI_STATUS_INTERNAL = 9,
} GiStatus;

typedef enum GiRetraction {
  GI_RETRACTION_EXP = 0,
  GI_RETRACTION_CAYLEY = 1,
} GiRetraction;

typedef enum GiMethod {
  GI_METHOD_BASE = 0,
  GI_METHOD_ADJOINT = 1,
  GI_METHOD_STRANG = 2,
  GI_METHOD_TRIPLE_JUMP = 3,
} GiMethod;

/**
 * Opaque heavy-top integrator.
 */
typedef struct GiHeavyTop GiHeavyTop;

/**
 * Opaque rigid-body Lie-Poisson integrator.
 */
typedef struct GiRigidBody GiRigidBody;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a rigid-body integrator with principal moments `inertia[3]` and
 * initial body momentum `mu0[3]`. The rotation starts at the identity.
 *
 * # Safety
 * `inertia` and `mu0` must point to three doubles; `out` must be writable.
 */
enum GiStatus gi_rigid_body_new(const double *inertia,
                                const double *mu0,
                                enum GiRetraction retraction_kind,
                                enum GiMethod method,
                                struct GiRigidBody **out);

/**
 * Advances `steps` steps of size `h`. On failure the state is left at the last
 * successful step.
 *
 * # Safety
 * `handle` must come from [`gi_rigid_body_new`].
 */
enum GiStatus gi_rigid_body_step(struct GiRigidBody *handle, double h, uint64_t steps);

/**
 * Copies the body momentum into `mu[3]`.
 *
 * # Safety
 * `handle` must be valid and `mu` must point to three writable doubles.
 */
enum GiStatus gi_rigid_body_momentum(const struct GiRigidBody *handle, double *mu);

/**
 * Copies the reconstructed rotation, row-major, into `r[9]`.
 *
 * # Safety
 * `handle` must be valid and `r` must point to nine writable doubles.
 */
enum GiStatus gi_rigid_body_rotation(const struct GiRigidBody *handle, double *r);

/**
 * Energy, Casimir `|mu|^2` and time of the current state.
 *
 * # Safety
 * `handle` must be valid; each non-null output must be writable.
 */
enum GiStatus gi_rigid_body_invariants(const struct GiRigidBody *handle,
                                       double *energy,
                                       double *casimir,
                                       double *time);

/**
 * # Safety
 * `handle` must come from [`gi_rigid_body_new`] and not be used afterwards; null is ignored.
 */
void gi_rigid_body_free(struct GiRigidBody *handle);

/**
 * Creates a heavy-top integrator. `axis[3]` must be a unit vector.
 *
 * # Safety
 * `inertia`, `axis`, `q0`, `mu0` must point to three doubles each; `out` must be writable.
 */
enum GiStatus gi_heavy_top_new(const double *inertia,
                               double mass,
                               double gravity,
                               double lever,
                               const double *axis,
                               const double *q0,
                               const double *mu0,
                               enum GiRetraction retraction_kind,
                               enum GiMethod method,
                               struct GiHeavyTop **out);

/**
 * # Safety
 * `handle` must come from [`gi_heavy_top_new`].
 */
enum GiStatus gi_heavy_top_step(struct GiHeavyTop *handle, double h, uint64_t steps);

/**
 * Copies `q[3]` and `mu[3]`; either output may be null.
 *
 * # Safety
 * `handle` must be valid; non-null outputs must hold three doubles.
 */
enum GiStatus gi_heavy_top_state(const struct GiHeavyTop *handle, double *q, double *mu);

/**
 * Energy, the Casimirs `|q|^2` and `q . mu` (into `casimirs[2]`), and time.
 *
 * # Safety
 * `handle` must be valid; non-null outputs must be writable.
 */
enum GiStatus gi_heavy_top_invariants(const struct GiHeavyTop *handle,
                                      double *energy,
                                      double *casimirs,
                                      double *time);

/**
 * # Safety
 * `handle` must come from [`gi_heavy_top_new`] and not be used afterwards; null is ignored.
 */
void gi_heavy_top_free(struct GiHeavyTop *handle);

/**
 * Copies the last error message of this thread, NUL-terminated, into `buf`
 * (truncating to `len - 1` bytes). Returns the full message length without the
 * terminator, or 0 when there is no error.
 *
 * # Safety
 * `buf` must be writable for `len` bytes, or null with `len == 0`.
 */
uintptr_t gi_last_error_message(char *buf, uintptr_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gi_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEOINT_H */
