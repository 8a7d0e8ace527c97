#ifndef PARAGROUP_H
#define PARAGROUP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. Zero is success.
typedef enum PgStatus {
  PG_STATUS_OK = 0,
  PG_STATUS_NULL_POINTER = 1,
  PG_STATUS_INVALID_ARGUMENT = 2,
  PG_STATUS_CONFIG = 3,
  PG_STATUS_ADMISSIBILITY = 4,
  PG_STATUS_SOLVER = 5,
  PG_STATUS_STEP_REJECTED = 6,
  PG_STATUS_CFL = 7,
  PG_STATUS_INTERNAL = 8,
  PG_STATUS_PANIC = 9,
} PgStatus;

// Field selector of the state accessors.
typedef enum PgField {
  PG_FIELD_ZETA = 0,
  PG_FIELD_PHI = 1,
} PgField;

typedef struct PgSolver PgSolver;

typedef struct PgState PgState;

// Conserved quantities of a state, see `pg_solver_conserved`.
typedef struct PgConserved {
  double t;
  double volume;
  double area;
  double kinetic;
  double hamiltonian;
  double momentum[3];
  double center[3];
} PgConserved;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *pg_last_error(void);

// Library version as a static NUL-terminated string.
const char *pg_version(void);

// Linear frequency `sqrt(n (n - 1) (n + 2))` of the degree-`n` mode.
double pg_dispersion(uint32_t n);

// Solver with default settings at band `l_max`, stepping with `dt`.
//
// # Safety
// `out` must be a valid pointer to writable storage.
enum PgStatus pg_solver_new(uint32_t l_max, double dt, struct PgSolver **out);

// Solver from a JSON `WaveConfig` object (missing keys take defaults).
//
// # Safety
// `json` must be a NUL-terminated string and `out` writable.
enum PgStatus pg_solver_new_json(const char *json, struct PgSolver **out);

// # Safety
// `s` must come from `pg_solver_new*` and not be used afterwards. Null is a no-op.
void pg_solver_free(struct PgSolver *s);

// Largest stable step of the solver.
//
// # Safety
// `s` must be a live solver handle.
double pg_solver_cfl_limit(const struct PgSolver *s);

// Rest state (round unit sphere, zero potential) at band `l_max`.
//
// # Safety
// `out` must be writable.
enum PgStatus pg_state_new(uint32_t l_max, struct PgState **out);

// # Safety
// `s` must come from `pg_state_new` and not be used afterwards. Null is a no-op.
void pg_state_free(struct PgState *s);

// Time of the state, NaN for null.
//
// # Safety
// `s` must be a live state handle or null.
double pg_state_time(const struct PgState *s);

// Sets the complex coefficient `(n, m)` of a field. The caller keeps the
// field real (`c_{n,-m} = (-1)^m conj(c_{n,m})`).
//
// # Safety
// `s` must be a live state handle.
enum PgStatus pg_state_set_coeff(struct PgState *s,
                                 enum PgField f,
                                 uint32_t n,
                                 int32_t m,
                                 double re,
                                 double im);

// Adds `amp` times the real harmonic of degree `n`, order `m` to a field.
//
// # Safety
// `s` must be a live state handle.
enum PgStatus pg_state_add_real_mode(struct PgState *s,
                                     enum PgField f,
                                     uint32_t n,
                                     int32_t m,
                                     double amp);

// Reads coefficient `(n, m)` of a field.
//
// # Safety
// `s` must be a live state handle, `re` and `im` writable.
enum PgStatus pg_state_get_coeff(const struct PgState *s,
                                 enum PgField f,
                                 uint32_t n,
                                 int32_t m,
                                 double *re,
                                 double *im);

// One RK4 step of size `dt`, in place. On failure the state is unchanged.
//
// # Safety
// Both handles must be live.
enum PgStatus pg_solver_step(const struct PgSolver *solver, struct PgState *s, double dt);

// Conserved quantities of the state.
//
// # Safety
// Both handles must be live, `out` writable.
enum PgStatus pg_solver_conserved(const struct PgSolver *solver,
                                  const struct PgState *s,
                                  struct PgConserved *out);

// Mean curvature of the surface `r = 1 + zeta` of the state, returned as
// `(l_max + 1)^2` complex coefficients packed as `re, im` pairs.
//
// # Safety
// `s` must be live and `out` must hold `len` doubles.
enum PgStatus pg_state_mean_curvature(const struct PgState *s, double *out, uintptr_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARAGROUP_H */
