/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef APFLOW_H
#define APFLOW_H

#include <stddef.h>
#include <stdint.h>

// Result codes of the C interface.
typedef enum ApflowStatus {
  APFLOW_STATUS_OK = 0,
  APFLOW_STATUS_NULL_POINTER = 1,
  APFLOW_STATUS_INVALID_ARGUMENT = 2,
  APFLOW_STATUS_INVALID_INITIAL_DATA = 3,
  APFLOW_STATUS_CFL_VIOLATION = 4,
  APFLOW_STATUS_NONLINEAR_SOLVER = 5,
  APFLOW_STATUS_LINEAR_SOLVER = 6,
  APFLOW_STATUS_DOMAIN = 7,
  APFLOW_STATUS_UNSUPPORTED = 8,
  APFLOW_STATUS_BUFFER_TOO_SMALL = 9,
  APFLOW_STATUS_IO = 10,
  APFLOW_STATUS_PANIC = 11,
} ApflowStatus;

// Cell-centred fields that can be copied out of a simulation.
typedef enum ApflowField {
  APFLOW_FIELD_DENSITY = 0,
  APFLOW_FIELD_POTENTIAL_TEMPERATURE = 1,
  // The product `rho theta`.
  APFLOW_FIELD_TOTAL_POTENTIAL_TEMPERATURE = 2,
  // Mean of the two bounding face velocities along x.
  APFLOW_FIELD_VELOCITY_X = 3,
  // Mean of the two bounding face velocities along y; 2D only.
  APFLOW_FIELD_VELOCITY_Y = 4,
} ApflowField;

// Opaque simulation handle.
typedef struct ApflowSimulation ApflowSimulation;

// Scalar diagnostics of the current state.
typedef struct ApflowDiagnostics {
  double time;
  uint64_t step;
  double mass;
  double theta_total;
  double kinetic_energy;
  // NaN when the internal energy is undefined (`gamma = 1`).
  double total_energy;
  double theta_total_deviation;
  double max_div_u;
  double min_rho;
  double min_theta;
} ApflowDiagnostics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *apflow_version(void);

// Message of the last failed call on this thread, or NULL if none.
// The pointer stays valid until the next failing call on the same thread.
const char *apflow_last_error_message(void);

// Creates a simulation of a named case with its default grid.
// `eps <= 0` selects the case's default Mach scaling.
//
// # Safety
// `case_name` must be NULL or a NUL-terminated string; `out` must be NULL
// or point to writable storage for one handle.
enum ApflowStatus apflow_simulation_new(const char *case_name,
                                        double eps,
                                        struct ApflowSimulation **out);

// Creates a simulation from a TOML configuration in the CLI's format.
//
// # Safety
// `toml` must be NULL or a NUL-terminated string; `out` as for
// [`apflow_simulation_new`].
enum ApflowStatus apflow_simulation_from_toml(const char *toml, struct ApflowSimulation **out);

// Releases a simulation. NULL is ignored.
//
// # Safety
// `sim` must be NULL or a handle from this library that has not been freed.
void apflow_simulation_free(struct ApflowSimulation *sim);

// Takes one step of length at most `dt_cap` (use INFINITY for none).
// On failure the state is unchanged.
//
// # Safety
// `sim` must be a live handle; `dt_out` may be NULL.
enum ApflowStatus apflow_simulation_step(struct ApflowSimulation *sim,
                                         double dt_cap,
                                         double *dt_out);

// Steps until the simulation time reaches `t_end`, landing on it exactly.
// On failure the state holds the last accepted step.
//
// # Safety
// `sim` must be a live handle; `steps_out` may be NULL.
enum ApflowStatus apflow_simulation_advance(struct ApflowSimulation *sim,
                                            double t_end,
                                            uint64_t *steps_out);

// Current simulation time.
//
// # Safety
// `sim` must be a live handle and `out` writable.
enum ApflowStatus apflow_simulation_time(const struct ApflowSimulation *sim, double *out);

// Length and Newton iteration count of the most recent step.
//
// # Safety
// `sim` must be a live handle; either output may be NULL.
enum ApflowStatus apflow_simulation_last_step(const struct ApflowSimulation *sim,
                                              double *dt_out,
                                              uint32_t *newton_iterations_out);

// Grid shape: `dim_out` receives 1 or 2, `counts_out` (length 2) the cells
// per axis, with 1 for an absent axis.
//
// # Safety
// `sim` must be a live handle; `dim_out` writable; `counts_out` NULL or
// writable for two values.
enum ApflowStatus apflow_simulation_shape(const struct ApflowSimulation *sim,
                                          size_t *dim_out,
                                          size_t *counts_out);

// Copies a cell field (row-major, x fastest) into `buffer` of length `len`.
// `len` must be at least the number of cells.
//
// # Safety
// `sim` must be a live handle; `buffer` writable for `len` values.
enum ApflowStatus apflow_simulation_copy_field(const struct ApflowSimulation *sim,
                                               enum ApflowField field,
                                               double *buffer,
                                               size_t len);

// Scalar diagnostics of the current state.
//
// # Safety
// `sim` must be a live handle and `out` writable.
enum ApflowStatus apflow_simulation_diagnostics(const struct ApflowSimulation *sim,
                                                struct ApflowDiagnostics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* APFLOW_H */
