#ifndef GP_LIMITS_H
#define GP_LIMITS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GplBoundary {
  GPL_BOUNDARY_DIRICHLET = 0,
  GPL_BOUNDARY_PERIODIC = 1,
} GplBoundary;

/**
 * Result code of every call.
 */
typedef enum GplStatus {
  GPL_STATUS_OK = 0,
  GPL_STATUS_NULL_POINTER = 1,
  GPL_STATUS_INVALID_ARGUMENT = 2,
  GPL_STATUS_CONFIG_ERROR = 3,
  GPL_STATUS_SOLVER_ERROR = 4,
  GPL_STATUS_BUFFER_TOO_SMALL = 5,
  GPL_STATUS_PANIC = 6,
} GplStatus;

typedef enum GplTrap {
  GPL_TRAP_HARMONIC = 0,
  GPL_TRAP_QUARTIC = 1,
  GPL_TRAP_ZERO = 2,
} GplTrap;

/**
 * A converged (or best-effort) GP ground state.
 */
typedef struct GplGpSolution GplGpSolution;

/**
 * A tensor-product grid.
 */
typedef struct GplGrid GplGrid;

/**
 * JSON output of a config-driven run.
 */
typedef struct GplRunResult GplRunResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *gpl_version(void);

/**
 * Length in bytes (without the NUL) of the last error message on this thread, 0 if none.
 */
size_t gpl_last_error_length(void);

/**
 * Copy the last error message into `buf` (NUL-terminated, truncated to `len`).
 *
 * Returns the number of bytes written without the NUL.
 *
 * # Safety
 * `buf` must be NULL or point to `len` writable bytes.
 */
size_t gpl_last_error_message(char *buf, size_t len);

/**
 * Build a grid of `points_per_axis`^`dim` nodes on [-half_width, half_width]^dim.
 *
 * # Safety
 * `out` must be NULL or a valid pointer.
 */
enum GplStatus gpl_grid_new(size_t dim,
                            double half_width,
                            size_t points_per_axis,
                            enum GplBoundary boundary,
                            struct GplGrid **out);

/**
 * # Safety
 * `grid` must be NULL or a handle from [`gpl_grid_new`] not yet freed.
 */
void gpl_grid_free(struct GplGrid *grid);

/**
 * Total number of nodes, or 0 for NULL.
 *
 * # Safety
 * `grid` must be NULL or a live handle.
 */
size_t gpl_grid_node_count(const struct GplGrid *grid);

/**
 * Minimize the GP functional with coupling `alpha` in the given trap.
 *
 * # Safety
 * `grid` must be a live handle and `out` a valid pointer.
 */
enum GplStatus gpl_gp_minimize(const struct GplGrid *grid,
                               enum GplTrap trap,
                               double alpha,
                               struct GplGpSolution **out);

/**
 * # Safety
 * `sol` must be NULL or a live handle.
 */
void gpl_gp_solution_free(struct GplGpSolution *sol);

/**
 * # Safety
 * `sol` must be a live handle; `energy` and `converged` may be NULL.
 */
enum GplStatus gpl_gp_solution_energy(const struct GplGpSolution *sol,
                                      double *energy,
                                      bool *converged);

/**
 * Copy the ground state φ (row-major nodes) into `buf`.
 *
 * # Safety
 * `sol` must be a live handle; `buf` must hold `len` doubles; `written` may be NULL.
 */
enum GplStatus gpl_gp_solution_phi(const struct GplGpSolution *sol,
                                   double *buf,
                                   size_t len,
                                   size_t *written);

/**
 * Scattering length of the Gaussian v(r) = g exp(-r²/(2s²)) in dimension 2 or 3.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum GplStatus gpl_scattering_length_gaussian(double g,
                                              double s,
                                              size_t dim,
                                              double r_max,
                                              size_t mesh,
                                              double *out);

/**
 * Parse a key = value config and run its subcommand.
 *
 * # Safety
 * `config` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
 */
enum GplStatus gpl_run_config(const char *config, struct GplRunResult **out);

/**
 * JSON text of a run; valid until the result is freed.
 *
 * # Safety
 * `res` must be NULL or a live handle.
 */
const char *gpl_run_result_json(const struct GplRunResult *res);

/**
 * CSV table of a run, or NULL when the subcommand has none.
 *
 * # Safety
 * `res` must be NULL or a live handle.
 */
const char *gpl_run_result_csv(const struct GplRunResult *res);

/**
 * # Safety
 * `res` must be NULL or a live handle.
 */
void gpl_run_result_free(struct GplRunResult *res);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GP_LIMITS_H */
