#ifndef COULOMBFLOW_H
#define COULOMBFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every function.
 */
typedef enum CfStatus {
  CF_STATUS_OK = 0,
  CF_STATUS_NULL_POINTER = 1,
  CF_STATUS_INVALID_ARGUMENT = 2,
  CF_STATUS_CONFIG = 3,
  CF_STATUS_NUMERICAL = 4,
  CF_STATUS_VERIFICATION = 5,
  CF_STATUS_IO = 6,
  CF_STATUS_BUFFER_TOO_SMALL = 7,
  CF_STATUS_PANIC = 8,
} CfStatus;

/**
 * A piecewise-constant density on a uniform grid.
 */
typedef struct CfDensity CfDensity;

/**
 * Output of a particle ensemble run.
 */
typedef struct CfEnsemble CfEnsemble;

/**
 * A potential `V`.
 */
typedef struct CfPotential CfPotential;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread, NUL-terminated and
 * truncated to `len` bytes. Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t cf_last_error_message(char *buf, size_t len);

/**
 * Builds a potential from a spec string such as `quadratic:theta=0.5`.
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CfStatus cf_potential_new(const char *spec, struct CfPotential **out_handle);

/**
 * # Safety
 * `p` must be null or a handle from [`cf_potential_new`] not yet freed.
 */
void cf_potential_free(struct CfPotential *p);

/**
 * `V(x)` and `V'(x)`.
 *
 * # Safety
 * `p` must be a live handle; `v` and `dv` may be null.
 */
enum CfStatus cf_potential_eval(const struct CfPotential *p, double x, double *v, double *dv);

/**
 * A density from `n` cell values on `[left, right]`, normalized to unit mass.
 *
 * # Safety
 * `values` must point to `n` readable values and `out` be valid.
 */
enum CfStatus cf_density_new(double left,
                             double right,
                             size_t n,
                             const double *values,
                             struct CfDensity **out_handle);

/**
 * The closed-form equilibrium of `potential` on `[left, right]` with `n` cells.
 *
 * # Safety
 * `potential` must be a live handle and `out` valid.
 */
enum CfStatus cf_density_equilibrium(const struct CfPotential *potential,
                                     double left,
                                     double right,
                                     size_t n,
                                     struct CfDensity **out_handle);

/**
 * # Safety
 * `d` must be null or a live density handle.
 */
void cf_density_free(struct CfDensity *d);

/**
 * Cell count of the grid.
 *
 * # Safety
 * `d` must be a live handle and `n` valid.
 */
enum CfStatus cf_density_len(const struct CfDensity *d, size_t *n);

/**
 * Cell values of the density.
 *
 * # Safety
 * `buf` must point to `len` writable values; `written` may be null.
 */
enum CfStatus cf_density_values(const struct CfDensity *d,
                                double *buf,
                                size_t len,
                                size_t *written);

/**
 * Hilbert transform `Hρ` at the cell centers.
 *
 * # Safety
 * As for [`cf_density_values`].
 */
enum CfStatus cf_hilbert(const struct CfDensity *d, double *buf, size_t len, size_t *written);

/**
 * Free entropy `Σ_V(ρ)`.
 *
 * # Safety
 * Handles must be live and `value` valid.
 */
enum CfStatus cf_free_entropy(const struct CfDensity *d,
                              const struct CfPotential *p,
                              double *value);

/**
 * Free Fisher information `∫ (Hρ − V'/2)² dρ`.
 *
 * # Safety
 * Handles must be live and `value` valid.
 */
enum CfStatus cf_free_fisher(const struct CfDensity *d, const struct CfPotential *p, double *value);

/**
 * Wasserstein distance of order `p ∈ [1, 2]` between two densities.
 *
 * # Safety
 * Handles must be live and `value` valid.
 */
enum CfStatus cf_wasserstein(const struct CfDensity *a,
                             const struct CfDensity *b,
                             double p,
                             double *value);

/**
 * Wasserstein distance of order `p` between a density and the empirical
 * measure of `n` atoms.
 *
 * # Safety
 * `atoms` must point to `n` readable values.
 */
enum CfStatus cf_wasserstein_atoms(const struct CfDensity *d,
                                   const double *atoms,
                                   size_t n,
                                   double p,
                                   double *value);

/**
 * Stieltjes transform `G(z) = ∫ ρ(x)/(z − x) dx` off the real axis.
 *
 * # Safety
 * `d` must be live; `g_re` and `g_im` valid.
 */
enum CfStatus cf_stieltjes(const struct CfDensity *d,
                           double z_re,
                           double z_im,
                           double *g_re,
                           double *g_im);

/**
 * One upwind finite-volume step of size `dt`; the result is a new handle.
 *
 * # Safety
 * Handles must be live and `out` valid.
 */
enum CfStatus cf_pde_step(const struct CfDensity *d,
                          const struct CfPotential *p,
                          double dt,
                          struct CfDensity **out_handle);

/**
 * Runs `n_paths` particle paths up to `t_end` with snapshots at `0` and
 * `t_end`. Particles start at the quantiles of `init`, a density spec such
 * as `semicircle:radius=2`. `dt <= 0` selects the default step.
 *
 * # Safety
 * `p` must be live, `init` NUL-terminated and `out` valid.
 */
enum CfStatus cf_sde_run(const struct CfPotential *p,
                         const char *init,
                         size_t n_particles,
                         double beta,
                         size_t n_paths,
                         double t_end,
                         double dt,
                         uint64_t seed,
                         struct CfEnsemble **out_handle);

/**
 * # Safety
 * `e` must be null or a live ensemble handle.
 */
void cf_ensemble_free(struct CfEnsemble *e);

/**
 * Number of snapshots (2 for [`cf_sde_run`]: `t = 0` and `t_end`).
 *
 * # Safety
 * `e` must be live and `n` valid.
 */
enum CfStatus cf_ensemble_snapshots(const struct CfEnsemble *e, size_t *n);

/**
 * Sorted atoms of all paths pooled at snapshot `k`.
 *
 * # Safety
 * As for [`cf_density_values`].
 */
enum CfStatus cf_ensemble_atoms(const struct CfEnsemble *e,
                                size_t k,
                                double *buf,
                                size_t len,
                                size_t *written);

/**
 * Path mean of the second moment at snapshot `k`.
 *
 * # Safety
 * `e` must be live and `value` valid.
 */
enum CfStatus cf_ensemble_m2(const struct CfEnsemble *e, size_t k, double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COULOMBFLOW_H */
