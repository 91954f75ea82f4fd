#ifndef GRW_H
#define GRW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GrwStatus {
  GRW_STATUS_OK = 0,
  GRW_STATUS_NULL_POINTER = 1,
  GRW_STATUS_VALIDATION = 2,
  GRW_STATUS_RUNTIME = 3,
  GRW_STATUS_BUFFER_TOO_SMALL = 4,
  GRW_STATUS_PANIC = 5,
} GrwStatus;

/**
 * Opaque Kac ring.
 */
typedef struct GrwKacRing GrwKacRing;

/**
 * Opaque random stream.
 */
typedef struct GrwRng GrwRng;

/**
 * Opaque wavefunction on a periodic grid.
 */
typedef struct GrwWaveFunction GrwWaveFunction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL, or 0
 * when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t grw_last_error_message(char *buf, size_t len);

/**
 * Static version string.
 */
const char *grw_version(void);

/**
 * Normalized Gaussian packet with density standard deviation `sigma`.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum GrwStatus grw_wavefunction_gaussian(double x_min,
                                         double x_max,
                                         size_t n_points,
                                         double center,
                                         double sigma,
                                         double momentum,
                                         struct GrwWaveFunction **out);

/**
 * `√w₁ e^{0}|left⟩ + √(1−w₁) e^{iφ}|right⟩` with packets at `center ∓ separation/2`.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum GrwStatus grw_wavefunction_two_peak(double x_min,
                                         double x_max,
                                         size_t n_points,
                                         double c1_sq,
                                         double phase,
                                         double center,
                                         double separation,
                                         double sigma,
                                         struct GrwWaveFunction **out);

/**
 * # Safety
 * `psi` must be null or a handle from this library not yet freed.
 */
void grw_wavefunction_free(struct GrwWaveFunction *psi);

/**
 * # Safety
 * Handles and output pointers must be valid.
 */
enum GrwStatus grw_wavefunction_norm(const struct GrwWaveFunction *psi, double *out);

/**
 * Weight in `[lo, hi)`.
 *
 * # Safety
 * Handles and output pointers must be valid.
 */
enum GrwStatus grw_wavefunction_region_weight(const struct GrwWaveFunction *psi,
                                              double lo,
                                              double hi,
                                              double *out);

/**
 * # Safety
 * Handles and output pointers must be valid.
 */
enum GrwStatus grw_wavefunction_moments(const struct GrwWaveFunction *psi,
                                        double *mean,
                                        double *variance);

/**
 * Copies the density `|ψ(xᵢ)|²` (summed over levels) into `buf`.
 *
 * # Safety
 * `buf` must point to `len` writable doubles; `written` must be valid.
 */
enum GrwStatus grw_wavefunction_density(const struct GrwWaveFunction *psi,
                                        double *buf,
                                        size_t len,
                                        size_t *written);

/**
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum GrwStatus grw_rng_new(uint64_t seed, uint64_t stream_id, struct GrwRng **out);

/**
 * # Safety
 * `rng` must be null or a handle from this library not yet freed.
 */
void grw_rng_free(struct GrwRng *rng);

/**
 * Uniform draw in `[0, 1)`.
 *
 * # Safety
 * Handles and output pointers must be valid.
 */
enum GrwStatus grw_rng_uniform(struct GrwRng *rng, double *out);

/**
 * Draws a collapse center from the current state.
 *
 * # Safety
 * Handles and output pointers must be valid.
 */
enum GrwStatus grw_sample_center(const struct GrwWaveFunction *psi,
                                 double a,
                                 struct GrwRng *rng,
                                 double *out);

/**
 * Multiplies the state by the Gaussian jump at `center` and renormalizes in place.
 *
 * # Safety
 * `psi` must be a valid handle.
 */
enum GrwStatus grw_apply_jump(struct GrwWaveFunction *psi, double center, double a);

/**
 * Poisson hit times on `(0, horizon]` at rate `n_eff / tau`. Writes up to
 * `len` times; `count` receives the total, which may exceed `len`.
 *
 * # Safety
 * `buf` must point to `len` writable doubles (or be null with `len == 0`).
 */
enum GrwStatus grw_schedule_jumps(double tau,
                                  double n_eff,
                                  double horizon,
                                  struct GrwRng *rng,
                                  double *buf,
                                  size_t len,
                                  size_t *count);

/**
 * `tau / n_eff`.
 *
 * # Safety
 * `out` must be valid.
 */
enum GrwStatus grw_mean_first_jump_time(double tau, double n_eff, double *out);

/**
 * Chi-square of decided counts against expected probabilities `(p1, p2)`.
 *
 * # Safety
 * Output pointers must be valid.
 */
enum GrwStatus grw_born_chi_square(size_t count_1,
                                   size_t count_2,
                                   double p1,
                                   double p2,
                                   double *statistic,
                                   double *p_value);

/**
 * Ring from per-site bytes (nonzero = black ball / marked edge).
 *
 * # Safety
 * `colors` and `markers` must point to `n_sites` readable bytes; `out` must be valid.
 */
enum GrwStatus grw_kac_ring_new(size_t n_sites,
                                const uint8_t *colors,
                                const uint8_t *markers,
                                struct GrwKacRing **out);

/**
 * # Safety
 * `ring` must be null or a handle from this library not yet freed.
 */
void grw_kac_ring_free(struct GrwKacRing *ring);

/**
 * Advances `steps` deterministic steps; negative values step backwards.
 *
 * # Safety
 * `ring` must be a valid handle.
 */
enum GrwStatus grw_kac_ring_step(struct GrwKacRing *ring, int64_t steps);

/**
 * Fraction of black balls.
 *
 * # Safety
 * Handles and output pointers must be valid.
 */
enum GrwStatus grw_kac_ring_fraction(const struct GrwKacRing *ring, double *out);

/**
 * Runs a cat or measurement-chain config file and reports
 * `[outcome 1, outcome 2, undecided]` counts.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `counts` must point to 3 writable values.
 */
enum GrwStatus grw_run_config(const char *config_path,
                              size_t trajectories,
                              uint64_t master_seed,
                              size_t workers,
                              size_t *counts);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRW_H */
