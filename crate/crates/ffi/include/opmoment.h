#ifndef OPMOMENT_H
#define OPMOMENT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OpmStatus {
  OPM_STATUS_OK = 0,
  OPM_STATUS_NULL_POINTER = 1,
  OPM_STATUS_INVALID_ARGUMENT = 2,
  OPM_STATUS_DIMENSION_MISMATCH = 3,
  OPM_STATUS_NOT_HERMITIAN = 4,
  OPM_STATUS_INSUFFICIENT_MOMENTS = 5,
  OPM_STATUS_NOT_PSD = 6,
  OPM_STATUS_NOT_MEASURE = 7,
  OPM_STATUS_NO_RECURRENCE = 8,
  OPM_STATUS_NON_REAL_ROOTS = 9,
  OPM_STATUS_SINGULAR = 10,
  OPM_STATUS_NUMERICAL = 11,
  OPM_STATUS_PANIC = 99,
} OpmStatus;

/**
 * Opaque finitely atomic operator-valued measure.
 */
typedef struct OpmMeasure OpmMeasure;

/**
 * Opaque operator moment sequence.
 */
typedef struct OpmSequence OpmSequence;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *opm_version(void);

/**
 * Message for the most recent failure on this thread, or null.
 * The pointer stays valid until the next call into the library.
 */
const char *opm_last_error_message(void);

/**
 * Builds a sequence from `count` row-major `dim x dim` Hermitian matrices.
 *
 * # Safety
 * `re` (and `im` when non-null) must point to `count * dim * dim` doubles.
 * `out` must be a valid pointer.
 */
enum OpmStatus opm_sequence_new(uintptr_t dim,
                                uintptr_t count,
                                const double *re,
                                const double *im,
                                struct OpmSequence **out);

/**
 * # Safety
 * `seq` must come from `opm_sequence_new` and not be used afterwards.
 */
void opm_sequence_free(struct OpmSequence *seq);

/**
 * # Safety
 * `seq` must be a live handle or null.
 */
uintptr_t opm_sequence_dim(const struct OpmSequence *seq);

/**
 * # Safety
 * `seq` must be a live handle or null.
 */
uintptr_t opm_sequence_len(const struct OpmSequence *seq);

/**
 * Block Hankel test of order `order`. A non-positive `eps` selects the default.
 *
 * # Safety
 * `seq` must be a live handle; output pointers may be null.
 */
enum OpmStatus opm_hamburger_check(const struct OpmSequence *seq,
                                   uintptr_t order,
                                   double eps,
                                   bool *passed,
                                   double *min_eigenvalue);

/**
 * Sampled localized Hankel test: canonical polarized vectors plus
 * `extra_random` seeded Gaussian samples.
 *
 * # Safety
 * `seq` must be a live handle; output pointers may be null.
 */
enum OpmStatus opm_local_check(const struct OpmSequence *seq,
                               uintptr_t order,
                               uintptr_t extra_random,
                               uint64_t seed,
                               double eps,
                               bool *passed,
                               double *margin);

/**
 * Recovers the representing charge of a recursive sequence. `r_max == 0`
 * selects half the sequence length. `is_moment` reports whether the charge
 * is a positive measure.
 *
 * # Safety
 * `seq` must be a live handle and `out` a valid pointer.
 */
enum OpmStatus opm_solve_recursive(const struct OpmSequence *seq,
                                   uintptr_t r_max,
                                   struct OpmMeasure **out,
                                   bool *is_moment);

/**
 * Pencil bounds `alpha, beta` of the pair `(T_0, T_1)` held in a two-term sequence.
 *
 * # Safety
 * `seq` must be a live handle; output pointers may be null.
 */
enum OpmStatus opm_pencil_bounds(const struct OpmSequence *seq, double *alpha, double *beta);

/**
 * Two-atomic positive measure with moments `(T_0, T_1)`.
 *
 * # Safety
 * `seq` must be a live handle and `out` a valid pointer.
 */
enum OpmStatus opm_two_atomic(const struct OpmSequence *seq, struct OpmMeasure **out);

/**
 * Builds a measure from `count` atoms and row-major weights.
 *
 * # Safety
 * `atoms` must hold `count` doubles; `re` (and `im` when non-null)
 * `count * dim * dim` doubles. `out` must be a valid pointer.
 */
enum OpmStatus opm_measure_new(uintptr_t dim,
                               uintptr_t count,
                               const double *atoms,
                               const double *re,
                               const double *im,
                               struct OpmMeasure **out);

/**
 * # Safety
 * `m` must come from this library and not be used afterwards.
 */
void opm_measure_free(struct OpmMeasure *m);

/**
 * # Safety
 * `m` must be a live handle or null.
 */
uintptr_t opm_measure_dim(const struct OpmMeasure *m);

/**
 * Number of atoms after merging.
 *
 * # Safety
 * `m` must be a live handle or null.
 */
uintptr_t opm_measure_len(const struct OpmMeasure *m);

/**
 * Copies the sorted atoms into `out`, which must hold `opm_measure_len` doubles.
 *
 * # Safety
 * `m` must be a live handle and `out` large enough.
 */
enum OpmStatus opm_measure_atoms(const struct OpmMeasure *m, double *out);

/**
 * Copies weight `k` row-major into `re` and `im` (`dim * dim` doubles each;
 * `im` may be null).
 *
 * # Safety
 * `m` must be a live handle and the buffers large enough.
 */
enum OpmStatus opm_measure_weight(const struct OpmMeasure *m, uintptr_t k, double *re, double *im);

/**
 * Whether every weight is PSD; `min_eigenvalue` receives the worst one.
 *
 * # Safety
 * `m` must be a live handle; output pointers may be null.
 */
enum OpmStatus opm_measure_is_positive(const struct OpmMeasure *m,
                                       bool *passed,
                                       double *min_eigenvalue);

/**
 * Moment sequence `T_0 .. T_last` of a measure (`last + 1` terms).
 *
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum OpmStatus opm_measure_moments(const struct OpmMeasure *m,
                                   uintptr_t last,
                                   struct OpmSequence **out);

/**
 * Static NUL-terminated description of a status code.
 */
const char *opm_status_name(enum OpmStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPMOMENT_H */
