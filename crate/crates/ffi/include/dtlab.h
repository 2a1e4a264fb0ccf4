#ifndef DTLAB_H
#define DTLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DtlabStatus {
  DTLAB_STATUS_OK = 0,
  DTLAB_STATUS_INVALID_ARGUMENT = 1,
  DTLAB_STATUS_NULL_POINTER = 2,
  DTLAB_STATUS_PARSE = 3,
  DTLAB_STATUS_NOT_SQUARE = 4,
  DTLAB_STATUS_PRECISION = 5,
  DTLAB_STATUS_PRECONDITION = 6,
  DTLAB_STATUS_CHECK_FAILED = 7,
  DTLAB_STATUS_IO = 8,
  DTLAB_STATUS_PANIC = 9,
} DtlabStatus;

/**
 * A DT random matrix ensemble: diagonal law, `c`, dimension and seed.
 */
typedef struct DtlabEnsemble DtlabEnsemble;

/**
 * Piecewise polynomial on `[0,1]` with rational coefficients.
 */
typedef struct DtlabPoly DtlabPoly;

/**
 * Linear combination of words in `T1, T1*, T2, T2*` with polynomial insertions.
 */
typedef struct DtlabWord DtlabWord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *dtlab_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Free with
 * [`dtlab_string_free`].
 */
char *dtlab_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void dtlab_string_free(char *s);

/**
 * Parses `"[0,1/2]:0,1;[1/2,1]:1"` or a bare coefficient list `"c0,c1,..."`.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum DtlabStatus dtlab_poly_parse(const char *text_in, struct DtlabPoly **out);

/**
 * # Safety
 * `p` must be NULL or a handle from this library, not yet freed.
 */
void dtlab_poly_free(struct DtlabPoly *p);

/**
 * # Safety
 * `p` must be a live handle; `out` must be writable.
 */
enum DtlabStatus dtlab_poly_to_string(const struct DtlabPoly *p, char **out);

/**
 * Value at `x ∈ [0,1]`.
 *
 * # Safety
 * `p` must be a live handle; `out` must be writable.
 */
enum DtlabStatus dtlab_poly_eval(const struct DtlabPoly *p, double x, double *out);

/**
 * Exact `∫₀¹ p` as `"p/q"`.
 *
 * # Safety
 * `p` must be a live handle; `out` must be writable.
 */
enum DtlabStatus dtlab_poly_integral(const struct DtlabPoly *p, char **out);

/**
 * `x ↦ ∫_x^1 p`.
 *
 * # Safety
 * `p` must be a live handle; `out` must be writable.
 */
enum DtlabStatus dtlab_poly_cov_l(const struct DtlabPoly *p, struct DtlabPoly **out);

/**
 * `x ↦ ∫_0^x p`.
 *
 * # Safety
 * `p` must be a live handle; `out` must be writable.
 */
enum DtlabStatus dtlab_poly_cov_lstar(const struct DtlabPoly *p, struct DtlabPoly **out);

/**
 * Parses a word expression such as `"2 T1 {[0,1]:0,1} T2* -1/3 T2"`.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum DtlabStatus dtlab_word_parse(const char *text_in, struct DtlabWord **out);

/**
 * # Safety
 * `w` must be NULL or a handle from this library, not yet freed.
 */
void dtlab_word_free(struct DtlabWord *w);

/**
 * # Safety
 * `w` must be a live handle; `out` must be writable.
 */
enum DtlabStatus dtlab_word_to_string(const struct DtlabWord *w, char **out);

/**
 * Exact trace `τ(w)` as `"p/q"`.
 *
 * # Safety
 * `w` must be a live handle; `out` must be writable.
 */
enum DtlabStatus dtlab_word_tau(const struct DtlabWord *w, char **out);

/**
 * `Φ*(S_t, S_t* : 𝒟)` from the conjugate vector, as `"p/q"`. Needs
 * `√(t/(c²+t))` rational; otherwise returns `NotSquare`.
 *
 * # Safety
 * `t` and `csq` must be NUL-terminated strings; `out` must be writable.
 */
enum DtlabStatus dtlab_fisher_exact(const char *t, const char *csq, char **out);

/**
 * Number of non-crossing partitions of `{1..n}`, `1 ≤ n ≤ 14`.
 *
 * # Safety
 * `out` must be writable.
 */
enum DtlabStatus dtlab_nc_partition_count(uint32_t n, uint64_t *out);

/**
 * `mu` uses the text form of the CLI, e.g. `"delta:0"` or `"atomic:0@1/2;1@1/2"`.
 *
 * # Safety
 * `mu` must be a NUL-terminated string; `out` must be writable.
 */
enum DtlabStatus dtlab_ensemble_new(const char *mu,
                                    double c,
                                    size_t n,
                                    uint64_t seed,
                                    struct DtlabEnsemble **out);

/**
 * # Safety
 * `e` must be NULL or a handle from this library, not yet freed.
 */
void dtlab_ensemble_free(struct DtlabEnsemble *e);

/**
 * Monte Carlo mean and standard error of the normalized trace of `word`
 * (e.g. `"Z Z*"`), `reps ≥ 2`.
 *
 * # Safety
 * `e` must be a live handle, `word` a NUL-terminated string, `mean` and
 * `stderr_out` writable.
 */
enum DtlabStatus dtlab_ensemble_estimate(const struct DtlabEnsemble *e,
                                         const char *word,
                                         size_t reps,
                                         double *mean,
                                         double *stderr_out);

/**
 * Mean largest singular value of `Z_n` over `reps` replicates.
 *
 * # Safety
 * `e` must be a live handle; `mean` and `stderr_out` writable.
 */
enum DtlabStatus dtlab_ensemble_norm(const struct DtlabEnsemble *e,
                                     size_t reps,
                                     double *mean,
                                     double *stderr_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DTLAB_H */
