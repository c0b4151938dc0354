#ifndef LLL_SAMPLER_H
#define LLL_SAMPLER_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every exported call.
 */
typedef enum LllStatus {
  LLL_STATUS_OK = 0,
  LLL_STATUS_NULL_POINTER = 1,
  LLL_STATUS_INVALID_ARGUMENT = 2,
  LLL_STATUS_PARSE = 3,
  /**
   * No admissible scheme, or the instance is outside the supported regime.
   */
  LLL_STATUS_REGIME = 4,
  /**
   * Resampling did not find a satisfying assignment within its budget.
   */
  LLL_STATUS_NOT_FOUND = 5,
  /**
   * The sampler returned ERROR (I1 or I2).
   */
  LLL_STATUS_SAMPLE_FAILED = 6,
  LLL_STATUS_COUNT_FAILED = 7,
  /**
   * The output buffer is shorter than the number of variables.
   */
  LLL_STATUS_BUFFER_TOO_SMALL = 8,
  LLL_STATUS_PANIC = 9,
} LllStatus;

/**
 * An atomic CSP instance.
 */
typedef struct LllCsp LllCsp;

/**
 * A projection scheme for one instance.
 */
typedef struct LllScheme LllScheme;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *lll_last_error_message(void);

/**
 * Parses DIMACS CNF text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LllStatus lll_csp_from_dimacs(const char *text, struct LllCsp **out);

/**
 * Builds the proper `q`-coloring instance of a hypergraph given as an edge list.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LllStatus lll_csp_from_hypergraph(const char *text, uint32_t q, struct LllCsp **out);

/**
 * Number of variables, or 0 for a null handle.
 *
 * # Safety
 * `csp` must be null or a live handle.
 */
size_t lll_csp_num_vars(const struct LllCsp *csp);

/**
 * Number of constraints, or 0 for a null handle.
 *
 * # Safety
 * `csp` must be null or a live handle.
 */
size_t lll_csp_num_constraints(const struct LllCsp *csp);

/**
 * # Safety
 * `csp` must be null or a handle not yet freed.
 */
void lll_csp_free(struct LllCsp *csp);

/**
 * Constructs an admissible projection scheme, trying the applicable cases
 * in order. Fails with [`LllStatus::Regime`] when none is admissible.
 *
 * # Safety
 * `csp` must be a live handle and `out` a valid pointer.
 */
enum LllStatus lll_scheme_construct(const struct LllCsp *csp,
                                    double eta,
                                    double delta,
                                    uint64_t seed,
                                    struct LllScheme **out);

/**
 * The scheme that leaves every value distinguishable.
 *
 * # Safety
 * `csp` must be a live handle and `out` a valid pointer.
 */
enum LllStatus lll_scheme_identity(const struct LllCsp *csp, double eta, struct LllScheme **out);

/**
 * Loads a scheme from its JSON form and checks it against `csp`.
 *
 * # Safety
 * `csp` must be a live handle, `json` a NUL-terminated string and `out` a valid pointer.
 */
enum LllStatus lll_scheme_from_json(const struct LllCsp *csp,
                                    const char *json,
                                    struct LllScheme **out);

/**
 * # Safety
 * `scheme` must be null or a handle not yet freed.
 */
void lll_scheme_free(struct LllScheme *scheme);

/**
 * Finds a satisfying assignment by resampling and writes it to `out[0..n]`.
 *
 * # Safety
 * `csp` must be a live handle and `out` must point to `len` writable values.
 */
enum LllStatus lll_find(const struct LllCsp *csp,
                        double delta,
                        uint64_t seed,
                        uint32_t *out,
                        size_t len);

/**
 * Draws one sample on chain `chain` of `seed` and writes it to `out[0..n]`.
 * `c_t` is the chain-length constant (1 by default).
 *
 * # Safety
 * `csp` and `scheme` must be live handles and `out` must point to `len` writable values.
 */
enum LllStatus lll_sample(const struct LllCsp *csp,
                          const struct LllScheme *scheme,
                          double eps,
                          double c_t,
                          uint64_t seed,
                          uint64_t chain,
                          uint32_t *out,
                          size_t len);

/**
 * Estimates the number of satisfying assignments within a factor `1 + delta`.
 *
 * # Safety
 * `csp` and `scheme` must be live handles and `out` a valid pointer.
 */
enum LllStatus lll_count(const struct LllCsp *csp,
                         const struct LllScheme *scheme,
                         double delta,
                         uint64_t seed,
                         double *out);

/**
 * Writes the admissibility report of `scheme` as a JSON string to `*out`.
 * Release it with [`lll_string_free`].
 *
 * # Safety
 * `csp` and `scheme` must be live handles and `out` a valid pointer.
 */
enum LllStatus lll_check_projection_json(const struct LllCsp *csp,
                                         const struct LllScheme *scheme,
                                         double eta,
                                         char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void lll_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LLL_SAMPLER_H */
