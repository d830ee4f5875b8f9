#ifndef RESEXP_H
#define RESEXP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ResexpCode {
  RESEXP_CODE_OK = 0,
  /**
   * The result is the best iterate; the iteration budget ran out.
   */
  RESEXP_CODE_BUDGET_EXHAUSTED = 1,
  /**
   * The method broke down; the result is the last iterate.
   */
  RESEXP_CODE_BREAKDOWN = 2,
  RESEXP_CODE_NULL_POINTER = -1,
  RESEXP_CODE_INVALID_ARGUMENT = -2,
  RESEXP_CODE_DIMENSION_MISMATCH = -3,
  RESEXP_CODE_NUMERICAL = -4,
  RESEXP_CODE_IO = -5,
  RESEXP_CODE_PANIC = -6,
} ResexpCode;

typedef enum ResexpCriterion {
  RESEXP_CRITERION_RESIDUAL = 0,
  RESEXP_CRITERION_GENERALIZED = 1,
  RESEXP_CRITERION_STAGNATION = 2,
} ResexpCriterion;

typedef enum ResexpInner {
  RESEXP_INNER_LU = 0,
  RESEXP_INNER_GMRES = 1,
} ResexpInner;

typedef enum ResexpMethod {
  RESEXP_METHOD_ARNOLDI = 0,
  RESEXP_METHOD_SHIFT_INVERT = 1,
  RESEXP_METHOD_CHEBYSHEV = 2,
  RESEXP_METHOD_RICHARDSON = 3,
  RESEXP_METHOD_KRYLOV_RICHARDSON = 4,
} ResexpMethod;

/**
 * Opaque sparse matrix.
 */
typedef struct ResexpMatrix ResexpMatrix;

/**
 * Solver options; obtain defaults from `resexp_default_options`.
 *
 * Enumerated fields hold the integer values of `ResexpMethod`,
 * `ResexpCriterion` and `ResexpInner`.
 */
typedef struct ResexpOptions {
  int32_t method;
  double tol;
  /**
   * Restart length (Arnoldi) or cycle length (Krylov-Richardson).
   */
  size_t restart;
  size_t max_iter;
  int32_t criterion;
  int32_t inner;
  /**
   * Shift-and-invert parameter; `<= 0` selects `0.1 t`.
   */
  double gamma;
  /**
   * Krylov-Richardson only: build cycles with shift-and-invert.
   */
  bool kr_shift_invert;
  /**
   * Richardson only: sample count of the residual.
   */
  size_t samples;
} ResexpOptions;

typedef struct ResexpStats {
  size_t iterations;
  size_t matvecs;
  size_t inner_work;
  size_t lu_factorizations;
  size_t solves;
  double residual;
} ResexpStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or an empty string.
 *
 * The pointer stays valid until the next `resexp_*` call on the same thread.
 */
const char *resexp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *resexp_version(void);

/**
 * Builds an `n x n` matrix from CSR arrays (copied). Returns NULL on error.
 *
 * # Safety
 * `row_ptr` must point to `n + 1` values; `col_idx` and `values` to
 * `row_ptr[n]` values each.
 */
struct ResexpMatrix *resexp_matrix_from_csr(size_t n,
                                            const size_t *row_ptr,
                                            const size_t *col_idx,
                                            const double *values);

/**
 * The convection-diffusion test operator on an `nx x nx` interior grid.
 */
struct ResexpMatrix *resexp_matrix_conv_diff(size_t nx, double pe);

/**
 * Reads a Matrix Market coordinate file. Returns NULL on error.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
struct ResexpMatrix *resexp_matrix_read_mtx(const char *path);

/**
 * Dimension of the matrix, or 0 for NULL.
 *
 * # Safety
 * `a` must be NULL or a live handle.
 */
size_t resexp_matrix_dim(const struct ResexpMatrix *a);

/**
 * Stored nonzeros, or 0 for NULL.
 *
 * # Safety
 * `a` must be NULL or a live handle.
 */
size_t resexp_matrix_nnz(const struct ResexpMatrix *a);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `a` must be NULL or a handle not yet freed.
 */
void resexp_matrix_free(struct ResexpMatrix *a);

struct ResexpOptions resexp_default_options(void);

/**
 * Computes `out = exp(-t A) v`.
 *
 * `opts` may be NULL for defaults and `stats` may be NULL. On
 * `BudgetExhausted` and `Breakdown`, `out` holds the last iterate.
 *
 * # Safety
 * `a` must be a live handle, `v` and `out` must point to `n` doubles, and
 * `opts` and `stats` must be NULL or valid.
 */
enum ResexpCode resexp_expv(const struct ResexpMatrix *a,
                            const double *v,
                            size_t n,
                            double t,
                            const struct ResexpOptions *opts,
                            double *out,
                            struct ResexpStats *stats);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* RESEXP_H */
