#ifndef GRSVNET_H
#define GRSVNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum GrsvStatus {
  GRSV_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  GRSV_STATUS_NULL_POINTER = 1,
  /*
   An argument was out of range or inconsistent with another.
   */
  GRSV_STATUS_INVALID_ARGUMENT = 2,
  /*
   Matrix or vector shapes do not agree.
   */
  GRSV_STATUS_DIMENSION = 3,
  /*
   A factorization failed or a value became non-finite.
   */
  GRSV_STATUS_NUMERICAL = 4,
  /*
   A configuration could not be parsed or validated.
   */
  GRSV_STATUS_CONFIG = 5,
  /*
   Reading or writing a file failed.
   */
  GRSV_STATUS_IO = 6,
  /*
   Training stopped at a failing batch.
   */
  GRSV_STATUS_TRAINING = 7,
  /*
   A Rust panic was caught at the boundary.
   */
  GRSV_STATUS_PANIC = 8,
} GrsvStatus;

/*
 Validated experiment configuration.
 */
typedef struct GrsvConfig GrsvConfig;

/*
 Dense row-major matrix.
 */
typedef struct GrsvMatrix GrsvMatrix;

/*
 Trained network with its metrics series.
 */
typedef struct GrsvRun GrsvRun;

/*
 One orthonormal basis per class.
 */
typedef struct GrsvSubspaceSet GrsvSubspaceSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the most recent failed call on this thread; empty after a
 successful call. The pointer stays valid until the next call into this
 library on the same thread.
 */
const char *grsv_last_error(void);

/*
 Copies a `rows × cols` row-major array into a new matrix.

 # Safety
 `data` must be valid for `rows * cols` reads and `out` for one write.
 */
enum GrsvStatus grsv_matrix_new(size_t rows,
                                size_t cols,
                                const double *data,
                                struct GrsvMatrix **out);

/*
 # Safety
 `m` is null or a handle from this library not yet freed.
 */
void grsv_matrix_free(struct GrsvMatrix *m);

/*
 Rows of `m`, or 0 for a null handle.

 # Safety
 `m` is null or a live handle.
 */
size_t grsv_matrix_rows(const struct GrsvMatrix *m);

/*
 Columns of `m`, or 0 for a null handle.

 # Safety
 `m` is null or a live handle.
 */
size_t grsv_matrix_cols(const struct GrsvMatrix *m);

/*
 Copies the entries, row-major, into `out`, which must hold exactly
 `rows * cols` values.

 # Safety
 `m` is a live handle and `out` is valid for `len` writes.
 */
enum GrsvStatus grsv_matrix_copy(const struct GrsvMatrix *m, double *out, size_t len);

/*
 Sum of the singular values of `m`.

 # Safety
 `m` is a live handle and `out` is valid for one write.
 */
enum GrsvStatus grsv_nuclear_norm(const struct GrsvMatrix *m, double *out);

/*
 Canonical subgradient `U₁V₁ᵀ` of the nuclear norm, keeping singular
 values above `trunc · max(1, σ₁)`.

 # Safety
 `m` is a live handle and `out` is valid for one write.
 */
enum GrsvStatus grsv_nuclear_norm_subgradient(const struct GrsvMatrix *m,
                                              double trunc,
                                              struct GrsvMatrix **out);

/*
 OLE loss of the columns of `z` labeled by `labels` (one per column).
 When `grad` is non-null it receives a new matrix holding the
 subgradient with respect to `z`.

 # Safety
 `z` is a live handle, `labels` is valid for `n` reads, `value` for one
 write and `grad` is null or valid for one write.
 */
enum GrsvStatus grsv_ole_loss(const struct GrsvMatrix *z,
                              const size_t *labels,
                              size_t n,
                              double trunc,
                              double *value,
                              struct GrsvMatrix **grad);

/*
 Fits one subspace per class `1..=classes` to the columns of
 `features`, keeping directions with `σᵢ ≥ ratio · σ₁`.

 # Safety
 `features` is a live handle, `labels` is valid for `n` reads and `out`
 for one write.
 */
enum GrsvStatus grsv_subspace_fit(const struct GrsvMatrix *features,
                                  const size_t *labels,
                                  size_t n,
                                  size_t classes,
                                  double ratio,
                                  struct GrsvSubspaceSet **out);

/*
 # Safety
 `s` is null or a handle from this library not yet freed.
 */
void grsv_subspace_free(struct GrsvSubspaceSet *s);

/*
 Number of classes, or 0 for a null handle.

 # Safety
 `s` is null or a live handle.
 */
size_t grsv_subspace_classes(const struct GrsvSubspaceSet *s);

/*
 Dimension of class `class_id`'s subspace.

 # Safety
 `s` is a live handle and `out` is valid for one write.
 */
enum GrsvStatus grsv_subspace_rank(const struct GrsvSubspaceSet *s, size_t class_id, size_t *out);

/*
 Classifies one feature vector. `probs` may be null; otherwise it
 receives one probability per class (`probs_len` must equal the class
 count). `degenerate` (nullable) is set to 1 when every score was zero.

 # Safety
 `s` is a live handle, `z` valid for `len` reads, `label` for one write,
 `probs` null or valid for `probs_len` writes, `degenerate` null or
 valid for one write.
 */
enum GrsvStatus grsv_subspace_predict(const struct GrsvSubspaceSet *s,
                                      const double *z,
                                      size_t len,
                                      double eps,
                                      size_t *label,
                                      double *probs,
                                      size_t probs_len,
                                      int *degenerate);

/*
 Parses and validates a TOML experiment configuration.

 # Safety
 `toml` is a NUL-terminated string and `out` is valid for one write.
 */
enum GrsvStatus grsv_config_from_toml(const char *toml, struct GrsvConfig **out);

/*
 Overrides the epoch count.

 # Safety
 `cfg` is a live handle.
 */
enum GrsvStatus grsv_config_set_epochs(struct GrsvConfig *cfg, size_t epochs);

/*
 # Safety
 `cfg` is null or a handle from this library not yet freed.
 */
void grsv_config_free(struct GrsvConfig *cfg);

/*
 Generates the configured dataset and trains to completion.

 # Safety
 `cfg` is a live handle and `out` is valid for one write.
 */
enum GrsvStatus grsv_run_experiment(const struct GrsvConfig *cfg, struct GrsvRun **out);

/*
 # Safety
 `run` is null or a handle from this library not yet freed.
 */
void grsv_run_free(struct GrsvRun *run);

/*
 Number of recorded epochs, or 0 for a null handle.

 # Safety
 `run` is null or a live handle.
 */
size_t grsv_run_epochs(const struct GrsvRun *run);

/*
 Final training and test accuracy; `test` is NaN when the task has no
 held-out set.

 # Safety
 `run` is a live handle; `train` and `test` are valid for one write.
 */
enum GrsvStatus grsv_run_final_accuracy(const struct GrsvRun *run, double *train, double *test);

/*
 Writes the per-epoch metrics CSV.

 # Safety
 `run` is a live handle and `path` a NUL-terminated string.
 */
enum GrsvStatus grsv_run_write_metrics(const struct GrsvRun *run, const char *path);

/*
 Subspace classifier of a finished ole_grsvnet run, as a new handle;
 null (with status OK) for softmax modes.

 # Safety
 `run` is a live handle and `out` is valid for one write.
 */
enum GrsvStatus grsv_run_subspaces(const struct GrsvRun *run, struct GrsvSubspaceSet **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRSVNET_H */
