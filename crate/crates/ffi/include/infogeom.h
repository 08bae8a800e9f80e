#ifndef INFOGEOM_H
#define INFOGEOM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum IgStatus {
  IG_STATUS_OK = 0,
  // Null pointer, bad UTF-8 or a buffer of the wrong length.
  IG_STATUS_INVALID_ARGUMENT = 1,
  // Model, parameter or configuration rejected.
  IG_STATUS_DOMAIN = 2,
  // A numerical routine failed.
  IG_STATUS_NUMERICAL = 3,
  IG_STATUS_IO = 4,
  // The library panicked; the handle involved should be discarded.
  IG_STATUS_PANIC = 5,
} IgStatus;

// Normalization of the pressure.
typedef enum IgConvention {
  IG_CONVENTION_EIGENVALUE = 0,
  IG_CONVENTION_MATRIX = 1,
  IG_CONVENTION_MATRIX_ENTRYWISE = 2,
} IgConvention;

// Retained Monte-Carlo draws.
typedef struct IgBatch IgBatch;

// A one-cut equilibrium measure.
typedef struct IgEquilibrium IgEquilibrium;

// A validated model.
typedef struct IgModel IgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next call into the library from the same thread.
const char *ig_last_error(void);

// Library version as a static NUL-terminated string.
const char *ig_version(void);

// Parses and validates a model from its JSON description.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a writable pointer.
enum IgStatus ig_model_from_json(const char *json, struct IgModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from [`ig_model_from_json`] and not be used afterwards.
void ig_model_free(struct IgModel *model);

// Number of perturbations, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t ig_model_dim(const struct IgModel *model);

// Matrix size `n`, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t ig_model_size(const struct IgModel *model);

// Exact pressure at `theta`.
//
// # Safety
// `theta` must hold `theta_len` doubles; `out` must be writable.
enum IgStatus ig_pressure(const struct IgModel *model,
                          const double *theta,
                          size_t theta_len,
                          enum IgConvention convention,
                          double *out);

// Exact Fisher metric at `theta`, written row-major into `out`, which must
// hold `dim * dim` doubles.
//
// # Safety
// `theta` must hold `theta_len` doubles; `out` must hold `out_len` doubles.
enum IgStatus ig_metric(const struct IgModel *model,
                        const double *theta,
                        size_t theta_len,
                        double *out,
                        size_t out_len);

// Solves for the one-cut equilibrium measure of the potential with ascending
// coefficients `coeffs`.
//
// # Safety
// `coeffs` must hold `len` doubles; `out` must be writable.
enum IgStatus ig_solve_equilibrium(const double *coeffs, size_t len, struct IgEquilibrium **out);

// Support endpoints `[a, b]`.
//
// # Safety
// `eq` must be a live handle; `a` and `b` must be writable.
enum IgStatus ig_equilibrium_support(const struct IgEquilibrium *eq, double *a, double *b);

// Density at `x`; zero outside the support, NaN for a null handle.
//
// # Safety
// `eq` must be null or a live handle.
double ig_equilibrium_density(const struct IgEquilibrium *eq, double x);

// Releases an equilibrium measure. Null is ignored.
//
// # Safety
// `eq` must come from [`ig_solve_equilibrium`] and not be used afterwards.
void ig_equilibrium_free(struct IgEquilibrium *eq);

// Runs the Metropolis sampler with default burn-in and proposal scale.
//
// # Safety
// `theta` must hold `theta_len` doubles; `out` must be writable.
enum IgStatus ig_sample(const struct IgModel *model,
                        const double *theta,
                        size_t theta_len,
                        size_t chains,
                        size_t steps,
                        uint64_t seed,
                        struct IgBatch **out);

// Number of retained draws, or 0 for a null handle.
//
// # Safety
// `batch` must be null or a live handle.
size_t ig_batch_len(const struct IgBatch *batch);

// Monte-Carlo Fisher metric and its standard errors, row-major. Both
// buffers must hold `dim * dim` doubles; `stderr_out` may be null.
//
// # Safety
// `value_out` (and `stderr_out` when non-null) must hold `len` doubles.
enum IgStatus ig_batch_metric(const struct IgBatch *batch,
                              double *value_out,
                              double *stderr_out,
                              size_t len);

// Releases a batch. Null is ignored.
//
// # Safety
// `batch` must come from [`ig_sample`] and not be used afterwards.
void ig_batch_free(struct IgBatch *batch);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INFOGEOM_H */
