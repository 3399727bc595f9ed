#ifndef GFRAG_H
#define GFRAG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum GfStatus {
  GF_STATUS_OK = 0,
  GF_STATUS_NULL_POINTER = 1,
  GF_STATUS_INVALID_MODEL = 2,
  GF_STATUS_INVALID_ARGUMENT = 3,
  GF_STATUS_OUT_OF_DOMAIN = 4,
  GF_STATUS_WRONG_REGIME = 5,
  GF_STATUS_NOT_SUPERCRITICAL = 6,
  GF_STATUS_NONPOSITIVE_LAMBDA = 7,
  GF_STATUS_TOLERANCE_NOT_MET = 8,
  GF_STATUS_NUMERICAL = 9,
  GF_STATUS_IO = 10,
  GF_STATUS_CONFIG = 11,
  GF_STATUS_PANIC = 12,
  GF_STATUS_BUFFER_TOO_SMALL = 13,
} GfStatus;

typedef enum GfKernel {
  /**
   * Uniform law of `V` on (0, 1); the parameter is ignored.
   */
  GF_KERNEL_UNIFORM = 0,
  /**
   * Binary split at `v0` and `1 - v0`; the parameter is `v0`.
   */
  GF_KERNEL_ATOMIC = 1,
  /**
   * Symmetric Beta(alpha, alpha); the parameter is `alpha`.
   */
  GF_KERNEL_BETA = 2,
} GfKernel;

typedef enum GfRegime {
  GF_REGIME_TRANSIENT = 0,
  GF_REGIME_NULL_RECURRENT = 1,
  GF_REGIME_POSITIVE_RECURRENT = 2,
  GF_REGIME_EXPONENTIALLY_RECURRENT = 3,
} GfRegime;

/**
 * Opaque invariant-measure handle.
 */
typedef struct GfInvariant GfInvariant;

/**
 * Opaque model handle.
 */
typedef struct GfModel GfModel;

/**
 * Opaque scale-function handle.
 */
typedef struct GfScale GfScale;

/**
 * Opaque population-simulator handle.
 */
typedef struct GfSimulator GfSimulator;

/**
 * Opaque semigroup-solution handle.
 */
typedef struct GfSolution GfSolution;

typedef struct GfSpectralProfile {
  double lambda_star;
  double q0;
  double inf_psi_eta;
  double lambda;
  double q_star;
  double mean_drift;
  enum GfRegime regime;
} GfSpectralProfile;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *gf_version(void);

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 */
size_t gf_last_error(char *buf, size_t len);

/**
 * New model. `kernel_param` is `v0` for `Atomic`, `alpha` for `Beta`.
 */
enum GfStatus gf_model_new(double a,
                           double b,
                           double k,
                           double c,
                           enum GfKernel kernel,
                           double kernel_param,
                           struct GfModel **out);

/**
 * New model from the JSON model-config format.
 */
enum GfStatus gf_model_from_json(const char *json, struct GfModel **out);

void gf_model_free(struct GfModel *model);

enum GfStatus gf_spectral_profile(const struct GfModel *model, struct GfSpectralProfile *out);

/**
 * `kappa(q)`.
 */
enum GfStatus gf_cumulant(const struct GfModel *model, double q, double *out);

/**
 * `psi_eta(q) = kappa(q) - kappa(0)`.
 */
enum GfStatus gf_psi_eta(const struct GfModel *model, double q, double *out);

/**
 * Right inverse `Phi(q)` of `psi_eta`.
 */
enum GfStatus gf_phi(const struct GfModel *model, double q, double *out);

/**
 * Closed-form return-time transform `L_{c,c}(q)`; `+inf` below the abscissa.
 */
enum GfStatus gf_return_laplace(const struct GfModel *model, double q, double *out);

enum GfStatus gf_scale_new(const struct GfModel *model, struct GfScale **out);

/**
 * `W(x)` and, if `w_prime` is non-null, `W'(x)`.
 */
enum GfStatus gf_scale_eval(const struct GfScale *scale, double x, double *w, double *w_prime);

void gf_scale_free(struct GfScale *scale);

enum GfStatus gf_invariant_new(const struct GfModel *model, struct GfInvariant **out);

/**
 * Total mass of `m`; `+inf` in the null-recurrent regime.
 */
enum GfStatus gf_invariant_total_mass(const struct GfInvariant *inv, double *out);

/**
 * `<f, nu>` for a test function given by name (`identity`, `indicator:0.5`, ...).
 */
enum GfStatus gf_invariant_expectation(const struct GfInvariant *inv, const char *f, double *out);

void gf_invariant_free(struct GfInvariant *inv);

/**
 * Population simulator from `x0` with snapshots at `times` (increasing).
 * `max_cells == 0` keeps the default cap.
 */
enum GfStatus gf_simulator_new(const struct GfModel *model,
                               double x0,
                               const double *times,
                               size_t n_times,
                               size_t max_cells,
                               struct GfSimulator **out);

/**
 * Run replica `replica` of root seed `seed`. Writes the cell count and the
 * martingale `e^{-(B-k)t} N_t` at each snapshot time into `counts` and
 * `martingale` (each of length `n_times`), and whether the run hit the
 * cell cap into `truncated`. Any output pointer may be null.
 */
enum GfStatus gf_simulator_run(const struct GfSimulator *sim,
                               uint64_t seed,
                               uint64_t replica,
                               uint64_t *counts,
                               double *martingale,
                               size_t n_times,
                               bool *truncated);

void gf_simulator_free(struct GfSimulator *sim);

/**
 * Solve the mean semigroup (or, with `nonlinear`, `u_t[f]`) for the named
 * test function at `times`, with the default grid and tolerance `tol`
 * (`tol <= 0` keeps the default).
 */
enum GfStatus gf_semigroup_solve(const struct GfModel *model,
                                 const char *f,
                                 const double *times,
                                 size_t n_times,
                                 bool nonlinear,
                                 double tol,
                                 struct GfSolution **out);

/**
 * Solution at output-time index `i` and mass `x` (interpolated in `ln x`).
 */
enum GfStatus gf_solution_value(const struct GfSolution *sol, size_t i, double x, double *out);

enum GfStatus gf_solution_error_estimate(const struct GfSolution *sol, double *out);

void gf_solution_free(struct GfSolution *sol);

/**
 * Run an experiment from its JSON config. On success `*out_json` holds the
 * summary record (free it with [`gf_string_free`]) and `*passed` whether
 * every check passed.
 */
enum GfStatus gf_experiment_run(const char *config_json, char **out_json, bool *passed);

void gf_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GFRAG_H */
