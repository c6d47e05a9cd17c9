#ifndef CAVITY_LB_H
#define CAVITY_LB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CavityStatus {
  CAVITY_STATUS_OK = 0,
  CAVITY_STATUS_NULL_POINTER = 1,
  CAVITY_STATUS_INVALID_UTF8 = 2,
  CAVITY_STATUS_BUFFER_TOO_SMALL = 3,
  CAVITY_STATUS_PANIC = 4,
  CAVITY_STATUS_INVALID_LAMBDA = 10,
  CAVITY_STATUS_INVALID_POLICY = 11,
  CAVITY_STATUS_INVALID_ARGUMENT = 12,
  CAVITY_STATUS_INVALID_BOUNDARY = 13,
  CAVITY_STATUS_UNSUPPORTED_POLICY = 14,
  CAVITY_STATUS_CONFIG = 15,
  CAVITY_STATUS_NO_ROOT = 20,
  CAVITY_STATUS_NON_CONVERGENCE = 21,
  CAVITY_STATUS_STEP_UNDERFLOW = 22,
  CAVITY_STATUS_INCONSISTENT = 23,
  CAVITY_STATUS_DIVERGENCE = 24,
  CAVITY_STATUS_B_NOT_FOUND = 25,
  CAVITY_STATUS_EXTRAPOLATION_UNSTABLE = 26,
  CAVITY_STATUS_CONSTRUCTION_FAILED = 27,
} CavityStatus;

/**
 * Opaque handle to a solved workload ccdf.
 */
typedef struct CavityCurve CavityCurve;

/**
 * Opaque policy handle.
 */
typedef struct CavityPolicy CavityPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread; empty after a
 * success. The pointer stays valid until the next call on the thread.
 */
const char *cavity_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cavity_version(void);

/**
 * Parses a policy such as `ll:d=2` or `lldk:d=4,k=2`.
 * `spec` must be a NUL-terminated string; `out` must be writable.
 */
enum CavityStatus cavity_policy_parse(const char *spec, struct CavityPolicy **out);

/**
 * `policy` must come from `cavity_policy_parse` and not be used afterwards.
 */
void cavity_policy_free(struct CavityPolicy *policy);

/**
 * Writes the canonical policy string into `buf`. `needed` (if not null)
 * receives the size including the terminator; a short buffer gives
 * `CAVITY_STATUS_BUFFER_TOO_SMALL`.
 * `buf` must hold `len` bytes.
 */
enum CavityStatus cavity_policy_describe(const struct CavityPolicy *policy,
                                         char *buf,
                                         size_t len,
                                         size_t *needed);

enum CavityStatus cavity_t_map(const struct CavityPolicy *policy,
                               double lambda,
                               double u,
                               double *out);

/**
 * Largest fixed point `u_lambda > 1` of `T(u) = u`.
 */
enum CavityStatus cavity_fixed_point(const struct CavityPolicy *policy, double lambda, double *out);

enum CavityStatus cavity_p_idle(const struct CavityPolicy *policy, double lambda, double *out);

/**
 * Mean-field mean waiting time.
 */
enum CavityStatus cavity_mean_waiting(const struct CavityPolicy *policy,
                                      double lambda,
                                      double *out);

/**
 * Closed-form limit of `-E[W] / log(1 - lambda)` as `lambda -> 1`.
 */
enum CavityStatus cavity_heavy_traffic_limit(const struct CavityPolicy *policy, double *out);

/**
 * `grid` must hold `len` doubles.
 */
enum CavityStatus cavity_choose_b(const struct CavityPolicy *policy,
                                  const double *grid,
                                  size_t len,
                                  uint32_t *out);

/**
 * Runs assumption check `id` (1 to 7) on `grid`; `passed` receives 1 or 0.
 * `grid` must hold `len` doubles.
 */
enum CavityStatus cavity_check_assumption(const struct CavityPolicy *policy,
                                          uint8_t id,
                                          const double *grid,
                                          size_t len,
                                          int32_t *passed);

/**
 * Mean queue length of LL(d) applied with probability `p`.
 * `out` must be writable.
 */
enum CavityStatus cavity_lldp_mean_queue(uint32_t d, double p, double lambda, double *out);

/**
 * Solves the cavity equation. A NaN `boundary` selects the policy's
 * default value of `F(0)`.
 */
enum CavityStatus cavity_curve_solve(const struct CavityPolicy *policy,
                                     double lambda,
                                     double boundary,
                                     struct CavityCurve **out);

/**
 * `curve` must come from `cavity_curve_solve` and not be used afterwards.
 */
void cavity_curve_free(struct CavityCurve *curve);

/**
 * `F(w)`; beyond the integration window the certified exponential tail is
 * used.
 */
enum CavityStatus cavity_curve_ccdf(const struct CavityCurve *curve, double w, double *out);

enum CavityStatus cavity_curve_mean_workload(const struct CavityCurve *curve, double *out);

enum CavityStatus cavity_curve_mean_waiting(const struct CavityCurve *curve, double *out);

/**
 * Finite-N simulation; writes the mean waiting time and its standard error.
 */
enum CavityStatus cavity_simulate(const struct CavityPolicy *policy,
                                  double lambda,
                                  size_t n_servers,
                                  double horizon,
                                  uint64_t seed,
                                  size_t replications,
                                  double *mean_wait,
                                  double *stderr);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAVITY_LB_H */
