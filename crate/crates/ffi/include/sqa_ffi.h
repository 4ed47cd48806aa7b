#ifndef SQA_FFI_H
#define SQA_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SqaStatus {
  SQA_STATUS_OK = 0,
  SQA_STATUS_NULL_POINTER = 1,
  SQA_STATUS_INVALID_INPUT = 2,
  SQA_STATUS_DOMAIN = 3,
  SQA_STATUS_RESOURCE_CAP = 4,
  SQA_STATUS_NUMERICAL = 5,
  SQA_STATUS_INTERNAL = 6,
} SqaStatus;

/**
 * Opaque schedule bound to a system.
 */
typedef struct SqaSchedule SqaSchedule;

/**
 * Opaque Trotter system.
 */
typedef struct SqaSystem SqaSystem;

/**
 * Transverse field and Trotter coupling with its first two derivatives.
 */
typedef struct SqaScheduleValue {
  double field;
  double gamma;
  double dgamma;
  double d2gamma;
} SqaScheduleValue;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failing call on this thread; empty after a
 * success. The pointer stays valid until the next call on the same thread.
 */
const char *sqa_last_error_message(void);

/**
 * Builds a system from a problem description such as
 * `{"n_sites":2,"edges":[[1,2,1.0]],"trotter_slices":2,"beta":1.0}`.
 */
enum SqaStatus sqa_system_from_json(const char *json, struct SqaSystem **out);

void sqa_system_free(struct SqaSystem *sys);

/**
 * Number of lattice spins `N * M`.
 */
enum SqaStatus sqa_system_n_spins(const struct SqaSystem *sys, size_t *out);

/**
 * `beta H_0` for `len = N * M` spins of value `±1`, laid out slice-major.
 */
enum SqaStatus sqa_trotter_action(const struct SqaSystem *sys,
                                  const int8_t *spins,
                                  size_t len,
                                  double gamma,
                                  double *out);

/**
 * `gamma = (1/2) ln coth(beta Gamma / M)`.
 */
enum SqaStatus sqa_gamma_from_field(double field, double beta, size_t trotter_slices, double *out);

/**
 * Binds a schedule description such as `{"family":"power_law","c1":1.0,"c2":1.0}`.
 */
enum SqaStatus sqa_schedule_from_json(const struct SqaSystem *sys,
                                      const char *json,
                                      struct SqaSchedule **out);

void sqa_schedule_free(struct SqaSchedule *schedule);

enum SqaStatus sqa_schedule_eval(const struct SqaSchedule *schedule,
                                 double t,
                                 struct SqaScheduleValue *out);

/**
 * Equilibrium distribution at Trotter coupling `gamma` into `out[0..len]`,
 * `len = 2^(N M)`.
 */
enum SqaStatus sqa_boltzmann(const struct SqaSystem *sys, double gamma, double *out, size_t len);

/**
 * Spectral report (gap, derivative norm, bound, adiabatic ratio) at `t` as JSON.
 */
enum SqaStatus sqa_spectral_report_json(const struct SqaSystem *sys,
                                        const struct SqaSchedule *schedule,
                                        double t,
                                        char **out);

/**
 * Master-equation run from the uniform distribution; JSON with the final
 * distribution and distances.
 */
enum SqaStatus sqa_evolve_master_json(const struct SqaSystem *sys,
                                      const struct SqaSchedule *schedule,
                                      double horizon,
                                      char **out);

/**
 * Monte Carlo run; JSON run summary.
 */
enum SqaStatus sqa_sample_json(const struct SqaSystem *sys,
                               const struct SqaSchedule *schedule,
                               double horizon,
                               size_t replicas,
                               uint64_t seed,
                               char **out);

/**
 * Schedule-condition report as JSON; `options_json` may be null for defaults.
 */
enum SqaStatus sqa_schedule_check_json(const struct SqaSystem *sys,
                                       const struct SqaSchedule *schedule,
                                       const char *options_json,
                                       char **out);

/**
 * Releases a string returned by this library.
 */
void sqa_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SQA_FFI_H */
