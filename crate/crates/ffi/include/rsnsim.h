/* C interface for the rsnsim resource-sharing network simulator. */

#ifndef RSNSIM_H
#define RSNSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum RsnStatus {
  RsnStatus_Ok = 0,
  RsnStatus_NullArgument = 1,
  RsnStatus_InvalidUtf8 = 2,
  RsnStatus_ParseError = 3,
  RsnStatus_ValidationFailed = 4,
  RsnStatus_InvalidArgument = 5,
  RsnStatus_RuntimeInvariant = 6,
  RsnStatus_InternalError = 7,
} RsnStatus;

/**
 * Opaque network handle.
 */
typedef struct RsnNetwork RsnNetwork;

/**
 * Opaque policy handle: kernel basis plus the synthesized tables.
 */
typedef struct RsnPolicy RsnPolicy;

/**
 * Simulation parameters for [`rsn_simulate_ergodic`]. `horizon` is in
 * scaled (diffusion) time; the engine multiplies by `r^2`. All primitive
 * distributions are exponential, which requires `sigma_u = 1/alpha` and
 * `sigma_v = 1/beta` in the network description.
 */
typedef struct RsnSimParams {
  double r;
  double c1;
  double c2;
  double kappa;
  double horizon;
  uint64_t seed;
  uint64_t replication;
} RsnSimParams;

/**
 * Version of the underlying library; static string, do not free.
 */
const char *rsn_version(void);

/**
 * Returns the thread-local message for the most recent error, or null when
 * no error has occurred on this thread. The caller owns the returned string.
 */
char *rsn_last_error_message(void);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must be a pointer previously returned by an `rsn_*` function that
 * documents caller ownership, and must not have been freed already.
 */
void rsn_string_free(char *s);

/**
 * Parses a network from TOML text containing a `[network]` block with the
 * inline arrays (see the library documentation for the schema). On success
 * stores a new handle in `out`.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum RsnStatus rsn_network_from_toml(const char *text, struct RsnNetwork **out);

/**
 * # Safety
 * `net` must be a handle from [`rsn_network_from_toml`], not yet freed.
 */
void rsn_network_free(struct RsnNetwork *net);

/**
 * Checks the standing conditions. Returns `Ok` when the network is valid;
 * `ValidationFailed` otherwise, with the rendered report in `report_out`
 * (caller-owned, may be null if the report is not wanted).
 *
 * # Safety
 * `net` must be a live handle; `report_out` may be null.
 */
enum RsnStatus rsn_network_validate(const struct RsnNetwork *net, char **report_out);

/**
 * # Safety
 * `net` must be a live handle.
 */
int32_t rsn_network_resources(const struct RsnNetwork *net);

/**
 * # Safety
 * `net` must be a live handle.
 */
int32_t rsn_network_classes(const struct RsnNetwork *net);

/**
 * Runs the offline policy synthesis for a validated network.
 *
 * # Safety
 * `net` must be a live handle and `out` a valid pointer.
 */
enum RsnStatus rsn_policy_synthesize(const struct RsnNetwork *net, struct RsnPolicy **out);

/**
 * # Safety
 * `policy` must be a handle from [`rsn_policy_synthesize`], not yet freed.
 */
void rsn_policy_free(struct RsnPolicy *policy);

/**
 * `h beta . u` for the cost direction; 0 in the trivial case.
 *
 * # Safety
 * `policy` must be a live handle.
 */
double rsn_policy_lambda(const struct RsnPolicy *policy);

/**
 * Number of patterns in the cost-reduction set `M`.
 *
 * # Safety
 * `policy` must be a live handle.
 */
uintptr_t rsn_policy_m_set_len(const struct RsnPolicy *policy);

/**
 * Serializes the policy tables to TOML (caller-owned string).
 *
 * # Safety
 * `policy` must be a live handle and `out` a valid pointer.
 */
enum RsnStatus rsn_policy_to_toml(const struct RsnPolicy *policy, char **out);

/**
 * Minimal holding cost for workload `w` (length `n_resources`), using the
 * limiting mean-job-size matrix.
 *
 * # Safety
 * `net` and `policy` must be live handles; `w` must point to `w_len`
 * doubles; `out_value` must be valid.
 */
enum RsnStatus rsn_hhat(const struct RsnNetwork *net,
                        const struct RsnPolicy *policy,
                        const double *w,
                        uintptr_t w_len,
                        double *out_value);

/**
 * Optimality-gap measure `dtilde(q)` for a queue vector (length
 * `n_classes`), using the limiting weighting.
 *
 * # Safety
 * Same contract as [`rsn_hhat`] with `q` of length `n_classes`.
 */
enum RsnStatus rsn_dtilde(const struct RsnNetwork *net,
                          const struct RsnPolicy *policy,
                          const double *q,
                          uintptr_t q_len,
                          double *out_value);

/**
 * Simulates one replication under the threshold policy with exponential
 * primitives, starting from empty queues, and reports the ergodic cost
 * `J_E` and the time-averaged instantaneous optimality gap.
 *
 * # Safety
 * Handles must be live; output pointers (either may be null when the value
 * is not wanted, but not both) must be valid.
 */
enum RsnStatus rsn_simulate_ergodic(const struct RsnNetwork *net,
                                    const struct RsnPolicy *policy,
                                    struct RsnSimParams params,
                                    double *out_cost,
                                    double *out_mean_gap);

/**
 * Monte Carlo estimate of the ergodic HGI benchmark for the network.
 *
 * # Safety
 * Handles must be live; `out_value` must be valid; `out_std_error` may be
 * null.
 */
enum RsnStatus rsn_hgi_ergodic(const struct RsnNetwork *net,
                               const struct RsnPolicy *policy,
                               double dt,
                               double horizon,
                               double burn_in,
                               uintptr_t replications,
                               uint64_t seed,
                               double *out_value,
                               double *out_std_error);

/**
 * One-dimensional Skorokhod reflection of `f` (length `len`): writes the
 * reflected path into `phi_out` and the regulator into `reg_out` (either
 * may be null to skip).
 *
 * # Safety
 * `f` must point to `len` doubles; non-null outputs must hold `len`
 * doubles.
 */
enum RsnStatus rsn_skorokhod_1d(const double *f, uintptr_t len, double *phi_out, double *reg_out);

#endif  /* RSNSIM_H */
