#ifndef IQVIP_H
#define IQVIP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>

/**
 * Result code of every call.
 */
typedef enum IqvipStatus {
  IQVIP_STATUS_OK = 0,
  IQVIP_STATUS_NULL_POINTER = 1,
  IQVIP_STATUS_INVALID_ARGUMENT = 2,
  IQVIP_STATUS_DIMENSION_MISMATCH = 3,
  IQVIP_STATUS_NON_FINITE = 4,
  IQVIP_STATUS_DIVERGED = 5,
  IQVIP_STATUS_INFEASIBLE = 6,
  IQVIP_STATUS_PARSE = 7,
  IQVIP_STATUS_IO = 8,
  IQVIP_STATUS_BUFFER_TOO_SMALL = 9,
  IQVIP_STATUS_NOT_AVAILABLE = 10,
  IQVIP_STATUS_PANIC = 11,
} IqvipStatus;

typedef enum IqvipVariant {
  IQVIP_VARIANT_GENERAL = 0,
  IQVIP_VARIANT_INERTIAL = 1,
  IQVIP_VARIANT_FIRST_ORDER = 2,
} IqvipVariant;

typedef enum IqvipStopReason {
  IQVIP_STOP_REASON_RESIDUAL = 0,
  IQVIP_STOP_REASON_ERROR = 1,
  IQVIP_STOP_REASON_MAX_ITER = 2,
} IqvipStopReason;

/**
 * Opaque traffic network handle.
 */
typedef struct IqvipNetworkHandle IqvipNetworkHandle;

/**
 * Opaque problem handle.
 */
typedef struct IqvipProblemHandle IqvipProblemHandle;

/**
 * Opaque iteration trace handle.
 */
typedef struct IqvipTraceHandle IqvipTraceHandle;

/**
 * Convergence constants of a problem.
 */
typedef struct IqvipConstants {
  double lipschitz;
  double eta;
  double rho;
  double mu;
  double theta;
  double theta1;
  double existence_margin;
} IqvipConstants;

typedef struct IqvipStepCertificate {
  double sigma;
  double tau;
  double tau_max;
  bool discrete_ok;
  bool continuous_ok;
} IqvipStepCertificate;

/**
 * Solver settings. `h` is read by the general variant only; `sigma` is
 * ignored by the first-order variant. Nonpositive stop tolerances disable
 * the rule.
 */
typedef struct IqvipSolverParams {
  enum IqvipVariant variant;
  double sigma;
  double tau;
  double h;
  size_t max_iter;
  double stop_residual;
  double stop_error;
} IqvipSolverParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *iqvip_version(void);

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *iqvip_last_error(void);

enum IqvipStatus iqvip_compute_constants(double lipschitz,
                                         double eta,
                                         double rho,
                                         double mu,
                                         struct IqvipConstants *out);

/**
 * Discrete and continuous step conditions for the pair `(theta, theta1)`.
 * `continuous_ok` is false whenever `tau <= 1`.
 */
enum IqvipStatus iqvip_check_discrete(double theta,
                                      double theta1,
                                      double sigma,
                                      double tau,
                                      struct IqvipStepCertificate *out);

/**
 * The built-in two-dimensional example with solution `(0, 0)`.
 */
enum IqvipStatus iqvip_problem_example51(struct IqvipProblemHandle **out);

/**
 * Builds an affine problem from a JSON document (`matrix`, `offset`,
 * `lipschitz`, `eta`, `mu`, `family`, `solution`).
 */
enum IqvipStatus iqvip_problem_from_json(const char *json, struct IqvipProblemHandle **out);

/**
 * Releases a problem; null is ignored.
 *
 * # Safety
 * The pointer must be null or a live handle from this library, released once.
 */
void iqvip_problem_free(struct IqvipProblemHandle *problem);

/**
 * Dimension of the problem, or 0 for null.
 */
size_t iqvip_problem_dim(const struct IqvipProblemHandle *problem);

/**
 * Constants of the problem; `NotAvailable` when the map declares none.
 */
enum IqvipStatus iqvip_problem_constants(const struct IqvipProblemHandle *problem,
                                         struct IqvipConstants *out);

/**
 * Writes `B(x)` to `out`.
 */
enum IqvipStatus iqvip_problem_natural_map(const struct IqvipProblemHandle *problem,
                                           const double *x,
                                           size_t len,
                                           double *out,
                                           size_t out_len);

/**
 * Writes `‖B(x)‖` to `out`.
 */
enum IqvipStatus iqvip_problem_residual(const struct IqvipProblemHandle *problem,
                                        const double *x,
                                        size_t len,
                                        double *out);

/**
 * Runs the solver from `x0` (with `x_{-1} = x0`). On `Diverged` the partial
 * trace is still stored in `out` and must be freed.
 */
enum IqvipStatus iqvip_solve(const struct IqvipProblemHandle *problem,
                             const struct IqvipSolverParams *params,
                             const double *x0,
                             size_t len,
                             struct IqvipTraceHandle **out);

/**
 * Releases a trace; null is ignored.
 *
 * # Safety
 * The pointer must be null or a live handle from this library, released once.
 */
void iqvip_trace_free(struct IqvipTraceHandle *trace);

/**
 * Number of recorded iterates (steps used plus one), or 0 for null.
 */
size_t iqvip_trace_len(const struct IqvipTraceHandle *trace);

size_t iqvip_trace_steps_used(const struct IqvipTraceHandle *trace);

enum IqvipStatus iqvip_trace_stop_reason(const struct IqvipTraceHandle *trace,
                                         enum IqvipStopReason *out);

/**
 * Copies iterate `index` into `out`.
 */
enum IqvipStatus iqvip_trace_point(const struct IqvipTraceHandle *trace,
                                   size_t index,
                                   double *out,
                                   size_t out_len);

enum IqvipStatus iqvip_trace_residual(const struct IqvipTraceHandle *trace,
                                      size_t index,
                                      double *out);

/**
 * `‖x_n - x*‖`; `NotAvailable` when the problem has no known solution.
 */
enum IqvipStatus iqvip_trace_error(const struct IqvipTraceHandle *trace, size_t index, double *out);

/**
 * Fitted linear rate `q` and its `r²` over the trailing `tail_fraction`.
 */
enum IqvipStatus iqvip_trace_linear_rate(const struct IqvipTraceHandle *trace,
                                         double tail_fraction,
                                         double *q,
                                         double *r_squared);

/**
 * The shipped synthetic four-bridge network.
 */
enum IqvipStatus iqvip_network_traffic_demo(struct IqvipNetworkHandle **out);

/**
 * Parses a network document (`nodes`, `links`, `od`, `controlled`).
 */
enum IqvipStatus iqvip_network_from_json(const char *json, struct IqvipNetworkHandle **out);

/**
 * Releases a network; null is ignored.
 *
 * # Safety
 * The pointer must be null or a live handle from this library, released once.
 */
void iqvip_network_free(struct IqvipNetworkHandle *net);

/**
 * Number of tolled links, or 0 for null.
 */
size_t iqvip_network_controlled_count(const struct IqvipNetworkHandle *net);

/**
 * Equilibrium flows on the tolled links under `tolls`, to relative gap
 * `gap_tol` (nonpositive selects the default).
 */
enum IqvipStatus iqvip_flow_map(const struct IqvipNetworkHandle *net,
                                const double *tolls,
                                size_t len,
                                double gap_tol,
                                double *out,
                                size_t out_len);

/**
 * Toll iteration from zero tolls. Trace points are toll vectors and
 * residuals are `‖P_psi(x)(V(x) + mu x) - V(x)‖`.
 */
enum IqvipStatus iqvip_solve_tolls(const struct IqvipNetworkHandle *net,
                                   double mu,
                                   const struct IqvipSolverParams *params,
                                   double gap_tol,
                                   struct IqvipTraceHandle **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IQVIP_H */
