#ifndef LDP_NUMERIC_H
#define LDP_NUMERIC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LdpStatus {
  LDP_STATUS_OK = 0,
  LDP_STATUS_NULL_POINTER = 1,
  LDP_STATUS_INVALID_BUDGET = 2,
  LDP_STATUS_INPUT_OUT_OF_RANGE = 3,
  LDP_STATUS_INVALID_ARGUMENT = 4,
  LDP_STATUS_NOT_DISCRETIZABLE = 5,
  LDP_STATUS_DIMENSION_MISMATCH = 6,
  // A solver failed or the library panicked.
  LDP_STATUS_INTERNAL = 7,
} LdpStatus;

typedef enum LdpMechanismKind {
  LDP_MECHANISM_KIND_LAPLACE = 0,
  LDP_MECHANISM_KIND_DUCHI = 1,
  LDP_MECHANISM_KIND_PM = 2,
  LDP_MECHANISM_KIND_PM_OPT = 3,
  LDP_MECHANISM_KIND_PM_SUB = 4,
  LDP_MECHANISM_KIND_THREE_OUTPUTS = 5,
  LDP_MECHANISM_KIND_HM = 6,
  LDP_MECHANISM_KIND_HM_TP = 7,
} LdpMechanismKind;

// Mechanism with its constants solved for one budget.
typedef struct LdpMechanism LdpMechanism;

// Seeded random stream.
typedef struct LdpStream LdpStream;

// Derived constants for one budget.
typedef struct LdpParams {
  double epsilon;
  // Probability of the zero output at input 0.
  double three_outputs_a;
  double three_outputs_b;
  // Magnitude of the nonzero outputs.
  double three_outputs_c;
  double pm_opt_t;
  double pm_sub_t;
  // Probability that the hybrid uses its piecewise branch.
  double hm_tp_beta;
  double hm_q;
} LdpParams;

typedef struct LdpSamplingPlan {
  size_t d;
  size_t k;
  double per_coord_epsilon;
} LdpSamplingPlan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, empty after a success.
// Valid until the next call into this library on the same thread.
const char *ldp_last_error_message(void);

// Returns null only on allocation failure.
struct LdpStream *ldp_stream_new(uint64_t seed);

// # Safety
// `stream` is null or came from [`ldp_stream_new`] and was not freed.
void ldp_stream_free(struct LdpStream *stream);

// Words drawn so far, or 0 for a null stream.
//
// # Safety
// `stream` is null or a live handle.
uint64_t ldp_stream_position(const struct LdpStream *stream);

// # Safety
// `out` is null or writable.
enum LdpStatus ldp_mechanism_new(enum LdpMechanismKind kind,
                                 double epsilon,
                                 struct LdpMechanism **out);

// # Safety
// `mechanism` is null or came from [`ldp_mechanism_new`] and was not freed.
void ldp_mechanism_free(struct LdpMechanism *mechanism);

// # Safety
// Handles are live; `out` is writable.
enum LdpStatus ldp_mechanism_perturb(const struct LdpMechanism *mechanism,
                                     double x,
                                     struct LdpStream *stream,
                                     double *out);

// Perturbs, then rounds onto the `2m + 1` atoms of the output range.
//
// # Safety
// Handles are live; `out` is writable.
enum LdpStatus ldp_mechanism_perturb_discrete(const struct LdpMechanism *mechanism,
                                              double x,
                                              uint32_t m,
                                              struct LdpStream *stream,
                                              double *out);

// Output variance at input `x`.
//
// # Safety
// `mechanism` is live; `out` is writable.
enum LdpStatus ldp_mechanism_variance(const struct LdpMechanism *mechanism, double x, double *out);

// # Safety
// `out` is writable.
enum LdpStatus ldp_worst_case_variance(enum LdpMechanismKind kind, double epsilon, double *out);

// # Safety
// `out` is writable.
enum LdpStatus ldp_params(double epsilon, struct LdpParams *out);

// # Safety
// `out` is writable.
enum LdpStatus ldp_choose_k(size_t d, double epsilon, struct LdpSamplingPlan *out);

// Perturbs a `d`-dimensional tuple; `grid_m = 0` skips rounding.
// Unsampled coordinates of `out` are set to 0.
//
// # Safety
// `x` and `out` each point to `d` doubles; `stream` is live.
enum LdpStatus ldp_perturb_tuple(enum LdpMechanismKind kind,
                                 double epsilon,
                                 const double *x,
                                 size_t d,
                                 uint32_t grid_m,
                                 struct LdpStream *stream,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LDP_NUMERIC_H */
