#ifndef PASSIVE_ADMITTANCE_H
#define PASSIVE_ADMITTANCE_H

#include <stddef.h>

typedef enum PadmStatus {
  PADM_STATUS_OK = 0,
  // Null pointer, bad UTF-8, index out of range or short buffer.
  PADM_STATUS_INVALID_ARGUMENT = 1,
  PADM_STATUS_VALIDATION = 2,
  // The run blew up; a partial trace is still returned.
  PADM_STATUS_DIVERGED = 3,
  PADM_STATUS_IO = 4,
  PADM_STATUS_ANALYSIS = 5,
  PADM_STATUS_PANIC = 6,
} PadmStatus;

// A validated scenario.
typedef struct PadmScenario PadmScenario;

// A simulation trace, one sample per control tick.
typedef struct PadmTrace PadmTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// Valid until the next call into this library from the same thread.
const char *padm_last_error(void);

// Library version, a static NUL-terminated string.
const char *padm_version(void);

// Parses scenario TOML. On success `*out` owns a new handle.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum PadmStatus padm_scenario_from_str(const char *text, struct PadmScenario **out);

// # Safety
// `scenario` must be null or a handle from this library, freed once.
void padm_scenario_free(struct PadmScenario *scenario);

// Sets one of `eps`, `K`, `K_P`, `M_n`, `wall.stiffness`. On failure the
// scenario is unchanged.
//
// # Safety
// `scenario` must be a live handle; `param` a NUL-terminated string.
enum PadmStatus padm_scenario_set_param(struct PadmScenario *scenario,
                                        const char *param,
                                        double value);

// Runs the scenario. On `Ok` or `Diverged`, `*out` owns a new trace
// (partial when diverged); otherwise it is null.
//
// # Safety
// `scenario` must be a live handle; `out` must be writable.
enum PadmStatus padm_run(const struct PadmScenario *scenario, struct PadmTrace **out);

// # Safety
// `trace` must be null or a handle from this library, freed once.
void padm_trace_free(struct PadmTrace *trace);

// Number of samples; 0 for a null handle.
//
// # Safety
// `trace` must be null or a live handle.
size_t padm_trace_len(const struct PadmTrace *trace);

// Port dimension; 0 for a null handle.
//
// # Safety
// `trace` must be null or a live handle.
size_t padm_trace_dim(const struct PadmTrace *trace);

// Copies the column named as in the CSV header (`t`, `q[0]`, `E_plant`,
// ...) into `buf`. `*written` receives the sample count; pass a null
// `buf` to query it.
//
// # Safety
// `buf` must hold `cap` doubles or be null; `written` must be writable.
enum PadmStatus padm_trace_column(const struct PadmTrace *trace,
                                  const char *name,
                                  double *buf,
                                  size_t cap,
                                  size_t *written);

// # Safety
// `trace` must be a live handle; `path` a NUL-terminated string.
enum PadmStatus padm_trace_write_csv(const struct PadmTrace *trace, const char *path);

// sup_t |q_n − q| on one axis.
//
// # Safety
// `trace` must be a live handle; `out` must be writable.
enum PadmStatus padm_trace_inf_norm_error(const struct PadmTrace *trace, size_t axis, double *out);

// Empirical L2-gain ratio of the run.
//
// # Safety
// `trace` must be a live handle; `out` must be writable.
enum PadmStatus padm_trace_l2_gain(const struct PadmTrace *trace, double *out);

// Consecutive error ratios (`n − 1` of them, into `ratios`) and the
// log-log slope of error against eps.
//
// # Safety
// `eps` and `err` must hold `n` doubles, `ratios` `n − 1`; `slope` must be
// writable.
enum PadmStatus padm_scaling_fit(const double *eps,
                                 const double *err,
                                 size_t n,
                                 double *ratios,
                                 double *slope);

// Closed-loop q̇/τ_h of the standard controller at complex `s`.
//
// # Safety
// `re` and `im` must be writable.
enum PadmStatus padm_admittance_tf_standard(double m,
                                            double m_n,
                                            double d_n,
                                            double k,
                                            double kp,
                                            double s_re,
                                            double s_im,
                                            double *re,
                                            double *im);

// Closed-loop q̇/τ_h of the passive controller at complex `s`.
//
// # Safety
// `re` and `im` must be writable.
enum PadmStatus padm_admittance_tf_passive(double m,
                                           double m_n,
                                           double d_n,
                                           double k,
                                           double kp,
                                           double s_re,
                                           double s_im,
                                           double *re,
                                           double *im);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PASSIVE_ADMITTANCE_H */
