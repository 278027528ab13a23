/* C interface to the profmon library. Every call returns a pm_status; on
 * failure pm_last_error() holds a message for the calling thread. Strings
 * handed out through char** must be released with pm_string_free. */
#ifndef PROFMON_H
#define PROFMON_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  define PM_API __declspec(dllexport)
#elif defined(__GNUC__)
#  define PM_API __attribute__((visibility("default")))
#else
#  define PM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pm_status {
  PM_OK = 0,
  PM_ERR_INVALID_INPUT = 1,
  PM_ERR_INVALID_STATE = 2,
  PM_ERR_NO_SOLUTION = 3,
  PM_ERR_CALIBRATION_FAILED = 4,
  PM_ERR_IO = 5,
  PM_ERR_PARSE = 6,
  PM_ERR_INTERNAL = 7
} pm_status;

typedef struct pm_batch pm_batch;
typedef struct pm_monitor pm_monitor;

typedef struct pm_step_result {
  int64_t t;
  double xi;
  int alarmed;
  int64_t argmax_j; /* time index of the regressor attaining xi */
} pm_step_result;

typedef void (*pm_progress_fn)(const char* message, void* user);

PM_API const char* pm_version(void);
PM_API const char* pm_last_error(void);
PM_API const char* pm_status_name(pm_status status);
PM_API void pm_string_free(char* s);

/* batches */
PM_API pm_status pm_batch_create(int64_t t, size_t n, size_t p, const double* x_row_major,
                                 const double* y, pm_batch** out);
PM_API pm_status pm_batch_read_csv(const char* path, int64_t t, pm_batch** out);
/* Multi-time stream file; *out receives a malloc'd array of *count handles
 * that the caller destroys one by one and then frees with pm_batch_array_free. */
PM_API pm_status pm_batch_read_stream(const char* path, pm_batch*** out, size_t* count);
PM_API void pm_batch_array_free(pm_batch** arr);
PM_API size_t pm_batch_n(const pm_batch* b);
PM_API size_t pm_batch_p(const pm_batch* b);
PM_API int64_t pm_batch_time(const pm_batch* b);
PM_API void pm_batch_destroy(pm_batch* b);

/* monitor state; fit_json may be NULL (tree defaults) */
PM_API pm_status pm_monitor_create(const pm_batch* const* historical, size_t m, const char* fit_json,
                                   double ucl, pm_monitor** out);
PM_API pm_status pm_monitor_step(pm_monitor* mon, const pm_batch* batch, pm_step_result* out);
PM_API pm_status pm_monitor_restart(pm_monitor* mon);
PM_API pm_status pm_monitor_set_ucl(pm_monitor* mon, double ucl);
PM_API double pm_monitor_ucl(const pm_monitor* mon);
PM_API int64_t pm_monitor_current_t(const pm_monitor* mon);
PM_API size_t pm_monitor_history_len(const pm_monitor* mon);
PM_API pm_status pm_monitor_to_json(const pm_monitor* mon, char** out);
PM_API pm_status pm_monitor_from_json(const char* json, pm_monitor** out);
PM_API pm_status pm_monitor_save(const pm_monitor* mon, const char* path);
PM_API pm_status pm_monitor_load(const char* path, pm_monitor** out);
PM_API void pm_monitor_destroy(pm_monitor* mon);

/* Bootstrap UCL search over the monitor's historical prefix, which must have
 * been built from `historical` (same order). On success the monitor's UCL is
 * set. *result_json is filled on success and on PM_ERR_CALIBRATION_FAILED
 * (then it carries the explored curve). */
PM_API pm_status pm_calibrate(pm_monitor* mon, const pm_batch* const* historical, size_t m,
                              const char* config_json, char** result_json);

/* Runs a study manifest and writes trials.csv, aggregate.csv, ucl.csv and
 * summary.json into out_dir. A non-NULL seed_override replaces every seed. */
PM_API pm_status pm_study_run(const char* manifest_json, const char* out_dir, size_t workers,
                              const uint64_t* seed_override, pm_progress_fn progress, void* user);

/* SNR helpers; names are "linear"/"nonlinear" and "sinusoidal"/"nondifferentiable"/"localized" */
PM_API pm_status pm_snr_solve_lambda(const char* in_control, const char* forcing, double target,
                                     size_t samples, uint64_t seed, double* lambda, double* achieved);
PM_API pm_status pm_snr_localized_a(double target, double volume, double lambda, double* a);
PM_API pm_status pm_snr_estimate(const char* in_control, const char* forcing, double lambda,
                                 double jump, size_t samples, uint64_t seed, double* snr);

#ifdef __cplusplus
}
#endif

#endif
