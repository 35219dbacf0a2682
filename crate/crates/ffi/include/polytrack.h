#ifndef POLYTRACK_H
#define POLYTRACK_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum PtStatus {
  PT_STATUS_OK = 0,
  PT_STATUS_NULL_POINTER = 1,
  PT_STATUS_INVALID_ARGUMENT = 2,
  PT_STATUS_DOMAIN = 3,
  PT_STATUS_DIMENSION = 4,
  PT_STATUS_IO = 5,
  PT_STATUS_PARSE = 6,
  PT_STATUS_SCHEMA = 7,
  PT_STATUS_INFEASIBLE = 8,
  PT_STATUS_SOLVER = 9,
  PT_STATUS_RELATIVE_DEGREE = 10,
  PT_STATUS_SIMULATION = 11,
  PT_STATUS_BUFFER_TOO_SMALL = 12,
  PT_STATUS_PANIC = 13,
} PtStatus;

typedef enum PtRateMode {
  PT_RATE_MODE_EXPONENTIAL = 0,
  PT_RATE_MODE_PAPER = 1,
} PtRateMode;

typedef enum PtIntegrator {
  PT_INTEGRATOR_RK4 = 0,
  PT_INTEGRATOR_EULER = 1,
} PtIntegrator;

// Cell decomposition with one reference segment per cell.
typedef struct PtEnvironment PtEnvironment;

// Synthesized gains and their certificates.
typedef struct PtGainLibrary PtGainLibrary;

// One simulated run.
typedef struct PtTrajectoryLog PtTrajectoryLog;

typedef struct PtSynthesisOptions {
  double alpha;
  double delta;
  double k_max;
  double time_scale;
  enum PtRateMode mode;
  bool per_axis;
} PtSynthesisOptions;

typedef struct PtSimulationOptions {
  double dt;
  double time_scale;
  double noise_variance;
  uint64_t seed;
  enum PtIntegrator integrator;
} PtSimulationOptions;

typedef struct PtLogSummary {
  uintptr_t records;
  uintptr_t switches;
  double duration;
  double min_h;
  double max_v;
} PtLogSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message of this thread into `buf` (NUL terminated,
// truncated to `len - 1` bytes). Returns the full message length.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
uintptr_t pt_last_error_message(char *buf, uintptr_t len);

// Library version as a static NUL-terminated string.
const char *pt_version(void);

// Bernstein basis of degree `n` at `t`; `out` receives `n + 1` values.
//
// # Safety
// `out` must point to `out_len` writable doubles.
enum PtStatus pt_bernstein_basis(int32_t n, double t, double *out, uintptr_t out_len);

// `q`-th derivative at `t` of the curve with `degree + 1` control points of
// dimension `dim`, stored point after point. `out` receives `dim` values.
//
// # Safety
// `points` must point to `(degree + 1) * dim` doubles and `out` to `dim`.
enum PtStatus pt_bezier_eval(const double *points,
                             uintptr_t dim,
                             int32_t degree_n,
                             double t,
                             uint32_t q,
                             double *out);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum PtStatus pt_environment_load(const char *path, struct PtEnvironment **out);

// # Safety
// `json` must be a NUL-terminated string and `out` writable.
enum PtStatus pt_environment_from_json(const char *json, struct PtEnvironment **out);

// # Safety
// `env` must be null or a handle from this library, freed at most once.
void pt_environment_free(struct PtEnvironment *env);

// # Safety
// `env` must be a live handle, the outputs writable.
enum PtStatus pt_environment_shape(const struct PtEnvironment *env,
                                   uintptr_t *dimension,
                                   uintptr_t *cells);

// Number of validation findings; zero means the environment is usable.
// The findings themselves are left in the last error message.
//
// # Safety
// `env` must be a live handle and `findings` writable.
enum PtStatus pt_environment_validate(const struct PtEnvironment *env, uintptr_t *findings);

struct PtSynthesisOptions pt_synthesis_options_default(void);

// Synthesize a gain for every cell, modeling the agent as a single
// integrator per axis. `options` may be null for the defaults.
//
// # Safety
// `env` must be a live handle, `options` null or valid, `out` writable.
enum PtStatus pt_synthesize(const struct PtEnvironment *env,
                            const struct PtSynthesisOptions *options,
                            struct PtGainLibrary **out);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum PtStatus pt_gain_library_load(const char *path, struct PtGainLibrary **out);

// # Safety
// `library` must be a live handle and `path` a NUL-terminated string.
enum PtStatus pt_gain_library_save(const struct PtGainLibrary *library, const char *path);

// # Safety
// `library` must be null or a handle from this library, freed at most once.
void pt_gain_library_free(struct PtGainLibrary *library);

// # Safety
// `library` must be a live handle and `count` writable.
enum PtStatus pt_gain_library_len(const struct PtGainLibrary *library, uintptr_t *count);

// Certified rate and certificate outcome of entry `index`.
//
// # Safety
// `library` must be a live handle and the outputs writable.
enum PtStatus pt_gain_library_certificate(const struct PtGainLibrary *library,
                                          uintptr_t index,
                                          double *mu,
                                          bool *passed);

struct PtSimulationOptions pt_simulation_options_default(void);

// Simulate from `x0` (length `len`) to the end of the chain. `options`
// may be null for the defaults.
//
// # Safety
// Handles must be live, `x0` must point to `len` doubles, `out` writable.
enum PtStatus pt_simulate(const struct PtEnvironment *env,
                          const struct PtGainLibrary *library,
                          const double *x0,
                          uintptr_t len,
                          const struct PtSimulationOptions *options,
                          struct PtTrajectoryLog **out);

// # Safety
// `log` must be null or a handle from this library, freed at most once.
void pt_log_free(struct PtTrajectoryLog *log);

// # Safety
// `log` must be a live handle and `out` writable.
enum PtStatus pt_log_summary(const struct PtTrajectoryLog *log, struct PtLogSummary *out);

// Final agent state; `out` receives the state dimension worth of values.
//
// # Safety
// `log` must be a live handle and `out` point to `len` writable doubles.
enum PtStatus pt_log_final_state(const struct PtTrajectoryLog *log, double *out, uintptr_t len);

// # Safety
// `log` must be a live handle and `path` a NUL-terminated string.
enum PtStatus pt_log_write_csv(const struct PtTrajectoryLog *log, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLYTRACK_H */
