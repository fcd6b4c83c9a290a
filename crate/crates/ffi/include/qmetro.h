#ifndef QMETRO_H
#define QMETRO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QmStatus {
  QM_STATUS_OK = 0,
  QM_STATUS_NULL_POINTER = 1,
  QM_STATUS_INVALID_ARGUMENT = 2,
  QM_STATUS_NUMERICAL = 3,
  QM_STATUS_DEGENERATE_STEADY_STATE = 4,
  QM_STATUS_INTERNAL = 5,
  QM_STATUS_PANIC = 6,
} QmStatus;

typedef enum QmInteraction {
  QM_INTERACTION_XX = 0,
  QM_INTERACTION_XX_PLUS_ZX = 1,
  QM_INTERACTION_ZX = 2,
  QM_INTERACTION_XZ = 3,
} QmInteraction;

typedef enum QmTarget {
  QM_TARGET_TEMPERATURE = 0,
  QM_TARGET_ANCILLA_FREQUENCY = 1,
  QM_TARGET_BATH_COUPLING = 2,
} QmTarget;

typedef enum QmSubsystem {
  QM_SUBSYSTEM_PROBE = 0,
  QM_SUBSYSTEM_ANCILLA = 1,
  QM_SUBSYSTEM_FULL = 2,
} QmSubsystem;

/**
 * Parameters plus the probe and ancilla initial states.
 */
typedef struct QmSystem QmSystem;

typedef struct QmParams {
  double omega_p;
  double omega_a;
  double g;
  double gamma;
  double temperature;
  enum QmInteraction interaction;
} QmParams;

typedef struct QmClosedForm {
  double delta_p;
  double f_t;
  double f_wa;
  double f_gamma;
} QmClosedForm;

typedef struct QmSaturation {
  double saturation;
  double horizon;
  double last_decade_change;
  bool saturated;
} QmSaturation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *qm_version(void);

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length excluding the NUL,
 * or 0 when the last call succeeded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t qm_last_error_message(char *buf, size_t len);

/**
 * Validate `params` and create a system with the probe in `|g>` and the
 * ancilla in `|e>`.
 *
 * # Safety
 * `params` must point to a valid `QmParams`; `out` to writable storage for a
 * handle, which must later be released with `qm_system_free`.
 */
enum QmStatus qm_system_new(const struct QmParams *params, struct QmSystem **out);

/**
 * # Safety
 * `handle` must be null or a handle from `qm_system_new` not yet freed.
 */
void qm_system_free(struct QmSystem *handle);

/**
 * Set the initial probe and ancilla states from Bloch vectors (`|r| <= 1`).
 *
 * # Safety
 * `handle` must be a live handle; `probe` and `ancilla` must each point to
 * three readable doubles.
 */
enum QmStatus qm_system_set_initial_state(struct QmSystem *handle,
                                          const double *probe,
                                          const double *ancilla);

/**
 * Closed-form stationary splitting and probe QFIs (XX only).
 *
 * # Safety
 * `handle` must be a live handle and `out` writable.
 */
enum QmStatus qm_steady_closed_form(const struct QmSystem *handle, struct QmClosedForm *out);

/**
 * Probe QFI of the numerically computed stationary state.
 *
 * # Safety
 * `handle` must be a live handle and `out` writable.
 */
enum QmStatus qm_steady_probe_qfi(const struct QmSystem *handle, enum QmTarget target, double *out);

/**
 * QFI of one subsystem at each of `len` sample times (strictly increasing,
 * starting at 0), written to `out`.
 *
 * # Safety
 * `handle` must be a live handle; `times` must point to `len` readable and
 * `out` to `len` writable doubles.
 */
enum QmStatus qm_qfi_curve(const struct QmSystem *handle,
                           enum QmTarget target,
                           enum QmSubsystem subsystem,
                           const double *times,
                           size_t len,
                           double *out);

/**
 * Trace distance `D(t)` of the `|+>, |->` probe pair and the cumulative
 * backflow `N(t)` on the given times; the system's ancilla state is used.
 *
 * # Safety
 * `handle` must be a live handle; `times` must point to `len` readable and
 * `distance`, `n_cumulative` to `len` writable doubles each.
 */
enum QmStatus qm_backflow(const struct QmSystem *handle,
                          const double *times,
                          size_t len,
                          double *distance,
                          double *n_cumulative);

/**
 * Saturated backflow with the default step and horizon schedule.
 *
 * # Safety
 * `handle` must be a live handle and `out` writable.
 */
enum QmStatus qm_backflow_saturation(const struct QmSystem *handle, struct QmSaturation *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QMETRO_H */
