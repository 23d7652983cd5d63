#ifndef EQUIMETRICS_H
#define EQUIMETRICS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Non-zero means failure.
 */
typedef enum {
  EQM_STATUS_OK = 0,
  EQM_STATUS_NULL_POINTER = 1,
  EQM_STATUS_INVALID_ARGUMENT = 2,
  EQM_STATUS_IO = 3,
  EQM_STATUS_DATA = 4,
  EQM_STATUS_BUFFER_TOO_SMALL = 5,
  EQM_STATUS_OUT_OF_RANGE = 6,
  EQM_STATUS_PANIC = 7,
} EqmStatus;

/**
 * Result of the full analysis pipeline.
 */
typedef struct EqmAnalysis EqmAnalysis;

/**
 * A trained activity classifier.
 */
typedef struct EqmClassifier EqmClassifier;

/**
 * Live ingestion state: feed datagrams, drain ordered samples.
 */
typedef struct EqmIngest EqmIngest;

/**
 * A recorded session loaded from disk.
 */
typedef struct EqmSession EqmSession;

typedef struct {
  uint8_t device_id;
  uint32_t seq;
  uint64_t t_device_us;
  uint8_t flags;
  uint8_t n_samples;
} EqmPacketHeader;

typedef struct {
  int16_t accel[3];
  int16_t gyro[3];
} EqmRawSample;

/**
 * Hamilton quaternion `w + xi + yj + zk`.
 */
typedef struct {
  double w;
  double x;
  double y;
  double z;
} EqmQuat;

/**
 * Sample in physical units on the host clock.
 */
typedef struct {
  uint8_t device_id;
  double t_s;
  /**
   * g
   */
  double accel[3];
  /**
   * degrees per second
   */
  double gyro[3];
} EqmSample;

typedef struct {
  uint64_t packets;
  uint64_t accepted;
  uint64_t duplicates;
  uint64_t late;
  uint64_t malformed;
  uint64_t unknown_device;
  uint64_t samples_emitted;
  uint64_t samples_lost;
} EqmIngestStats;

typedef struct {
  /**
   * Device id of the limb sensor (0 LF, 1 RF, 2 LH, 3 RH).
   */
  uint8_t limb;
  /**
   * 1 for hoof-on, 0 for hoof-off.
   */
  uint8_t hoof_on;
  double t_s;
} EqmHoofEvent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * call into the library on the same thread.
 */
const char *eqm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *eqm_version(void);

/**
 * Largest encoded packet, bytes.
 */
size_t eqm_max_packet_len(void);

/**
 * Encodes a packet into `out`. `written` receives the encoded length.
 *
 * # Safety
 * `samples` must point to `header.n_samples` values and `out` to `out_cap`
 * writable bytes.
 */
EqmStatus eqm_packet_encode(const EqmPacketHeader *header,
                            const EqmRawSample *samples,
                            uint8_t *out,
                            size_t out_cap,
                            size_t *written);

/**
 * Decodes one datagram. `samples` needs room for `samples_cap` entries;
 * up to 10 are ever written.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes and `samples` to `samples_cap`
 * writable entries.
 */
EqmStatus eqm_packet_decode(const uint8_t *bytes,
                            size_t len,
                            EqmPacketHeader *header,
                            EqmRawSample *samples,
                            size_t samples_cap);

/**
 * `out = a * b`.
 *
 * # Safety
 * All pointers must be valid.
 */
EqmStatus eqm_quat_mul(const EqmQuat *a, const EqmQuat *b, EqmQuat *out);

/**
 * Rotates `v` (3 doubles) by the unit quaternion `q` into `out`.
 *
 * # Safety
 * `v` and `out` must point to 3 doubles.
 */
EqmStatus eqm_quat_rotate(const EqmQuat *q, const double *v, double *out);

EqmIngest *eqm_ingest_new(void);

/**
 * # Safety
 * `h` must come from [`eqm_ingest_new`] and not be used afterwards.
 */
void eqm_ingest_free(EqmIngest *h);

/**
 * Feeds one datagram received at `host_time_s`. Malformed datagrams are
 * counted, not reported as errors.
 *
 * # Safety
 * `h` must be a live handle and `bytes` point to `len` readable bytes.
 */
EqmStatus eqm_ingest_push(EqmIngest *h, double host_time_s, const uint8_t *bytes, size_t len);

/**
 * Releases everything still held in the reorder buffers.
 *
 * # Safety
 * `h` must be a live handle.
 */
EqmStatus eqm_ingest_flush(EqmIngest *h);

/**
 * Moves up to `cap` ready samples into `out`; `n` receives the count.
 *
 * # Safety
 * `h` must be a live handle and `out` point to `cap` writable entries.
 */
EqmStatus eqm_ingest_drain(EqmIngest *h, EqmSample *out, size_t cap, size_t *n);

/**
 * # Safety
 * `h` must be a live handle and `out` valid.
 */
EqmStatus eqm_ingest_stats(const EqmIngest *h, EqmIngestStats *out);

/**
 * # Safety
 * `dir` must be a NUL-terminated string and `out` valid.
 */
EqmStatus eqm_session_load(const char *dir, EqmSession **out);

/**
 * # Safety
 * `h` must come from [`eqm_session_load`] and not be used afterwards.
 */
void eqm_session_free(EqmSession *h);

/**
 * Number of samples across all devices, 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t eqm_session_sample_count(const EqmSession *h);

/**
 * # Safety
 * `h` must be null or a live handle.
 */
double eqm_session_duration_s(const EqmSession *h);

/**
 * Runs the analysis with default thresholds.
 *
 * # Safety
 * `session` must be a live handle and `out` valid.
 */
EqmStatus eqm_analyze(const EqmSession *session, EqmAnalysis **out);

/**
 * # Safety
 * `h` must come from [`eqm_analyze`] and not be used afterwards.
 */
void eqm_analysis_free(EqmAnalysis *h);

/**
 * # Safety
 * `h` must be null or a live handle.
 */
size_t eqm_analysis_event_count(const EqmAnalysis *h);

/**
 * # Safety
 * `h` must be a live handle and `out` valid.
 */
EqmStatus eqm_analysis_event(const EqmAnalysis *h, size_t index, EqmHoofEvent *out);

/**
 * Mean absolute timing error against the session's reference events, ms.
 * Fails with [`EqmStatus::Data`] when the session has no reference events.
 *
 * # Safety
 * `h` must be a live handle and `out` valid.
 */
EqmStatus eqm_analysis_timing_mae_ms(const EqmAnalysis *h, double *out);

/**
 * Mean MMI of one rider placement (device id 4..=9), g.
 *
 * # Safety
 * `h` must be a live handle and `out` valid.
 */
EqmStatus eqm_analysis_mean_mmi(const EqmAnalysis *h, uint8_t device_id, double *out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid.
 */
EqmStatus eqm_classifier_load(const char *path, EqmClassifier **out);

/**
 * # Safety
 * `h` must come from [`eqm_classifier_load`] and not be used afterwards.
 */
void eqm_classifier_free(EqmClassifier *h);

/**
 * Number of classes, 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t eqm_classifier_class_count(const EqmClassifier *h);

/**
 * Evaluates on an annotated session and writes the macro-F1 to `out`.
 *
 * # Safety
 * Handles must be live and `out` valid.
 */
EqmStatus eqm_classifier_macro_f1(const EqmClassifier *h, const EqmSession *session, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EQUIMETRICS_H */
