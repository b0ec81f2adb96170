#ifndef MTAD_H
#define MTAD_H

/* Generated by cbindgen from the mtad-ffi crate. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MtadDetector {
  MtadDetector_Knn = 0,
  MtadDetector_Lof = 1,
  MtadDetector_Pca = 2,
  MtadDetector_IForest = 3,
  MtadDetector_Loda = 4,
} MtadDetector;

/**
 * Metrics readable from an evaluation handle.
 */
typedef enum MtadMetric {
  MtadMetric_F1 = 0,
  MtadMetric_F1Adjusted = 1,
  MtadMetric_F1Search = 2,
  MtadMetric_F1SearchAdjusted = 3,
  MtadMetric_Auc = 4,
  MtadMetric_ThetaEvt = 5,
  MtadMetric_ThetaSearch = 6,
  MtadMetric_SalienceRaw = 7,
  MtadMetric_Delay = 8,
} MtadMetric;

/**
 * Outcome of every API call. Anything but `Ok` leaves a message in
 * `mtad_last_error`.
 */
typedef enum MtadStatus {
  MtadStatus_Ok = 0,
  MtadStatus_NullPointer = 1,
  MtadStatus_LengthMismatch = 2,
  MtadStatus_DegenerateLabels = 3,
  MtadStatus_InsufficientTail = 4,
  MtadStatus_InvalidArgument = 5,
  /**
   * The evaluation exists but this metric has no value (see last error for
   * the reason code).
   */
  MtadStatus_Unavailable = 6,
  MtadStatus_Internal = 7,
} MtadStatus;

typedef enum MtadStrategy {
  MtadStrategy_Evt = 0,
  MtadStrategy_Search = 1,
  MtadStrategy_Fixed = 2,
} MtadStrategy;

/**
 * Opaque evaluation result; read with `mtad_evaluation_metric`, release with
 * `mtad_evaluation_free`.
 */
typedef struct MtadEvaluation MtadEvaluation;

/**
 * Per-detector knobs. Only the fields for the chosen detector are read:
 * `k` (knn, lof), `eps` (pca), `trees` and `subsample` (iforest, 0 picks
 * min(256, n)), `projections` and `bins` (loda, 0 picks the Sturges count).
 */
typedef struct MtadDetectorParams {
  uintptr_t k;
  double eps;
  uintptr_t trees;
  uintptr_t subsample;
  uintptr_t projections;
  uintptr_t bins;
} MtadDetectorParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *mtad_last_error(void);

/**
 * Library version as a static null-terminated string.
 */
const char *mtad_version(void);

/**
 * Evaluates a raw score series against 0/1 labels and hands back an opaque
 * result. `fixed_theta` is read only when `strategy` is `Fixed`; pass the
 * defaults 1e-3 and 0.98 for the EVT knobs unless you have reason not to.
 *
 * # Safety
 * `scores` and `labels` must point to `len` readable elements and `out` to a
 * writable pointer slot.
 */
enum MtadStatus mtad_evaluate_scores(const double *scores,
                                     const uint8_t *labels,
                                     uintptr_t len,
                                     enum MtadStrategy strategy,
                                     double risk_q,
                                     double init_quantile,
                                     double fixed_theta,
                                     struct MtadEvaluation **out);

/**
 * Reads one metric from an evaluation. Returns `Unavailable` when the cell
 * carries a reason code instead of a number.
 *
 * # Safety
 * `eval` must come from `mtad_evaluate_scores` and not yet be freed; `out`
 * must be writable.
 */
enum MtadStatus mtad_evaluation_metric(const struct MtadEvaluation *eval,
                                       enum MtadMetric metric,
                                       double *out);

/**
 * Releases an evaluation handle. Null is a no-op.
 *
 * # Safety
 * `eval` must be null or a handle from `mtad_evaluate_scores` that has not
 * been freed already.
 */
void mtad_evaluation_free(struct MtadEvaluation *eval);

/**
 * Fills `out` with the stock parameters of a detector.
 *
 * # Safety
 * `out` must be writable.
 */
enum MtadStatus mtad_detector_params_default(enum MtadDetector detector,
                                             struct MtadDetectorParams *out);

/**
 * Fits a detector on a row-major train buffer and scores a row-major test
 * buffer, writing `test_rows` raw anomaly scores to `out_scores`.
 *
 * # Safety
 * `train` must hold `train_rows * n_kpis` readable doubles, `test` must hold
 * `test_rows * n_kpis`, and `out_scores` must have room for `test_rows`
 * doubles. `params` must be non-null.
 */
enum MtadStatus mtad_detect(enum MtadDetector detector,
                            const struct MtadDetectorParams *params,
                            uint64_t seed,
                            const double *train,
                            uintptr_t train_rows,
                            const double *test,
                            uintptr_t test_rows,
                            uintptr_t n_kpis,
                            double *out_scores);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MTAD_H */
