//! C ABI for the toolkit: evaluate score series against labels and run the
//! built-in detectors over caller-provided buffers. Handles are opaque, every
//! call returns a status code, and `mtad_last_error` carries the detail text
//! for the current thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::slice;

use mtad_core::bench::{evaluate_scores, MetricCell, MetricRow, ThresholdOptions};
use mtad_core::data::{KpiMatrix, LabelVector};
use mtad_core::detectors::{
    BinsSpec, DetectorConfig, DetectorKind, DetectorParams, FittedModel, SubsampleSpec,
};
use mtad_core::thresholding::ThresholdStrategy;
use mtad_core::MtadError;

/// Outcome of every API call. Anything but `Ok` leaves a message in
/// `mtad_last_error`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtadStatus {
    Ok = 0,
    NullPointer = 1,
    LengthMismatch = 2,
    DegenerateLabels = 3,
    InsufficientTail = 4,
    InvalidArgument = 5,
    /// The evaluation exists but this metric has no value (see last error for
    /// the reason code).
    Unavailable = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtadStrategy {
    Evt = 0,
    Search = 1,
    Fixed = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtadDetector {
    Knn = 0,
    Lof = 1,
    Pca = 2,
    IForest = 3,
    Loda = 4,
}

/// Metrics readable from an evaluation handle.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtadMetric {
    F1 = 0,
    F1Adjusted = 1,
    F1Search = 2,
    F1SearchAdjusted = 3,
    Auc = 4,
    ThetaEvt = 5,
    ThetaSearch = 6,
    SalienceRaw = 7,
    Delay = 8,
}

/// Per-detector knobs. Only the fields for the chosen detector are read:
/// `k` (knn, lof), `eps` (pca), `trees` and `subsample` (iforest, 0 picks
/// min(256, n)), `projections` and `bins` (loda, 0 picks the Sturges count).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MtadDetectorParams {
    pub k: usize,
    pub eps: f64,
    pub trees: usize,
    pub subsample: usize,
    pub projections: usize,
    pub bins: usize,
}

/// Opaque evaluation result; read with `mtad_evaluation_metric`, release with
/// `mtad_evaluation_free`.
pub struct MtadEvaluation {
    row: MetricRow,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap();
    });
}

fn fail(status: MtadStatus, message: &str) -> MtadStatus {
    set_last_error(message);
    status
}

fn status_for(err: &MtadError) -> MtadStatus {
    match err {
        MtadError::DimensionMismatch(_) => MtadStatus::LengthMismatch,
        MtadError::DegenerateLabels => MtadStatus::DegenerateLabels,
        MtadError::InsufficientTailData { .. } => MtadStatus::InsufficientTail,
        MtadError::InvalidParam(_) | MtadError::EmptyInput(_) | MtadError::InvalidLabel { .. } => {
            MtadStatus::InvalidArgument
        }
        _ => MtadStatus::Internal,
    }
}

fn fail_with(err: &MtadError) -> MtadStatus {
    fail(status_for(err), &err.to_string())
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mtad_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static null-terminated string.
#[no_mangle]
pub extern "C" fn mtad_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Evaluates a raw score series against 0/1 labels and hands back an opaque
/// result. `fixed_theta` is read only when `strategy` is `Fixed`; pass the
/// defaults 1e-3 and 0.98 for the EVT knobs unless you have reason not to.
///
/// # Safety
/// `scores` and `labels` must point to `len` readable elements and `out` to a
/// writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn mtad_evaluate_scores(
    scores: *const f64,
    labels: *const u8,
    len: usize,
    strategy: MtadStrategy,
    risk_q: f64,
    init_quantile: f64,
    fixed_theta: f64,
    out: *mut *mut MtadEvaluation,
) -> MtadStatus {
    if scores.is_null() || labels.is_null() || out.is_null() {
        return fail(MtadStatus::NullPointer, "scores, labels and out must be non-null");
    }
    if len == 0 {
        return fail(MtadStatus::InvalidArgument, "len must be positive");
    }
    let scores = slice::from_raw_parts(scores, len);
    if let Some(pos) = scores.iter().position(|v| !v.is_finite()) {
        return fail(
            MtadStatus::InvalidArgument,
            &format!("non-finite score at index {pos}"),
        );
    }
    let labels = slice::from_raw_parts(labels, len);
    let labels = match LabelVector::new(labels.to_vec()) {
        Ok(l) => l,
        Err(e) => return fail_with(&e),
    };
    let opts = ThresholdOptions {
        strategy: match strategy {
            MtadStrategy::Evt => ThresholdStrategy::Evt,
            MtadStrategy::Search => ThresholdStrategy::Search,
            MtadStrategy::Fixed => ThresholdStrategy::Fixed,
        },
        risk_q,
        init_quantile,
        fixed_theta: (strategy == MtadStrategy::Fixed).then_some(fixed_theta),
    };
    match evaluate_scores(scores, &labels, &opts) {
        Ok(row) => {
            out.write(Box::into_raw(Box::new(MtadEvaluation { row })));
            MtadStatus::Ok
        }
        Err(e) => fail_with(&e),
    }
}

/// Reads one metric from an evaluation. Returns `Unavailable` when the cell
/// carries a reason code instead of a number.
///
/// # Safety
/// `eval` must come from `mtad_evaluate_scores` and not yet be freed; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn mtad_evaluation_metric(
    eval: *const MtadEvaluation,
    metric: MtadMetric,
    out: *mut f64,
) -> MtadStatus {
    if eval.is_null() || out.is_null() {
        return fail(MtadStatus::NullPointer, "eval and out must be non-null");
    }
    let row = &(*eval).row;
    let cell = match metric {
        MtadMetric::F1 => &row.f1,
        MtadMetric::F1Adjusted => &row.f1_adj,
        MtadMetric::F1Search => &row.f1_search,
        MtadMetric::F1SearchAdjusted => &row.f1_search_adj,
        MtadMetric::Auc => &row.auc,
        MtadMetric::ThetaEvt => &row.theta_evt,
        MtadMetric::ThetaSearch => &row.theta_search,
        MtadMetric::SalienceRaw => &row.salience_raw,
        MtadMetric::Delay => &row.delay,
    };
    match cell {
        MetricCell::Value(v) => {
            out.write(*v);
            MtadStatus::Ok
        }
        MetricCell::Na(reason) => fail(
            MtadStatus::Unavailable,
            &format!("metric unavailable: {reason}"),
        ),
    }
}

/// Releases an evaluation handle. Null is a no-op.
///
/// # Safety
/// `eval` must be null or a handle from `mtad_evaluate_scores` that has not
/// been freed already.
#[no_mangle]
pub unsafe extern "C" fn mtad_evaluation_free(eval: *mut MtadEvaluation) {
    if !eval.is_null() {
        drop(Box::from_raw(eval));
    }
}

/// Fills `out` with the stock parameters of a detector.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mtad_detector_params_default(
    detector: MtadDetector,
    out: *mut MtadDetectorParams,
) -> MtadStatus {
    if out.is_null() {
        return fail(MtadStatus::NullPointer, "out must be non-null");
    }
    let mut params = MtadDetectorParams {
        k: 0,
        eps: 0.0,
        trees: 0,
        subsample: 0,
        projections: 0,
        bins: 0,
    };
    match DetectorParams::default_for(kind_of(detector)) {
        DetectorParams::Knn { k } | DetectorParams::Lof { k } => params.k = k,
        DetectorParams::Pca { eps } => params.eps = eps,
        DetectorParams::IForest { trees, subsample } => {
            params.trees = trees;
            params.subsample = match subsample {
                SubsampleSpec::Auto => 0,
                SubsampleSpec::Fixed(n) => n,
            };
        }
        DetectorParams::Loda { projections, bins } => {
            params.projections = projections;
            params.bins = match bins {
                BinsSpec::Fixed(n) => n,
                _ => 0,
            };
        }
    }
    out.write(params);
    MtadStatus::Ok
}

fn kind_of(detector: MtadDetector) -> DetectorKind {
    match detector {
        MtadDetector::Knn => DetectorKind::Knn,
        MtadDetector::Lof => DetectorKind::Lof,
        MtadDetector::Pca => DetectorKind::Pca,
        MtadDetector::IForest => DetectorKind::IForest,
        MtadDetector::Loda => DetectorKind::Loda,
    }
}

fn params_of(detector: MtadDetector, p: &MtadDetectorParams) -> DetectorParams {
    match detector {
        MtadDetector::Knn => DetectorParams::Knn { k: p.k },
        MtadDetector::Lof => DetectorParams::Lof { k: p.k },
        MtadDetector::Pca => DetectorParams::Pca { eps: p.eps },
        MtadDetector::IForest => DetectorParams::IForest {
            trees: p.trees,
            subsample: if p.subsample == 0 {
                SubsampleSpec::Auto
            } else {
                SubsampleSpec::Fixed(p.subsample)
            },
        },
        MtadDetector::Loda => DetectorParams::Loda {
            projections: p.projections,
            bins: if p.bins == 0 {
                BinsSpec::Sturges
            } else {
                BinsSpec::Fixed(p.bins)
            },
        },
    }
}

fn matrix_from(buf: &[f64], rows: usize, cols: usize, name: &str) -> Result<KpiMatrix, MtadStatus> {
    if let Some(pos) = buf.iter().position(|v| !v.is_finite()) {
        return Err(fail(
            MtadStatus::InvalidArgument,
            &format!("non-finite {name} cell at flat index {pos}"),
        ));
    }
    KpiMatrix::new(buf.to_vec(), rows, cols).map_err(|e| fail_with(&e))
}

/// Fits a detector on a row-major train buffer and scores a row-major test
/// buffer, writing `test_rows` raw anomaly scores to `out_scores`.
///
/// # Safety
/// `train` must hold `train_rows * n_kpis` readable doubles, `test` must hold
/// `test_rows * n_kpis`, and `out_scores` must have room for `test_rows`
/// doubles. `params` must be non-null.
#[no_mangle]
pub unsafe extern "C" fn mtad_detect(
    detector: MtadDetector,
    params: *const MtadDetectorParams,
    seed: u64,
    train: *const f64,
    train_rows: usize,
    test: *const f64,
    test_rows: usize,
    n_kpis: usize,
    out_scores: *mut f64,
) -> MtadStatus {
    if params.is_null() || train.is_null() || test.is_null() || out_scores.is_null() {
        return fail(
            MtadStatus::NullPointer,
            "params, train, test and out_scores must be non-null",
        );
    }
    if train_rows == 0 || test_rows == 0 || n_kpis == 0 {
        return fail(
            MtadStatus::InvalidArgument,
            "train_rows, test_rows and n_kpis must be positive",
        );
    }
    let train = slice::from_raw_parts(train, train_rows * n_kpis);
    let test = slice::from_raw_parts(test, test_rows * n_kpis);
    let train = match matrix_from(train, train_rows, n_kpis, "train") {
        Ok(m) => m,
        Err(status) => return status,
    };
    let test = match matrix_from(test, test_rows, n_kpis, "test") {
        Ok(m) => m,
        Err(status) => return status,
    };
    let config = DetectorConfig::new(params_of(detector, &*params), seed);
    let model = match FittedModel::fit(&config, &train) {
        Ok(m) => m,
        Err(e) => return fail_with(&e),
    };
    match model.score(&test) {
        Ok(series) => {
            slice::from_raw_parts_mut(out_scores, test_rows).copy_from_slice(&series.raw);
            MtadStatus::Ok
        }
        Err(e) => fail_with(&e),
    }
}
