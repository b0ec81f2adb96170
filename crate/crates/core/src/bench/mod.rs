//! Benchmark orchestration: runs detectors (or ingests external score files)
//! over datasets, grid-searches hyperparameters supervised by the searched
//! unadjusted F1 aggregated to dataset level, times fit/score phases behind
//! an exclusive gate, and emits deterministic CSV/text reports.

mod config;
mod report;
mod timer;

pub use config::{BenchConfig, DatasetSource, ExternalSource, Preprocessing, ThresholdOptions};
pub use report::{emit_report, rows_to_csv};
pub use timer::{time_phase, untimed};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use crate::data::{
    drop_constant_kpis, load_dataset, read_labels, read_matrix, standardize, Dataset,
    LabeledEntity, LabelVector, LoadOptions,
};
use crate::detectors::{DetectorConfig, DetectorKind, DetectorParams, FittedModel};
use crate::error::{MtadError, Result};
use crate::metrics::{
    adjust_points, aggregate_entity_salience, auc, compute_delay, compute_salience,
    normalize_across_methods, precision_recall_f1, ConfusionCounts, PrfResult,
};
use crate::thresholding::{
    apply_threshold, normalize_scores, pot_threshold, search_threshold, ThresholdStrategy,
};

/// One report cell: a number, or an explicit absence with a short reason code.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricCell {
    Value(f64),
    Na(String),
}

impl MetricCell {
    fn na(code: impl Into<String>) -> MetricCell {
        MetricCell::Na(code.into())
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            MetricCell::Value(v) => Some(*v),
            MetricCell::Na(_) => None,
        }
    }
}

impl fmt::Display for MetricCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricCell::Value(v) => write!(f, "{v}"),
            MetricCell::Na(code) => write!(f, "NA({code})"),
        }
    }
}

/// One line of the benchmark report. `entity_scope` is an entity id for
/// detail rows or "all" for the dataset-level aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub dataset: String,
    pub entity_scope: String,
    pub detector: String,
    pub params: String,
    pub f1: MetricCell,
    pub f1_adj: MetricCell,
    pub f1_search: MetricCell,
    pub f1_search_adj: MetricCell,
    pub auc: MetricCell,
    pub theta_evt: MetricCell,
    pub theta_search: MetricCell,
    pub salience_raw: MetricCell,
    pub salience_norm: MetricCell,
    pub delay: MetricCell,
    pub train_seconds: MetricCell,
    pub test_seconds: MetricCell,
}

impl MetricRow {
    fn sort_key(&self) -> (String, String, String, u8, String) {
        let scope_rank = u8::from(self.entity_scope != "all");
        (
            self.dataset.clone(),
            self.detector.clone(),
            self.params.clone(),
            scope_rank,
            self.entity_scope.clone(),
        )
    }
}

/// Dataset-level searched F1 recorded for every grid point, kept for audit.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub dataset: String,
    pub detector: String,
    pub params: String,
    pub f1_hat: MetricCell,
}

/// Everything a run produces. Identical config and seed reproduce every
/// non-timing cell; the timing columns and wall-clock metadata may differ.
#[derive(Debug, Clone)]
pub struct Report {
    pub config_text: String,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub rows: Vec<MetricRow>,
    pub audit: Vec<AuditRow>,
    pub notes: Vec<String>,
}

/// Outcome of one detector's grid search on one dataset.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best_params: DetectorParams,
    pub dataset_row: MetricRow,
    pub entity_rows: Vec<MetricRow>,
    pub audit: Vec<AuditRow>,
}

fn error_code(e: &MtadError) -> &'static str {
    match e {
        MtadError::Io { .. } => "io",
        MtadError::Parse { .. } => "parse",
        MtadError::InvalidLabel { .. } => "invalid_label",
        MtadError::DimensionMismatch(_) => "dimension_mismatch",
        MtadError::NonFinite { .. } => "non_finite",
        MtadError::NoInformativeKpis => "no_informative_kpis",
        MtadError::InvalidParam(_) => "invalid_param",
        MtadError::EmptyInput(_) => "empty_input",
        MtadError::DegenerateLabels => "degenerate_labels",
        MtadError::InsufficientTailData { .. } => "insufficient_tail",
        MtadError::ConstantScores => "constant_scores",
        MtadError::DoubleAdjustment => "double_adjustment",
        MtadError::NestedTiming => "nested_timing",
        MtadError::Config(_) => "config",
        MtadError::Bench(_) => "bench",
    }
}

#[derive(Debug, Clone)]
struct EvalAtTheta {
    theta: f64,
    raw: PrfResult,
    adjusted: PrfResult,
}

#[derive(Debug, Clone)]
enum EvtEval {
    /// A usable threshold. For the fixed strategy the theta cell is masked
    /// because the column reports tail-fitted thresholds only.
    Done {
        theta_cell: MetricCell,
        eval: EvalAtTheta,
    },
    Skipped { code: String },
}

/// All threshold-dependent and threshold-free metrics of one score series.
#[derive(Debug, Clone)]
struct EntityCore {
    evt: EvtEval,
    search: EvalAtTheta,
    auc: f64,
    salience: f64,
    delay: usize,
}

#[derive(Debug, Clone)]
struct EntityEval {
    entity_id: String,
    core: EntityCore,
    norm: Vec<f64>,
    train_seconds: Option<f64>,
    test_seconds: Option<f64>,
}

fn eval_at(norm: &[f64], labels: &LabelVector, theta: f64) -> Result<EvalAtTheta> {
    let pred = apply_threshold(norm, theta);
    let raw = precision_recall_f1(&pred, labels)?;
    let adjusted = precision_recall_f1(&adjust_points(&pred, labels)?, labels)?;
    Ok(EvalAtTheta {
        theta,
        raw,
        adjusted,
    })
}

/// Runs the whole per-series protocol on already normalized scores.
fn evaluate_entity_core(
    norm: &[f64],
    labels: &LabelVector,
    opts: &ThresholdOptions,
) -> Result<EntityCore> {
    let searched = search_threshold(norm, labels)?;
    let search = eval_at(norm, labels, searched.theta)?;

    let evt = match opts.strategy {
        ThresholdStrategy::Search => EvtEval::Skipped {
            code: "strategy_search".into(),
        },
        ThresholdStrategy::Fixed => {
            let theta = opts.fixed_theta.ok_or_else(|| {
                MtadError::InvalidParam("fixed strategy requires a threshold value".into())
            })?;
            if !theta.is_finite() {
                return Err(MtadError::InvalidParam(format!(
                    "fixed threshold {theta} is not finite"
                )));
            }
            EvtEval::Done {
                theta_cell: MetricCell::na("strategy_fixed"),
                eval: eval_at(norm, labels, theta)?,
            }
        }
        ThresholdStrategy::Evt => match pot_threshold(norm, opts.risk_q, opts.init_quantile) {
            Ok(res) => EvtEval::Done {
                theta_cell: MetricCell::Value(res.theta),
                eval: eval_at(norm, labels, res.theta)?,
            },
            // Data-shaped tail failures degrade to reported absences; bad
            // arguments stay hard errors.
            Err(e @ (MtadError::InsufficientTailData { .. } | MtadError::ConstantScores)) => {
                EvtEval::Skipped {
                    code: error_code(&e).into(),
                }
            }
            Err(e) => return Err(e),
        },
    };

    let auc_value = auc(norm, labels)?;
    let salience = compute_salience(norm, labels)?.salience;
    let delay = compute_delay(&apply_threshold(norm, search.theta), labels)?;

    Ok(EntityCore {
        evt,
        search,
        auc: auc_value,
        salience,
        delay,
    })
}

#[allow(clippy::too_many_arguments)]
fn row_from_core(
    dataset: &str,
    scope: &str,
    detector: &str,
    params: &str,
    core: &EntityCore,
    train_seconds: Option<f64>,
    test_seconds: Option<f64>,
    salience_norm: MetricCell,
) -> MetricRow {
    let (f1, f1_adj, theta_evt) = match &core.evt {
        EvtEval::Done { theta_cell, eval } => (
            MetricCell::Value(eval.raw.f1),
            MetricCell::Value(eval.adjusted.f1),
            theta_cell.clone(),
        ),
        EvtEval::Skipped { code } => (
            MetricCell::na(code.clone()),
            MetricCell::na(code.clone()),
            MetricCell::na(code.clone()),
        ),
    };
    MetricRow {
        dataset: dataset.into(),
        entity_scope: scope.into(),
        detector: detector.into(),
        params: params.into(),
        f1,
        f1_adj,
        f1_search: MetricCell::Value(core.search.raw.f1),
        f1_search_adj: MetricCell::Value(core.search.adjusted.f1),
        auc: MetricCell::Value(core.auc),
        theta_evt,
        theta_search: MetricCell::Value(core.search.theta),
        salience_raw: MetricCell::Value(core.salience),
        salience_norm,
        delay: MetricCell::Value(core.delay as f64),
        train_seconds: train_seconds.map_or_else(|| MetricCell::na("untimed"), MetricCell::Value),
        test_seconds: test_seconds.map_or_else(|| MetricCell::na("untimed"), MetricCell::Value),
    }
}

/// Collapses per-entity evaluations into the dataset-level row: confusion
/// counts are summed per threshold kind, AUC is computed over the
/// concatenated per-entity-normalized scores, salience and delay are summed.
/// Theta columns only survive for single-entity datasets.
fn aggregate_dataset_row(
    dataset: &Dataset,
    detector: &str,
    params: &str,
    evals: &[EntityEval],
) -> Result<MetricRow> {
    assert_eq!(evals.len(), dataset.entities.len());
    let single = evals.len() == 1;

    let mut evt_raw = ConfusionCounts::default();
    let mut evt_adj = ConfusionCounts::default();
    let mut evt_theta_cell = None;
    let mut evt_failure: Option<String> = None;
    let mut search_raw = ConfusionCounts::default();
    let mut search_adj = ConfusionCounts::default();
    let mut saliences = Vec::with_capacity(evals.len());
    let mut delay_total = 0usize;
    let mut train_total = Some(0.0f64);
    let mut test_total = Some(0.0f64);
    let mut all_scores = Vec::new();
    let mut all_labels = Vec::new();

    for (ev, entity) in evals.iter().zip(&dataset.entities) {
        match &ev.core.evt {
            EvtEval::Done { theta_cell, eval } => {
                evt_raw += eval.raw.counts;
                evt_adj += eval.adjusted.counts;
                if evt_theta_cell.is_none() {
                    evt_theta_cell = Some(theta_cell.clone());
                }
            }
            EvtEval::Skipped { code } => {
                if evt_failure.is_none() {
                    evt_failure = Some(if code == "strategy_search" {
                        code.clone()
                    } else {
                        format!("{code}:{}", ev.entity_id)
                    });
                }
            }
        }
        search_raw += ev.core.search.raw.counts;
        search_adj += ev.core.search.adjusted.counts;
        saliences.push(ev.core.salience);
        delay_total += ev.core.delay;
        train_total = match (train_total, ev.train_seconds) {
            (Some(acc), Some(s)) => Some(acc + s),
            _ => None,
        };
        test_total = match (test_total, ev.test_seconds) {
            (Some(acc), Some(s)) => Some(acc + s),
            _ => None,
        };
        all_scores.extend_from_slice(&ev.norm);
        all_labels.extend_from_slice(entity.test_labels.as_slice());
    }

    let (f1, f1_adj, theta_evt) = match evt_failure {
        None => (
            MetricCell::Value(PrfResult::from_counts(evt_raw).f1),
            MetricCell::Value(PrfResult::from_counts(evt_adj).f1),
            if single {
                evt_theta_cell.expect("single entity with successful tail fit")
            } else {
                MetricCell::na("multi_entity")
            },
        ),
        Some(code) => (
            MetricCell::na(code.clone()),
            MetricCell::na(code.clone()),
            MetricCell::na(code),
        ),
    };
    let theta_search = if single {
        MetricCell::Value(evals[0].core.search.theta)
    } else {
        MetricCell::na("multi_entity")
    };

    let auc_value = auc(&all_scores, &LabelVector::new(all_labels)?)?;
    let salience_raw = aggregate_entity_salience(&saliences)?;

    Ok(MetricRow {
        dataset: dataset.name.clone(),
        entity_scope: "all".into(),
        detector: detector.into(),
        params: params.into(),
        f1,
        f1_adj,
        f1_search: MetricCell::Value(PrfResult::from_counts(search_raw).f1),
        f1_search_adj: MetricCell::Value(PrfResult::from_counts(search_adj).f1),
        auc: MetricCell::Value(auc_value),
        theta_evt,
        theta_search,
        salience_raw: MetricCell::Value(salience_raw),
        salience_norm: MetricCell::na("cross_detector"),
        delay: MetricCell::Value(delay_total as f64),
        train_seconds: train_total.map_or_else(|| MetricCell::na("untimed"), MetricCell::Value),
        test_seconds: test_total.map_or_else(|| MetricCell::na("untimed"), MetricCell::Value),
    })
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Per-job seed: a deterministic function of the run seed and the job's
/// identity, independent of scheduling and worker count.
fn derive_seed(base: u64, dataset: &str, entity: &str, kind: DetectorKind, params: &str) -> u64 {
    base ^ fnv1a(format!("d={dataset}").as_bytes())
        ^ fnv1a(format!("e={entity}").as_bytes())
        ^ fnv1a(format!("k={kind}").as_bytes())
        ^ fnv1a(format!("p={params}").as_bytes())
}

/// Fits and scores one detector on one entity, timing both phases behind the
/// exclusive gate, then evaluates the scores. Failures come back as short
/// reason codes tagged with the entity id.
fn run_detector_job(
    dataset_name: &str,
    entity: &LabeledEntity,
    params: &DetectorParams,
    config: &BenchConfig,
) -> std::result::Result<EntityEval, String> {
    let fail = |e: &MtadError| format!("{}:{}", error_code(e), entity.entity_id);
    let det_cfg = DetectorConfig {
        params: *params,
        seed: derive_seed(
            config.seed,
            dataset_name,
            &entity.entity_id,
            params.kind(),
            &params.canonical(),
        ),
    };

    let (fitted, train_seconds) =
        time_phase(|| FittedModel::fit(&det_cfg, &entity.train)).map_err(|e| fail(&e))?;
    let model = fitted.map_err(|e| fail(&e))?;
    let (scored, test_seconds) =
        time_phase(|| model.score(&entity.test)).map_err(|e| fail(&e))?;
    let series = scored.map_err(|e| fail(&e))?;

    untimed(|| {
        let norm = normalize_scores(&series.raw).map_err(|e| fail(&e))?;
        let core =
            evaluate_entity_core(&norm, &entity.test_labels, &config.threshold).map_err(|e| fail(&e))?;
        Ok(EntityEval {
            entity_id: entity.entity_id.clone(),
            core,
            norm,
            train_seconds: Some(train_seconds),
            test_seconds: Some(test_seconds),
        })
    })
}

/// Rows for the winning grid point, before the audit table is attached.
struct GridSelection {
    best_params: DetectorParams,
    dataset_row: MetricRow,
    entity_rows: Vec<MetricRow>,
}

/// Runs every grid point over every entity, scores each point by the
/// dataset-level searched F1 from summed confusion counts, and returns the
/// rows for the best point. Ties go to the smallest canonical param string;
/// a point fails as a whole if any entity job fails.
pub fn grid_search(
    kind: DetectorKind,
    grid: &[DetectorParams],
    dataset: &Dataset,
    config: &BenchConfig,
) -> Result<GridOutcome> {
    let (audit, selection) = grid_search_with_audit(kind, grid, dataset, config)?;
    let sel = selection?;
    Ok(GridOutcome {
        best_params: sel.best_params,
        dataset_row: sel.dataset_row,
        entity_rows: sel.entity_rows,
        audit,
    })
}

/// Same as `grid_search`, but hands back the per-point audit rows even when
/// every point failed, so the caller can keep them next to the failure note.
/// The outer error covers malformed grids only.
fn grid_search_with_audit(
    kind: DetectorKind,
    grid: &[DetectorParams],
    dataset: &Dataset,
    config: &BenchConfig,
) -> Result<(Vec<AuditRow>, Result<GridSelection>)> {
    if grid.is_empty() {
        return Err(MtadError::Config(format!("empty grid for detector {kind}")));
    }
    for params in grid {
        if params.kind() != kind {
            return Err(MtadError::Config(format!(
                "grid for {kind} contains {} parameters",
                params.kind()
            )));
        }
    }
    let mut points: Vec<DetectorParams> = grid.to_vec();
    points.sort_by_key(|p| p.canonical());
    points.dedup_by_key(|p| p.canonical());

    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|pi| (0..dataset.entities.len()).map(move |ei| (pi, ei)))
        .collect();
    let mut job_results: Vec<((usize, usize), std::result::Result<EntityEval, String>)> = jobs
        .par_iter()
        .map(|&(pi, ei)| {
            (
                (pi, ei),
                run_detector_job(&dataset.name, &dataset.entities[ei], &points[pi], config),
            )
        })
        .collect();
    job_results.sort_by_key(|((pi, ei), _)| (*pi, *ei));

    let mut per_point: Vec<std::result::Result<Vec<EntityEval>, String>> =
        points.iter().map(|_| Ok(Vec::new())).collect();
    for ((pi, _), result) in job_results {
        match (&mut per_point[pi], result) {
            (Ok(evals), Ok(eval)) => evals.push(eval),
            (slot @ Ok(_), Err(code)) => *slot = Err(code),
            (Err(_), _) => {}
        }
    }

    let mut audit = Vec::with_capacity(points.len());
    let mut best: Option<(usize, f64)> = None;
    for (pi, outcome) in per_point.iter().enumerate() {
        let canonical = points[pi].canonical();
        let cell = match outcome {
            Ok(evals) => {
                let mut counts = ConfusionCounts::default();
                for ev in evals {
                    counts += ev.core.search.raw.counts;
                }
                let f1_hat = PrfResult::from_counts(counts).f1;
                if best.is_none_or(|(_, best_f1)| f1_hat > best_f1) {
                    best = Some((pi, f1_hat));
                }
                MetricCell::Value(f1_hat)
            }
            Err(code) => MetricCell::na(code.clone()),
        };
        audit.push(AuditRow {
            dataset: dataset.name.clone(),
            detector: kind.to_string(),
            params: canonical,
            f1_hat: cell,
        });
    }

    let Some((best_idx, _)) = best else {
        let first_code = per_point
            .iter()
            .find_map(|o| o.as_ref().err())
            .expect("no successful point implies a failure code");
        let err = MtadError::Bench(format!(
            "all {kind} grid points failed on dataset {}: {first_code}",
            dataset.name
        ));
        return Ok((audit, Err(err)));
    };

    let best_params = points[best_idx];
    let canonical = best_params.canonical();
    let evals = per_point
        .into_iter()
        .nth(best_idx)
        .expect("best index is in range")
        .expect("best point succeeded");

    let detector_label = kind.to_string();
    let dataset_row = aggregate_dataset_row(dataset, &detector_label, &canonical, &evals)?;
    let entity_rows = evals
        .iter()
        .map(|ev| {
            row_from_core(
                &dataset.name,
                &ev.entity_id,
                &detector_label,
                &canonical,
                &ev.core,
                ev.train_seconds,
                ev.test_seconds,
                MetricCell::na("dataset_scope"),
            )
        })
        .collect();

    Ok((
        audit,
        Ok(GridSelection {
            best_params,
            dataset_row,
            entity_rows,
        }),
    ))
}

/// Evaluates an externally produced raw score series against labels, issuing
/// one row with detector "external". Thresholding follows `opts`, including
/// the fixed strategy with its explicit theta.
pub fn evaluate_scores(
    raw_scores: &[f64],
    labels: &LabelVector,
    opts: &ThresholdOptions,
) -> Result<MetricRow> {
    if raw_scores.len() != labels.len() {
        return Err(MtadError::DimensionMismatch(format!(
            "{} scores for {} labels",
            raw_scores.len(),
            labels.len()
        )));
    }
    let norm = normalize_scores(raw_scores)?;
    let core = evaluate_entity_core(&norm, labels, opts)?;
    // Min-max over a single method pins its normalized salience to 1.
    let mut methods = BTreeMap::new();
    methods.insert("external".to_string(), core.salience);
    let salience_norm = normalize_across_methods(&methods)["external"];
    Ok(row_from_core(
        "-",
        "all",
        "external",
        "-",
        &core,
        None,
        None,
        MetricCell::Value(salience_norm),
    ))
}

/// File-based wrapper over [`evaluate_scores`]: one raw score per line, one
/// 0/1 label per line.
pub fn evaluate_score_files(
    scores_path: &Path,
    labels_path: &Path,
    opts: &ThresholdOptions,
) -> Result<MetricRow> {
    let matrix = read_matrix(scores_path, LoadOptions::default())?;
    if matrix.m_kpis() != 1 {
        return Err(MtadError::DimensionMismatch(format!(
            "score file {} has {} columns, expected 1",
            scores_path.display(),
            matrix.m_kpis()
        )));
    }
    let scores: Vec<f64> = matrix.column(0).collect();
    let labels = read_labels(labels_path)?;
    evaluate_scores(&scores, &labels, opts)
}

fn preprocess_entity(entity: LabeledEntity, prep: &Preprocessing) -> Result<LabeledEntity> {
    let mut entity = entity;
    if prep.drop_constant {
        entity = drop_constant_kpis(&entity)?.0;
    }
    if prep.standardize {
        entity = standardize(&entity)?.0;
    }
    Ok(entity)
}

fn all_na_row(dataset: &str, detector: &str, code: &str) -> MetricRow {
    let na = || MetricCell::na(code.to_string());
    MetricRow {
        dataset: dataset.into(),
        entity_scope: "all".into(),
        detector: detector.into(),
        params: "-".into(),
        f1: na(),
        f1_adj: na(),
        f1_search: na(),
        f1_search_adj: na(),
        auc: na(),
        theta_evt: na(),
        theta_search: na(),
        salience_raw: na(),
        salience_norm: na(),
        delay: na(),
        train_seconds: na(),
        test_seconds: na(),
    }
}

fn run_external(
    dataset: &Dataset,
    ext: &ExternalSource,
    config: &BenchConfig,
) -> Result<(MetricRow, Vec<MetricRow>)> {
    let detector_label = format!("external:{}", ext.name);
    let mut evals = Vec::with_capacity(dataset.entities.len());
    for entity in &dataset.entities {
        let path = ext.scores_dir.join(format!("{}.csv", entity.entity_id));
        let matrix = read_matrix(&path, LoadOptions::default())?;
        if matrix.m_kpis() != 1 {
            return Err(MtadError::Bench(format!(
                "{}: expected one score column, found {}",
                path.display(),
                matrix.m_kpis()
            )));
        }
        let raw: Vec<f64> = matrix.column(0).collect();
        if raw.len() != entity.test_labels.len() {
            return Err(MtadError::Bench(format!(
                "{}: {} scores for {} test points",
                path.display(),
                raw.len(),
                entity.test_labels.len()
            )));
        }
        let norm = normalize_scores(&raw)?;
        let core = evaluate_entity_core(&norm, &entity.test_labels, &config.threshold)?;
        evals.push(EntityEval {
            entity_id: entity.entity_id.clone(),
            core,
            norm,
            train_seconds: None,
            test_seconds: None,
        });
    }
    let dataset_row = aggregate_dataset_row(dataset, &detector_label, "-", &evals)?;
    let entity_rows = evals
        .iter()
        .map(|ev| {
            row_from_core(
                &dataset.name,
                &ev.entity_id,
                &detector_label,
                "-",
                &ev.core,
                None,
                None,
                MetricCell::na("dataset_scope"),
            )
        })
        .collect();
    Ok((dataset_row, entity_rows))
}

/// Rewrites `salience_norm` on dataset-level rows: min-max over the methods
/// evaluated on each dataset. Rows whose raw salience is absent inherit its
/// reason code; entity rows keep their scope marker.
fn fill_salience_norm(rows: &mut [MetricRow]) {
    let mut per_dataset: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for row in rows.iter() {
        if row.entity_scope != "all" {
            continue;
        }
        if let MetricCell::Value(s) = row.salience_raw {
            per_dataset
                .entry(row.dataset.clone())
                .or_default()
                .insert(row.detector.clone(), s);
        }
    }
    let normalized: BTreeMap<String, BTreeMap<String, f64>> = per_dataset
        .into_iter()
        .map(|(ds, methods)| {
            let normed = normalize_across_methods(&methods);
            (ds, normed)
        })
        .collect();
    for row in rows.iter_mut() {
        if row.entity_scope != "all" {
            continue;
        }
        row.salience_norm = match &row.salience_raw {
            MetricCell::Value(_) => MetricCell::Value(normalized[&row.dataset][&row.detector]),
            MetricCell::Na(code) => MetricCell::na(code.clone()),
        };
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Executes the configured benchmark end to end and writes the report files
/// into the configured output directory. Per-cell failures are recorded in
/// place and the run continues; unreadable inputs or unwritable outputs
/// abort.
pub fn run_benchmark(config: &BenchConfig) -> Result<Report> {
    let started_unix = unix_now();
    let load_opts = LoadOptions {
        forward_fill: config.preprocessing.ffill,
    };

    let mut notes = Vec::new();
    let mut datasets = Vec::new();
    for src in &config.datasets {
        let loaded = load_dataset(&src.name, &src.path, load_opts)?;
        let mut kept = Vec::new();
        for entity in loaded.entities {
            if !entity.test_labels.has_both_classes() {
                notes.push(format!(
                    "{}/{}: excluded, test labels are single-class",
                    src.name, entity.entity_id
                ));
                continue;
            }
            let entity_id = entity.entity_id.clone();
            match preprocess_entity(entity, &config.preprocessing) {
                Ok(e) => kept.push(e),
                Err(MtadError::NoInformativeKpis) => {
                    notes.push(format!(
                        "{}/{entity_id}: excluded, every KPI is constant in training",
                        src.name
                    ));
                }
                Err(e) => return Err(e),
            }
        }
        if kept.is_empty() {
            return Err(MtadError::Bench(format!(
                "dataset {} has no usable entities",
                src.name
            )));
        }
        datasets.push(Dataset::new(src.name.clone(), kept)?);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| MtadError::Bench(format!("worker pool: {e}")))?;

    let mut rows = Vec::new();
    let mut audit = Vec::new();
    for dataset in &datasets {
        for (kind, grid) in &config.grids {
            match pool.install(|| grid_search_with_audit(*kind, grid, dataset, config)) {
                Ok((audit_rows, selection)) => {
                    audit.extend(audit_rows);
                    match selection {
                        Ok(sel) => {
                            rows.push(sel.dataset_row);
                            rows.extend(sel.entity_rows);
                        }
                        Err(e) => {
                            notes.push(format!("{}/{kind}: {e}", dataset.name));
                            rows.push(all_na_row(&dataset.name, &kind.to_string(), "grid_failed"));
                        }
                    }
                }
                Err(e) => {
                    notes.push(format!("{}/{kind}: {e}", dataset.name));
                    rows.push(all_na_row(&dataset.name, &kind.to_string(), "grid_failed"));
                }
            }
        }
        for ext in config.external.iter().filter(|x| x.dataset == dataset.name) {
            let (dataset_row, entity_rows) = run_external(dataset, ext, config)?;
            rows.push(dataset_row);
            rows.extend(entity_rows);
        }
    }

    fill_salience_norm(&mut rows);
    rows.sort_by_key(MetricRow::sort_key);
    audit.sort_by(|a, b| {
        (&a.dataset, &a.detector, &a.params).cmp(&(&b.dataset, &b.detector, &b.params))
    });

    let report = Report {
        config_text: config.config_text.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix,
        finished_unix: unix_now(),
        rows,
        audit,
        notes,
    };
    emit_report(&report, &config.output_dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{inject_anomalies, write_entity, AnomalyShape, InjectionSpec};

    fn synth_entity(seed: u64) -> LabeledEntity {
        inject_anomalies(&InjectionSpec {
            n: 400,
            m: 4,
            anomaly_ratio: 0.04,
            shapes: vec![AnomalyShape::Spike, AnomalyShape::LevelShift],
            seed,
        })
        .unwrap()
    }

    fn options() -> ThresholdOptions {
        ThresholdOptions::default()
    }

    #[test]
    fn perfect_scores_hit_the_ceiling() {
        let labels = LabelVector::new(vec![0, 0, 1, 1, 0, 0, 1, 0]).unwrap();
        let scores: Vec<f64> = labels.iter().map(f64::from).collect();
        let row = evaluate_scores(&scores, &labels, &options()).unwrap();
        assert_eq!(row.f1_search, MetricCell::Value(1.0));
        assert_eq!(row.f1_search_adj, MetricCell::Value(1.0));
        assert_eq!(row.auc, MetricCell::Value(1.0));
        assert_eq!(row.delay, MetricCell::Value(0.0));
        assert_eq!(row.detector, "external");
        // 8 points cannot feed a tail fit
        assert_eq!(row.f1, MetricCell::na("insufficient_tail"));
        assert_eq!(row.train_seconds, MetricCell::na("untimed"));
    }

    #[test]
    fn constant_scores_degrade_to_all_positive() {
        let labels = LabelVector::new(vec![0, 1, 1, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        let scores = vec![0.4; 10];
        let row = evaluate_scores(&scores, &labels, &options()).unwrap();
        // all-positive prediction: TP=2, FP=8 -> precision 0.2, recall 1
        let expected = 2.0 * 0.2 / 1.2;
        assert!((row.f1_search.value().unwrap() - expected).abs() < 1e-12);
        assert_eq!(row.auc, MetricCell::Value(0.5));
        assert_eq!(row.salience_raw, MetricCell::Value(0.0));
        assert_eq!(row.f1, MetricCell::na("constant_scores"));
    }

    #[test]
    fn salience_example_survives_end_to_end() {
        let labels = LabelVector::new(vec![1, 1, 1, 0, 0, 0]).unwrap();
        let scores = vec![0.9, 0.8, 0.2, 0.1, 0.15, 0.7];
        let row = evaluate_scores(&scores, &labels, &options()).unwrap();
        // The pipeline min-maxes the input to [1, 0.875, 0.125, 0, 0.0625, 0.75]
        // before salience, so the value differs from compute_salience on the
        // raw vector (0.15385). Hand trace on the rescaled scores:
        // ASP={1,0.875} mean 0.9375 weight sigmoid(2/3), NSP={0.75} weight
        // sigmoid(1/3), salience = 0.66076*0.9375 - 0.58257*0.75.
        assert!((row.salience_raw.value().unwrap() - 0.18253144087121757).abs() < 1e-12);
        assert_eq!(row.salience_norm, MetricCell::Value(1.0));
    }

    #[test]
    fn search_strategy_masks_evt_cells() {
        let labels = LabelVector::new(vec![0, 1, 0, 1, 0, 0]).unwrap();
        let scores = vec![0.1, 0.9, 0.2, 0.8, 0.1, 0.0];
        let opts = ThresholdOptions {
            strategy: ThresholdStrategy::Search,
            ..options()
        };
        let row = evaluate_scores(&scores, &labels, &opts).unwrap();
        assert_eq!(row.f1, MetricCell::na("strategy_search"));
        assert_eq!(row.theta_evt, MetricCell::na("strategy_search"));
        assert_eq!(row.f1_search, MetricCell::Value(1.0));
    }

    #[test]
    fn fixed_strategy_reports_its_own_f1() {
        let labels = LabelVector::new(vec![0, 1, 0, 1]).unwrap();
        let scores = vec![0.0, 1.0, 0.0, 0.2];
        let opts = ThresholdOptions {
            strategy: ThresholdStrategy::Fixed,
            fixed_theta: Some(0.15),
            ..options()
        };
        let row = evaluate_scores(&scores, &labels, &opts).unwrap();
        // theta 0.15 flags scores 1.0 and 0.2: TP=2, FP=0, FN=0
        assert_eq!(row.f1, MetricCell::Value(1.0));
        assert_eq!(row.theta_evt, MetricCell::na("strategy_fixed"));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let labels = LabelVector::new(vec![0, 1]).unwrap();
        assert!(evaluate_scores(&[0.1], &labels, &options()).is_err());
    }

    fn config_for(dataset_dir: &Path, out_dir: &Path, detectors: &str, seed: u64) -> BenchConfig {
        let text = format!(
            "seed = {seed}\noutput_dir = {out:?}\nparallelism = 2\n\n[[datasets]]\nname = \"synth\"\npath = {path:?}\n\n{detectors}",
            out = out_dir.to_str().unwrap(),
            path = dataset_dir.to_str().unwrap(),
        );
        BenchConfig::from_toml_str(&text).unwrap()
    }

    #[test]
    fn grid_search_returns_the_argmax_point() {
        let entity = synth_entity(5);
        let dataset = Dataset::new("synth", vec![entity]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let config = config_for(
            dir.path(),
            &dir.path().join("out"),
            "[detectors.knn]\nk = [1, 10]\n",
            5,
        );
        let grid = config.grids[&DetectorKind::Knn].clone();
        let outcome = grid_search(DetectorKind::Knn, &grid, &dataset, &config).unwrap();
        assert_eq!(outcome.audit.len(), 2);
        // Mirror the tie rule: first point in canonical order wins ties, so
        // scan with a strict improvement test rather than Iterator::max_by.
        let best_audit = outcome
            .audit
            .iter()
            .reduce(|best, row| {
                if row.f1_hat.value().unwrap() > best.f1_hat.value().unwrap() {
                    row
                } else {
                    best
                }
            })
            .unwrap();
        assert_eq!(best_audit.params, outcome.best_params.canonical());
        assert_eq!(
            outcome.dataset_row.f1_search,
            best_audit.f1_hat.clone(),
            "reported searched F1 must match the audited best point"
        );
        // dominance over every audited point
        let best = outcome.dataset_row.f1_search.value().unwrap();
        for row in &outcome.audit {
            assert!(best >= row.f1_hat.value().unwrap());
        }
    }

    #[test]
    fn grid_search_single_point_is_identity() {
        let dataset = Dataset::new("synth", vec![synth_entity(9)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let config = config_for(
            dir.path(),
            &dir.path().join("out"),
            "[detectors.lof]\nk = 15\n",
            9,
        );
        let grid = config.grids[&DetectorKind::Lof].clone();
        let outcome = grid_search(DetectorKind::Lof, &grid, &dataset, &config).unwrap();
        assert_eq!(outcome.best_params.canonical(), "k=15");
        assert_eq!(outcome.entity_rows.len(), 1);
        assert_eq!(outcome.entity_rows[0].entity_scope, "synthetic");
    }

    #[test]
    fn grid_search_is_deterministic() {
        let dataset = Dataset::new("synth", vec![synth_entity(2)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let config = config_for(
            dir.path(),
            &dir.path().join("out"),
            "[detectors.iforest]\ntrees = [20, 40]\nsubsample = [64]\n",
            2,
        );
        let grid = config.grids[&DetectorKind::IForest].clone();
        let a = grid_search(DetectorKind::IForest, &grid, &dataset, &config).unwrap();
        let b = grid_search(DetectorKind::IForest, &grid, &dataset, &config).unwrap();
        assert_eq!(a.best_params.canonical(), b.best_params.canonical());
        assert_eq!(a.dataset_row.f1_search, b.dataset_row.f1_search);
        assert_eq!(a.dataset_row.auc, b.dataset_row.auc);
    }

    fn write_synth_dataset(root: &Path, seeds: &[u64]) {
        for (i, &seed) in seeds.iter().enumerate() {
            let mut entity = synth_entity(seed);
            entity.entity_id = format!("m{i}");
            write_entity(root, &entity).unwrap();
        }
    }

    #[test]
    fn run_benchmark_covers_both_salience_ends() {
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        write_synth_dataset(&data_dir, &[31]);
        let out = dir.path().join("out");
        let config = config_for(
            &data_dir,
            &out,
            "[detectors.knn]\nk = 10\n\n[detectors.iforest]\ntrees = 50\nsubsample = 64\n",
            31,
        );
        let report = run_benchmark(&config).unwrap();
        let dataset_rows: Vec<&MetricRow> = report
            .rows
            .iter()
            .filter(|r| r.entity_scope == "all")
            .collect();
        assert_eq!(dataset_rows.len(), 2);
        let mut norms: Vec<f64> = dataset_rows
            .iter()
            .map(|r| r.salience_norm.value().unwrap())
            .collect();
        norms.sort_by(f64::total_cmp);
        assert_eq!(norms, vec![0.0, 1.0]);
        assert!(out.join("report.csv").is_file());
        assert!(out.join("summary.txt").is_file());
        assert!(out.join("grid_audit.csv").is_file());
        assert!(out.join("run_meta.txt").is_file());
    }

    #[test]
    fn reruns_differ_only_in_timings() {
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        write_synth_dataset(&data_dir, &[11, 12]);
        let run = |out: &Path| {
            let config = config_for(
                &data_dir,
                out,
                "[detectors.loda]\nprojections = 30\n\n[detectors.knn]\nk = [5, 10]\n",
                77,
            );
            run_benchmark(&config).unwrap()
        };
        let a = run(&dir.path().join("out_a"));
        let b = run(&dir.path().join("out_b"));
        assert_eq!(a.rows.len(), b.rows.len());
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            let mut ra = ra.clone();
            let mut rb = rb.clone();
            ra.train_seconds = MetricCell::na("x");
            rb.train_seconds = MetricCell::na("x");
            ra.test_seconds = MetricCell::na("x");
            rb.test_seconds = MetricCell::na("x");
            assert_eq!(ra, rb);
        }
        assert_eq!(a.audit, b.audit);
    }

    #[test]
    fn failing_detector_is_isolated() {
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        write_synth_dataset(&data_dir, &[21, 22]);
        let out = dir.path().join("out");
        // k exceeds the training size of every entity, so the whole knn grid
        // fails while iforest still reports.
        let config = config_for(
            &data_dir,
            &out,
            "[detectors.knn]\nk = 5000\n\n[detectors.iforest]\ntrees = 30\nsubsample = 32\n",
            3,
        );
        let report = run_benchmark(&config).unwrap();
        let knn_row = report
            .rows
            .iter()
            .find(|r| r.detector == "knn" && r.entity_scope == "all")
            .unwrap();
        assert_eq!(knn_row.f1_search, MetricCell::na("grid_failed"));
        let iforest_row = report
            .rows
            .iter()
            .find(|r| r.detector == "iforest" && r.entity_scope == "all")
            .unwrap();
        assert!(iforest_row.f1_search.value().is_some());
        assert!(report.notes.iter().any(|n| n.contains("invalid_param")));
        // audit keeps the failed point with its reason
        assert!(report
            .audit
            .iter()
            .any(|a| a.detector == "knn" && a.f1_hat.value().is_none()));
    }

    #[test]
    fn external_scores_share_the_pipeline() {
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        write_synth_dataset(&data_dir, &[41]);
        // oracle scores: the labels themselves
        let entity = crate::data::load_dataset("synth", &data_dir, LoadOptions::default())
            .unwrap()
            .entities
            .remove(0);
        let scores_dir = dir.path().join("scores");
        std::fs::create_dir_all(&scores_dir).unwrap();
        let lines: Vec<String> = entity
            .test_labels
            .iter()
            .map(|v| f64::from(v).to_string())
            .collect();
        std::fs::write(scores_dir.join("m0.csv"), lines.join("\n") + "\n").unwrap();

        let out = dir.path().join("out");
        let text = format!(
            "seed = 1\noutput_dir = {out:?}\n\n[[datasets]]\nname = \"synth\"\npath = {path:?}\n\n[detectors.knn]\nk = 10\n\n[[external_scores]]\nname = \"oracle\"\ndataset = \"synth\"\nscores_dir = {scores:?}\n",
            out = out.to_str().unwrap(),
            path = data_dir.to_str().unwrap(),
            scores = scores_dir.to_str().unwrap(),
        );
        let config = BenchConfig::from_toml_str(&text).unwrap();
        let report = run_benchmark(&config).unwrap();
        let ext_row = report
            .rows
            .iter()
            .find(|r| r.detector == "external:oracle" && r.entity_scope == "all")
            .unwrap();
        assert_eq!(ext_row.f1_search, MetricCell::Value(1.0));
        assert_eq!(ext_row.auc, MetricCell::Value(1.0));
        assert_eq!(ext_row.train_seconds, MetricCell::na("untimed"));
        // the oracle and knn both have salience values, normalized across both
        assert!(ext_row.salience_norm.value().is_some());
    }
}
