//! The five classical detectors, each with a fit-on-train / score-on-test
//! lifecycle, deterministic seeding, and a declared hyperparameter grid.
//! Higher raw score always means more anomalous.

mod iforest;
mod knn;
mod loda;
mod lof;
mod pca;

use std::time::Instant;

use crate::data::{KpiMatrix, LabeledEntity};
use crate::error::{MtadError, Result};
use crate::thresholding::normalize_scores;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DetectorKind {
    Knn,
    Lof,
    Pca,
    IForest,
    Loda,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::Knn,
        DetectorKind::Lof,
        DetectorKind::Pca,
        DetectorKind::IForest,
        DetectorKind::Loda,
    ];
}

impl std::str::FromStr for DetectorKind {
    type Err = MtadError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(DetectorKind::Knn),
            "lof" => Ok(DetectorKind::Lof),
            "pca" => Ok(DetectorKind::Pca),
            "iforest" => Ok(DetectorKind::IForest),
            "loda" => Ok(DetectorKind::Loda),
            other => Err(MtadError::InvalidParam(format!(
                "unknown detector kind {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            DetectorKind::Knn => "knn",
            DetectorKind::Lof => "lof",
            DetectorKind::Pca => "pca",
            DetectorKind::IForest => "iforest",
            DetectorKind::Loda => "loda",
        };
        f.write_str(name)
    }
}

/// Histogram bin count, resolved against the train size at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinsSpec {
    /// ceil(1 + log2(n_train))
    Sturges,
    /// twice the Sturges count
    SturgesTimes2,
    Fixed(usize),
}

impl BinsSpec {
    pub fn resolve(&self, n_train: usize) -> usize {
        let sturges = (1.0 + (n_train as f64).log2()).ceil() as usize;
        match self {
            BinsSpec::Sturges => sturges.max(1),
            BinsSpec::SturgesTimes2 => (2 * sturges).max(1),
            BinsSpec::Fixed(n) => *n,
        }
    }
}

impl std::fmt::Display for BinsSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BinsSpec::Sturges => f.write_str("sturges"),
            BinsSpec::SturgesTimes2 => f.write_str("sturges2"),
            BinsSpec::Fixed(n) => write!(f, "{n}"),
        }
    }
}

impl std::str::FromStr for BinsSpec {
    type Err = MtadError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sturges" => Ok(BinsSpec::Sturges),
            "sturges2" => Ok(BinsSpec::SturgesTimes2),
            other => other
                .parse::<usize>()
                .map(BinsSpec::Fixed)
                .map_err(|_| MtadError::InvalidParam(format!("invalid bins spec {other:?}"))),
        }
    }
}

/// Isolation-forest subsample size, resolved against the train size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsampleSpec {
    /// min(256, n_train)
    Auto,
    Fixed(usize),
}

impl SubsampleSpec {
    pub fn resolve(&self, n_train: usize) -> usize {
        match self {
            SubsampleSpec::Auto => n_train.min(256),
            SubsampleSpec::Fixed(n) => *n,
        }
    }
}

impl std::fmt::Display for SubsampleSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SubsampleSpec::Auto => f.write_str("auto"),
            SubsampleSpec::Fixed(n) => write!(f, "{n}"),
        }
    }
}

impl std::str::FromStr for SubsampleSpec {
    type Err = MtadError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SubsampleSpec::Auto),
            other => other
                .parse::<usize>()
                .map(SubsampleSpec::Fixed)
                .map_err(|_| MtadError::InvalidParam(format!("invalid subsample spec {other:?}"))),
        }
    }
}

/// Typed hyperparameters, one variant per detector kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectorParams {
    Knn { k: usize },
    Lof { k: usize },
    Pca { eps: f64 },
    IForest { trees: usize, subsample: SubsampleSpec },
    Loda { projections: usize, bins: BinsSpec },
}

impl DetectorParams {
    pub fn kind(&self) -> DetectorKind {
        match self {
            DetectorParams::Knn { .. } => DetectorKind::Knn,
            DetectorParams::Lof { .. } => DetectorKind::Lof,
            DetectorParams::Pca { .. } => DetectorKind::Pca,
            DetectorParams::IForest { .. } => DetectorKind::IForest,
            DetectorParams::Loda { .. } => DetectorKind::Loda,
        }
    }

    pub fn default_for(kind: DetectorKind) -> Self {
        match kind {
            DetectorKind::Knn => DetectorParams::Knn { k: 10 },
            DetectorKind::Lof => DetectorParams::Lof { k: 20 },
            DetectorKind::Pca => DetectorParams::Pca { eps: 1e-9 },
            DetectorKind::IForest => DetectorParams::IForest {
                trees: 100,
                subsample: SubsampleSpec::Auto,
            },
            DetectorKind::Loda => DetectorParams::Loda {
                projections: 100,
                bins: BinsSpec::Sturges,
            },
        }
    }

    /// The declared search grid per kind. PCA has no searched parameter.
    pub fn grid_for(kind: DetectorKind) -> Vec<Self> {
        match kind {
            DetectorKind::Knn => [5, 10, 20, 50]
                .into_iter()
                .map(|k| DetectorParams::Knn { k })
                .collect(),
            DetectorKind::Lof => [10, 20, 50]
                .into_iter()
                .map(|k| DetectorParams::Lof { k })
                .collect(),
            DetectorKind::Pca => vec![DetectorParams::Pca { eps: 1e-9 }],
            DetectorKind::IForest => {
                let mut grid = Vec::new();
                for trees in [100, 200] {
                    for subsample in [SubsampleSpec::Fixed(128), SubsampleSpec::Fixed(256)] {
                        grid.push(DetectorParams::IForest { trees, subsample });
                    }
                }
                grid
            }
            DetectorKind::Loda => {
                let mut grid = Vec::new();
                for projections in [50, 100] {
                    for bins in [BinsSpec::Sturges, BinsSpec::SturgesTimes2] {
                        grid.push(DetectorParams::Loda { projections, bins });
                    }
                }
                grid
            }
        }
    }

    /// Canonical `key=value` rendering, keys sorted, floats in exponent
    /// notation. Used for report rows, grid tie-breaks and seed derivation.
    pub fn canonical(&self) -> String {
        match self {
            DetectorParams::Knn { k } | DetectorParams::Lof { k } => format!("k={k}"),
            DetectorParams::Pca { eps } => format!("eps={eps:e}"),
            DetectorParams::IForest { trees, subsample } => {
                format!("subsample={subsample},trees={trees}")
            }
            DetectorParams::Loda { projections, bins } => {
                format!("bins={bins},projections={projections}")
            }
        }
    }

    /// Builds params for a kind from `key=value` overrides on top of the
    /// defaults.
    pub fn from_pairs(kind: DetectorKind, pairs: &[(String, String)]) -> Result<Self> {
        let mut params = DetectorParams::default_for(kind);
        for (key, value) in pairs {
            let invalid = || {
                MtadError::InvalidParam(format!("invalid value {value:?} for parameter {key:?}"))
            };
            match (&mut params, key.as_str()) {
                (DetectorParams::Knn { k } | DetectorParams::Lof { k }, "k") => {
                    *k = value.parse().map_err(|_| invalid())?;
                }
                (DetectorParams::Pca { eps }, "eps") => {
                    *eps = value.parse().map_err(|_| invalid())?;
                }
                (DetectorParams::IForest { trees, .. }, "trees") => {
                    *trees = value.parse().map_err(|_| invalid())?;
                }
                (DetectorParams::IForest { subsample, .. }, "subsample") => {
                    *subsample = value.parse()?;
                }
                (DetectorParams::Loda { projections, .. }, "projections") => {
                    *projections = value.parse().map_err(|_| invalid())?;
                }
                (DetectorParams::Loda { bins, .. }, "bins") => {
                    *bins = value.parse()?;
                }
                _ => {
                    return Err(MtadError::InvalidParam(format!(
                        "detector {kind} has no parameter {key:?}"
                    )));
                }
            }
        }
        Ok(params)
    }

    /// Checks parameter bounds against the train split they will fit on.
    pub fn validate(&self, n_train: usize) -> Result<()> {
        match *self {
            DetectorParams::Knn { k } => {
                if k == 0 || k > n_train {
                    return Err(MtadError::InvalidParam(format!(
                        "knn needs 1 <= k <= n_train, got k={k} with n_train={n_train}"
                    )));
                }
            }
            DetectorParams::Lof { k } => {
                if k == 0 || k >= n_train {
                    return Err(MtadError::InvalidParam(format!(
                        "lof needs 1 <= k < n_train, got k={k} with n_train={n_train}"
                    )));
                }
            }
            DetectorParams::Pca { eps } => {
                if eps <= 0.0 || !eps.is_finite() {
                    return Err(MtadError::InvalidParam(format!(
                        "pca eps must be a positive finite value, got {eps}"
                    )));
                }
                if n_train < 2 {
                    return Err(MtadError::InvalidParam(
                        "pca needs at least 2 train observations".into(),
                    ));
                }
            }
            DetectorParams::IForest { trees, subsample } => {
                if trees == 0 {
                    return Err(MtadError::InvalidParam("iforest needs trees >= 1".into()));
                }
                let psi = subsample.resolve(n_train);
                if psi < 2 || psi > n_train {
                    return Err(MtadError::InvalidParam(format!(
                        "iforest needs 2 <= subsample <= n_train, got {psi} with n_train={n_train}"
                    )));
                }
            }
            DetectorParams::Loda { projections, bins } => {
                if projections == 0 {
                    return Err(MtadError::InvalidParam(
                        "loda needs projections >= 1".into(),
                    ));
                }
                if bins.resolve(n_train) == 0 {
                    return Err(MtadError::InvalidParam("loda needs bins >= 1".into()));
                }
                if n_train == 0 {
                    return Err(MtadError::EmptyInput("loda train split is empty".into()));
                }
            }
        }
        Ok(())
    }
}

/// Everything needed to fit one detector: parameters plus the seed consumed
/// by the stochastic kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub params: DetectorParams,
    pub seed: u64,
}

impl DetectorConfig {
    pub fn new(params: DetectorParams, seed: u64) -> Self {
        DetectorConfig { params, seed }
    }

    pub fn kind(&self) -> DetectorKind {
        self.params.kind()
    }
}

/// Raw anomaly scores, optionally carrying their min-max normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub raw: Vec<f64>,
    pub normalized: Option<Vec<f64>>,
}

impl ScoreSeries {
    pub fn from_raw(raw: Vec<f64>) -> Self {
        ScoreSeries {
            raw,
            normalized: None,
        }
    }

    /// Computes and caches the min-max normalization of the raw scores.
    pub fn normalize(&mut self) -> Result<&[f64]> {
        if self.normalized.is_none() {
            self.normalized = Some(normalize_scores(&self.raw)?);
        }
        Ok(self.normalized.as_deref().expect("just filled"))
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// A detector after fitting. Immutable; scoring never mutates, so one model
/// can serve concurrent scorers.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Knn(knn::KnnModel),
    Lof(lof::LofModel),
    Pca(pca::PcaModel),
    IForest(iforest::ForestModel),
    Loda(loda::LodaModel),
}

impl FittedModel {
    pub fn fit(config: &DetectorConfig, train: &KpiMatrix) -> Result<Self> {
        config.params.validate(train.n_observations())?;
        Ok(match config.params {
            DetectorParams::Knn { k } => FittedModel::Knn(knn::KnnModel::fit(train, k)?),
            DetectorParams::Lof { k } => FittedModel::Lof(lof::LofModel::fit(train, k)?),
            DetectorParams::Pca { eps } => FittedModel::Pca(pca::PcaModel::fit(train, eps)?),
            DetectorParams::IForest { trees, subsample } => FittedModel::IForest(
                iforest::ForestModel::fit(train, trees, subsample, config.seed)?,
            ),
            DetectorParams::Loda { projections, bins } => FittedModel::Loda(
                loda::LodaModel::fit(
                    train,
                    projections,
                    bins.resolve(train.n_observations()),
                    config.seed,
                )?,
            ),
        })
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            FittedModel::Knn(_) => DetectorKind::Knn,
            FittedModel::Lof(_) => DetectorKind::Lof,
            FittedModel::Pca(_) => DetectorKind::Pca,
            FittedModel::IForest(_) => DetectorKind::IForest,
            FittedModel::Loda(_) => DetectorKind::Loda,
        }
    }

    fn expected_kpis(&self) -> usize {
        match self {
            FittedModel::Knn(m) => m.m_kpis(),
            FittedModel::Lof(m) => m.m_kpis(),
            FittedModel::Pca(m) => m.m_kpis(),
            FittedModel::IForest(m) => m.m_kpis(),
            FittedModel::Loda(m) => m.m_kpis(),
        }
    }

    pub fn score(&self, test: &KpiMatrix) -> Result<ScoreSeries> {
        if test.m_kpis() != self.expected_kpis() {
            return Err(MtadError::DimensionMismatch(format!(
                "model fitted on {} KPIs, test has {}",
                self.expected_kpis(),
                test.m_kpis()
            )));
        }
        let raw = match self {
            FittedModel::Knn(m) => m.score(test),
            FittedModel::Lof(m) => m.score(test),
            FittedModel::Pca(m) => m.score(test),
            FittedModel::IForest(m) => m.score(test),
            FittedModel::Loda(m) => m.score(test),
        };
        Ok(ScoreSeries::from_raw(raw))
    }
}

/// Fits and scores in one call, reporting wall-clock seconds for each phase.
/// Parameters are validated before the clock starts. Timings assume the
/// caller provides a quiet machine; the benchmark pipeline wraps fit and
/// score in its exclusive timing gate instead.
pub fn fit_and_score(
    config: &DetectorConfig,
    entity: &LabeledEntity,
) -> Result<(ScoreSeries, f64, f64)> {
    config.params.validate(entity.train.n_observations())?;
    let t0 = Instant::now();
    let model = FittedModel::fit(config, &entity.train)?;
    let train_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let scores = model.score(&entity.test)?;
    let test_seconds = t1.elapsed().as_secs_f64();
    Ok((scores, train_seconds, test_seconds))
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}
