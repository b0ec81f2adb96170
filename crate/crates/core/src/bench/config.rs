//! Benchmark run configuration: a TOML file resolved into validated grids,
//! dataset sources and threshold options.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::detectors::{DetectorKind, DetectorParams};
use crate::error::{MtadError, Result};
use crate::thresholding::ThresholdStrategy;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: u64,
    #[serde(default = "default_parallelism")]
    parallelism: usize,
    output_dir: PathBuf,
    #[serde(default)]
    preprocessing: Preprocessing,
    #[serde(default)]
    threshold: RawThreshold,
    #[serde(default)]
    datasets: Vec<DatasetSource>,
    #[serde(default)]
    detectors: BTreeMap<String, toml::Table>,
    #[serde(default)]
    external_scores: Vec<ExternalSource>,
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocessing {
    #[serde(default = "default_true")]
    pub drop_constant: bool,
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default)]
    pub ffill: bool,
}

fn default_true() -> bool {
    true
}

impl Default for Preprocessing {
    fn default() -> Self {
        Preprocessing {
            drop_constant: true,
            standardize: true,
            ffill: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThreshold {
    #[serde(default = "default_strategy")]
    strategy: String,
    #[serde(default = "default_risk_q")]
    risk_q: f64,
    #[serde(default = "default_init_quantile")]
    init_quantile: f64,
}

fn default_strategy() -> String {
    "evt".into()
}

fn default_risk_q() -> f64 {
    crate::thresholding::DEFAULT_RISK_Q
}

fn default_init_quantile() -> f64 {
    crate::thresholding::DEFAULT_INIT_QUANTILE
}

impl Default for RawThreshold {
    fn default() -> Self {
        RawThreshold {
            strategy: default_strategy(),
            risk_q: default_risk_q(),
            init_quantile: default_init_quantile(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSource {
    /// Label for the score producer; rows carry detector = "external:<name>".
    pub name: String,
    /// Name of a configured dataset the scores belong to.
    pub dataset: String,
    /// Directory holding one `<entity_id>.csv` per entity, one raw score per
    /// line, aligned with the entity's test rows.
    pub scores_dir: PathBuf,
}

/// How scores turn into thresholds during a run or an evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdOptions {
    pub strategy: ThresholdStrategy,
    pub risk_q: f64,
    pub init_quantile: f64,
    /// Only consulted when strategy is Fixed.
    pub fixed_theta: Option<f64>,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions {
            strategy: ThresholdStrategy::Evt,
            risk_q: crate::thresholding::DEFAULT_RISK_Q,
            init_quantile: crate::thresholding::DEFAULT_INIT_QUANTILE,
            fixed_theta: None,
        }
    }
}

/// A fully resolved benchmark run description.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub seed: u64,
    pub parallelism: usize,
    pub output_dir: PathBuf,
    pub preprocessing: Preprocessing,
    pub threshold: ThresholdOptions,
    pub datasets: Vec<DatasetSource>,
    /// Grid per detector, sorted and deduplicated by canonical param string.
    pub grids: BTreeMap<DetectorKind, Vec<DetectorParams>>,
    pub external: Vec<ExternalSource>,
    /// Verbatim configuration text, echoed into the run metadata.
    pub config_text: String,
}

impl BenchConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| MtadError::Config(e.to_string()))?;

        let strategy = match raw.threshold.strategy.as_str() {
            "evt" => ThresholdStrategy::Evt,
            "search" => ThresholdStrategy::Search,
            other => {
                return Err(MtadError::Config(format!(
                    "threshold.strategy must be \"evt\" or \"search\", got {other:?}"
                )));
            }
        };

        let mut grids = BTreeMap::new();
        for (name, overrides) in &raw.detectors {
            let kind: DetectorKind = name.parse()?;
            grids.insert(kind, build_grid(kind, overrides)?);
        }

        let config = BenchConfig {
            seed: raw.seed,
            parallelism: raw.parallelism,
            output_dir: raw.output_dir,
            preprocessing: raw.preprocessing,
            threshold: ThresholdOptions {
                strategy,
                risk_q: raw.threshold.risk_q,
                init_quantile: raw.threshold.init_quantile,
                fixed_theta: None,
            },
            datasets: raw.datasets,
            grids,
            external: raw.external_scores,
            config_text: text.to_string(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MtadError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(MtadError::Config("no datasets configured".into()));
        }
        if self.grids.is_empty() && self.external.is_empty() {
            return Err(MtadError::Config(
                "configure at least one detector or external score source".into(),
            ));
        }
        if self.parallelism == 0 {
            return Err(MtadError::Config("parallelism must be at least 1".into()));
        }
        let mut names = BTreeSet::new();
        for ds in &self.datasets {
            if ds.name.is_empty() {
                return Err(MtadError::Config("dataset name must be nonempty".into()));
            }
            if !names.insert(ds.name.as_str()) {
                return Err(MtadError::Config(format!(
                    "duplicate dataset name {:?}",
                    ds.name
                )));
            }
        }
        let mut sources = BTreeSet::new();
        for ext in &self.external {
            if !names.contains(ext.dataset.as_str()) {
                return Err(MtadError::Config(format!(
                    "external scores {:?} reference unknown dataset {:?}",
                    ext.name, ext.dataset
                )));
            }
            if ext.name.is_empty() {
                return Err(MtadError::Config(
                    "external score source name must be nonempty".into(),
                ));
            }
            if !sources.insert((ext.dataset.as_str(), ext.name.as_str())) {
                return Err(MtadError::Config(format!(
                    "duplicate external score source {:?} for dataset {:?}",
                    ext.name, ext.dataset
                )));
            }
        }
        Ok(())
    }
}

/// Expands one detector's override table into a grid: each key maps to a
/// value or an array of values, the grid is their cartesian product, and
/// omitted keys keep their defaults. An empty table means the stock grid.
fn build_grid(kind: DetectorKind, overrides: &toml::Table) -> Result<Vec<DetectorParams>> {
    if overrides.is_empty() {
        return Ok(DetectorParams::grid_for(kind));
    }
    let mut axes: Vec<(String, Vec<String>)> = Vec::new();
    let mut keys: Vec<&String> = overrides.keys().collect();
    keys.sort();
    for key in keys {
        let value = &overrides[key];
        let values = match value {
            toml::Value::Array(items) => {
                if items.is_empty() {
                    return Err(MtadError::Config(format!(
                        "empty value list for {kind} parameter {key:?}"
                    )));
                }
                items
                    .iter()
                    .map(|v| scalar_to_string(kind, key, v))
                    .collect::<Result<Vec<_>>>()?
            }
            other => vec![scalar_to_string(kind, key, other)?],
        };
        axes.push((key.clone(), values));
    }

    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in &axes {
        let mut next = Vec::with_capacity(combos.len() * values.len());
        for combo in &combos {
            for value in values {
                let mut extended = combo.clone();
                extended.push((key.clone(), value.clone()));
                next.push(extended);
            }
        }
        combos = next;
    }

    let mut grid = combos
        .into_iter()
        .map(|pairs| DetectorParams::from_pairs(kind, &pairs))
        .collect::<Result<Vec<_>>>()?;
    grid.sort_by_key(|p| p.canonical());
    grid.dedup_by_key(|p| p.canonical());
    Ok(grid)
}

fn scalar_to_string(kind: DetectorKind, key: &str, value: &toml::Value) -> Result<String> {
    match value {
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(format!("{f}")),
        toml::Value::String(s) => Ok(s.clone()),
        other => Err(MtadError::Config(format!(
            "{kind} parameter {key:?} has unsupported value {other}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7
output_dir = "out"

[[datasets]]
name = "synth"
path = "data/synth"

[detectors.knn]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = BenchConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 7);
        assert!(cfg.preprocessing.drop_constant);
        assert!(cfg.preprocessing.standardize);
        assert!(!cfg.preprocessing.ffill);
        assert!(matches!(cfg.threshold.strategy, ThresholdStrategy::Evt));
        assert_eq!(cfg.threshold.risk_q, 1e-3);
        // empty [detectors.knn] table means the stock grid
        let grid = &cfg.grids[&DetectorKind::Knn];
        assert_eq!(grid.len(), 4);
    }

    #[test]
    fn override_grid_is_a_sorted_product() {
        let text = r#"
seed = 1
output_dir = "out"

[[datasets]]
name = "d"
path = "p"

[detectors.iforest]
trees = [200, 100]
subsample = ["auto", 128]
"#;
        let cfg = BenchConfig::from_toml_str(text).unwrap();
        let canon: Vec<String> = cfg.grids[&DetectorKind::IForest]
            .iter()
            .map(|p| p.canonical())
            .collect();
        assert_eq!(
            canon,
            vec![
                "subsample=128,trees=100",
                "subsample=128,trees=200",
                "subsample=auto,trees=100",
                "subsample=auto,trees=200",
            ]
        );
    }

    #[test]
    fn scalar_override_pins_one_axis() {
        let text = r#"
seed = 1
output_dir = "out"

[[datasets]]
name = "d"
path = "p"

[detectors.loda]
projections = 25
"#;
        let cfg = BenchConfig::from_toml_str(text).unwrap();
        let grid = &cfg.grids[&DetectorKind::Loda];
        assert_eq!(grid.len(), 1);
        assert_eq!(grid[0].canonical(), "bins=sturges,projections=25");
    }

    #[test]
    fn bad_inputs_are_rejected() {
        // no datasets
        assert!(BenchConfig::from_toml_str("seed = 1\noutput_dir = \"o\"").is_err());
        // unknown detector
        let text = "seed = 1\noutput_dir = \"o\"\n[[datasets]]\nname = \"d\"\npath = \"p\"\n[detectors.tsne]\n";
        assert!(BenchConfig::from_toml_str(text).is_err());
        // unknown parameter key
        let text = "seed = 1\noutput_dir = \"o\"\n[[datasets]]\nname = \"d\"\npath = \"p\"\n[detectors.knn]\nneighbors = 4\n";
        assert!(BenchConfig::from_toml_str(text).is_err());
        // bad strategy
        let text = "seed = 1\noutput_dir = \"o\"\n[threshold]\nstrategy = \"fixed\"\n[[datasets]]\nname = \"d\"\npath = \"p\"\n[detectors.knn]\n";
        assert!(BenchConfig::from_toml_str(text).is_err());
        // external scores for a dataset that is not configured
        let text = "seed = 1\noutput_dir = \"o\"\n[[datasets]]\nname = \"d\"\npath = \"p\"\n[[external_scores]]\nname = \"m\"\ndataset = \"other\"\nscores_dir = \"s\"\n";
        assert!(BenchConfig::from_toml_str(text).is_err());
        // seed is mandatory
        let text = "output_dir = \"o\"\n[[datasets]]\nname = \"d\"\npath = \"p\"\n[detectors.knn]\n";
        assert!(BenchConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn duplicate_grid_points_collapse() {
        let text = "seed = 1\noutput_dir = \"o\"\n[[datasets]]\nname = \"d\"\npath = \"p\"\n[detectors.knn]\nk = [10, 10, 5]\n";
        let cfg = BenchConfig::from_toml_str(text).unwrap();
        let canon: Vec<String> = cfg.grids[&DetectorKind::Knn]
            .iter()
            .map(|p| p.canonical())
            .collect();
        assert_eq!(canon, vec!["k=10", "k=5"]);
    }
}
