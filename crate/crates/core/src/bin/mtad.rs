use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use mtad_core::bench::{self, BenchConfig, ThresholdOptions};
use mtad_core::data::{
    inject_anomalies, read_matrix, write_entity, AnomalyShape, InjectionSpec, LoadOptions,
};
use mtad_core::detectors::{DetectorConfig, DetectorKind, DetectorParams, FittedModel};
use mtad_core::thresholding::{ThresholdStrategy, DEFAULT_INIT_QUANTILE, DEFAULT_RISK_Q};
use mtad_core::{MtadError, Result};

#[derive(Parser)]
#[command(name = "mtad", version, about = "Benchmark toolkit for multivariate KPI anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the benchmark described by a TOML config and write its report.
    Run(RunArgs),
    /// Fit one detector on a train CSV and score a test CSV.
    Detect(DetectArgs),
    /// Evaluate a raw score file against labels and print one metric row.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic labeled dataset.
    Gen(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Benchmark config (TOML)
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    /// Detector kind: knn, lof, pca, iforest, loda
    #[arg(long)]
    detector: String,
    /// Training KPI matrix (CSV, one observation per row)
    #[arg(long)]
    train: PathBuf,
    /// Test KPI matrix (CSV, same column count)
    #[arg(long)]
    test: PathBuf,
    /// Output file, one raw score per line
    #[arg(long)]
    out: PathBuf,
    /// Hyperparameter override as key=value; repeatable
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Seed for the stochastic detectors
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Raw anomaly scores, one per line
    #[arg(long)]
    scores: PathBuf,
    /// Ground-truth labels, one 0/1 per line
    #[arg(long)]
    labels: PathBuf,
    /// Threshold strategy: evt, search, or fixed
    #[arg(long, default_value = "evt")]
    strategy: String,
    /// EVT risk level
    #[arg(long, default_value_t = DEFAULT_RISK_Q)]
    risk_q: f64,
    /// EVT initial quantile
    #[arg(long, default_value_t = DEFAULT_INIT_QUANTILE)]
    init_quantile: f64,
    /// Threshold for the fixed strategy, in normalized score space
    #[arg(long)]
    theta: Option<f64>,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Generator spec (TOML): n, m, anomaly_ratio, shapes, seed, entities
    #[arg(long)]
    spec: PathBuf,
    /// Directory to write entity subdirectories into
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenSpec {
    n: usize,
    m: usize,
    anomaly_ratio: f64,
    shapes: Vec<String>,
    seed: u64,
    #[serde(default = "one")]
    entities: usize,
}

fn one() -> usize {
    1
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Detect(args) => cmd_detect(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Gen(args) => cmd_gen(&args),
    }
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let config = BenchConfig::from_toml_file(&args.config)?;
    let report = bench::run_benchmark(&config)?;
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    println!(
        "wrote {} rows to {}",
        report.rows.len(),
        config.output_dir.display()
    );
    Ok(())
}

fn cmd_detect(args: &DetectArgs) -> Result<()> {
    let kind: DetectorKind = args.detector.parse()?;
    let mut pairs = Vec::with_capacity(args.params.len());
    for raw in &args.params {
        let (key, value) = raw.split_once('=').ok_or_else(|| {
            MtadError::InvalidParam(format!("--param {raw:?} is not key=value"))
        })?;
        pairs.push((key.to_string(), value.to_string()));
    }
    let params = DetectorParams::from_pairs(kind, &pairs)?;

    let train = read_matrix(&args.train, LoadOptions::default())?;
    let test = read_matrix(&args.test, LoadOptions::default())?;
    let model = FittedModel::fit(&DetectorConfig::new(params, args.seed), &train)?;
    let series = model.score(&test)?;

    let file = fs::File::create(&args.out).map_err(|e| MtadError::io(&args.out, e))?;
    let mut w = BufWriter::new(file);
    for score in &series.raw {
        writeln!(w, "{score}").map_err(|e| MtadError::io(&args.out, e))?;
    }
    w.flush().map_err(|e| MtadError::io(&args.out, e))?;
    println!(
        "scored {} points with {} ({})",
        series.len(),
        kind,
        params.canonical()
    );
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let strategy = match args.strategy.as_str() {
        "evt" => ThresholdStrategy::Evt,
        "search" => ThresholdStrategy::Search,
        "fixed" => ThresholdStrategy::Fixed,
        other => {
            return Err(MtadError::InvalidParam(format!(
                "unknown strategy {other:?}, expected evt, search, or fixed"
            )))
        }
    };
    if strategy == ThresholdStrategy::Fixed && args.theta.is_none() {
        return Err(MtadError::InvalidParam(
            "--strategy fixed requires --theta".into(),
        ));
    }
    let opts = ThresholdOptions {
        strategy,
        risk_q: args.risk_q,
        init_quantile: args.init_quantile,
        fixed_theta: args.theta,
    };
    let row = bench::evaluate_score_files(&args.scores, &args.labels, &opts)?;
    let csv = bench::rows_to_csv(std::slice::from_ref(&row));
    match &args.out {
        Some(path) => fs::write(path, csv).map_err(|e| MtadError::io(path, e))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec).map_err(|e| MtadError::io(&args.spec, e))?;
    let spec: GenSpec =
        toml::from_str(&text).map_err(|e| MtadError::Config(format!("generator spec: {e}")))?;
    if spec.entities == 0 {
        return Err(MtadError::InvalidParam("entities must be positive".into()));
    }
    let shapes = spec
        .shapes
        .iter()
        .map(|s| s.parse::<AnomalyShape>())
        .collect::<Result<Vec<_>>>()?;

    for i in 0..spec.entities {
        let mut entity = inject_anomalies(&InjectionSpec {
            n: spec.n,
            m: spec.m,
            anomaly_ratio: spec.anomaly_ratio,
            shapes: shapes.clone(),
            seed: spec.seed.wrapping_add(i as u64),
        })?;
        if spec.entities > 1 {
            entity.entity_id = format!("synthetic_{i}");
        }
        let dir = write_entity(&args.out, &entity)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
