//! Acceptance gate: ten checks, one printed pass/fail line each. Slow cases
//! share their computed rows through OnceLocks so the whole target stays
//! inside its time budget.

mod common;

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use mtad_core::bench::{evaluate_scores, grid_search, BenchConfig, GridOutcome, MetricCell, MetricRow, ThresholdOptions};
use mtad_core::data::{
    drop_constant_kpis, inject_anomalies, standardize, write_entity, AnomalyShape, Dataset,
    InjectionSpec, LabelVector,
};
use mtad_core::detectors::{DetectorKind, DetectorParams};
use mtad_core::metrics::{
    adjust_points, cluster_two_1d, compute_salience, precision_recall_f1,
};
use mtad_core::thresholding::{
    apply_threshold, normalize_scores, pot_threshold, search_threshold, PredictionVector,
};

fn criterion(n: usize, name: &str, check: impl FnOnce() -> Result<(), String>) {
    match check() {
        Ok(()) => println!("criterion {n}: PASS - {name}"),
        Err(msg) => {
            println!("criterion {n}: FAIL - {name}: {msg}");
            panic!("criterion {n} ({name}) failed: {msg}");
        }
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

#[test]
fn c01_point_adjustment_dominates() {
    criterion(1, "point adjustment dominates raw metrics", || {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for round in 0..1000 {
            let n = rng.gen_range(1..=500);
            let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.3))).collect();
            let preds: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.3))).collect();
            let labels = LabelVector::new(labels).unwrap();
            let pred = PredictionVector::new(preds).unwrap();
            let raw = precision_recall_f1(&pred, &labels).map_err(|e| e.to_string())?;
            let adjusted = adjust_points(&pred, &labels).map_err(|e| e.to_string())?;
            let adj = precision_recall_f1(&adjusted, &labels).map_err(|e| e.to_string())?;
            ensure(
                adj.precision >= raw.precision && adj.recall >= raw.recall && adj.f1 >= raw.f1,
                format!("dominance broken at round {round}: raw {raw:?} adjusted {adj:?}"),
            )?;
        }
        Ok(())
    });
}

#[test]
fn c02_clustering_matches_naive_oracle() {
    criterion(2, "1-D complete linkage equals the naive oracle", || {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for round in 0..200 {
            let n = rng.gen_range(2..=64);
            // quarter-integer grid keeps arithmetic exact and makes ties common
            let values: Vec<f64> = (0..n)
                .map(|_| f64::from(rng.gen_range(-60i32..=60)) / 4.0)
                .collect();
            let (lo, hi) = cluster_two_1d(&values).map_err(|e| e.to_string())?;
            let (nlo, nhi) = common::naive_complete_linkage_two(&values);
            let (lo, hi) = (common::sorted(&lo), common::sorted(&hi));
            let same = lo == nlo && hi == nhi;
            let swapped = lo == nhi && hi == nlo;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            ensure(
                same || (swapped && (mean(&lo) - mean(&hi)).abs() < 1e-12),
                format!("partition mismatch at round {round}: {lo:?}/{hi:?} vs {nlo:?}/{nhi:?}"),
            )?;
        }
        Ok(())
    });
}

#[test]
fn c03_salience_worked_example() {
    criterion(3, "salience worked example and inverted degenerate case", || {
        let labels = LabelVector::new(vec![1, 1, 1, 0, 0, 0]).unwrap();
        let breakdown = compute_salience(&[0.9, 0.8, 0.2, 0.1, 0.15, 0.7], &labels)
            .map_err(|e| e.to_string())?;
        ensure(
            (breakdown.salience - 0.15385).abs() < 1e-5,
            format!("worked example salience {} not within 1e-5 of 0.15385", breakdown.salience),
        )?;

        // flipping the degenerate all-equal example negates its salience
        let labels = LabelVector::new(vec![1, 1, 0, 0]).unwrap();
        let forward = compute_salience(&[1.0, 1.0, 0.0, 0.0], &labels).map_err(|e| e.to_string())?;
        let inverted = compute_salience(&[0.0, 0.0, 1.0, 1.0], &labels).map_err(|e| e.to_string())?;
        let sigmoid_half = 1.0 / (1.0 + (-0.5f64).exp());
        ensure(
            (forward.salience - sigmoid_half).abs() < 1e-9,
            format!("degenerate salience {} vs {}", forward.salience, sigmoid_half),
        )?;
        ensure(
            (inverted.salience + sigmoid_half).abs() < 1e-9,
            format!("inverted salience {} vs {}", inverted.salience, -sigmoid_half),
        )
    });
}

#[test]
fn c04_pot_tracks_analytic_quantile() {
    criterion(4, "POT threshold tracks the analytic 0.999 quantile", || {
        let analytic = -(1e-3f64).ln(); // Exponential(1) 0.999-quantile
        let mut thetas = Vec::new();
        let mut targets = Vec::new();
        for seed in 0..20u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(400 + seed);
            let sample: Vec<f64> = (0..10_000)
                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                .collect();
            let lo = sample.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = sample.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            targets.push((analytic - lo) / (hi - lo));
            let norm = normalize_scores(&sample).map_err(|e| e.to_string())?;
            let res = pot_threshold(&norm, 1e-3, 0.98).map_err(|e| e.to_string())?;
            thetas.push(res.theta);
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(f64::total_cmp);
            (v[9] + v[10]) / 2.0
        };
        let med_theta = median(&mut thetas);
        let med_target = median(&mut targets);
        ensure(
            (med_theta - med_target).abs() <= 0.15 * med_target,
            format!("median theta {med_theta} not within 15% of normalized quantile {med_target}"),
        )
    });
}

/// The long-segment construction shared by criteria 5 and 10: a 44% anomaly
/// segment where only its first half scores high, plus a small band of hot
/// normal points. Search settles on a high threshold with few FPs; lowering
/// it floods FPs yet point adjustment keeps rescuing the whole segment.
fn issue1_series() -> (Vec<f64>, LabelVector) {
    let mut scores = vec![0.0; 1000];
    let mut labels = vec![0u8; 1000];
    labels[100..540].fill(1);
    scores[0..10].fill(0.95);
    scores[10..100].fill(0.45);
    scores[100..310].fill(0.95);
    // 310..540 stays 0.0: the undetected bulk of the segment
    scores[540..650].fill(0.45);
    scores[650..1000].fill(0.01);
    (scores, LabelVector::new(labels).unwrap())
}

fn fp_count(pred: &PredictionVector, labels: &LabelVector) -> usize {
    pred.iter()
        .zip(labels.iter())
        .filter(|&(p, y)| p == 1 && y == 0)
        .count()
}

#[test]
fn c05_adjustment_inflation_reproduced() {
    criterion(5, "long-segment aF1 stays high while F1 collapses", || {
        let (scores, labels) = issue1_series();
        let segment_share =
            labels.iter().filter(|&y| y == 1).count() as f64 / labels.len() as f64;
        ensure(segment_share >= 0.40, format!("segment covers only {segment_share}"))?;

        let found = search_threshold(&scores, &labels).map_err(|e| e.to_string())?;
        let theta_s = found.theta;
        let base_fp = fp_count(&apply_threshold(&scores, theta_s), &labels);
        ensure(base_fp > 0, "construction needs at least one FP at theta_s")?;

        let mut step = (theta_s * 100.0).round() as i64 - 1;
        while step >= 0 {
            let theta = step as f64 / 100.0;
            let pred = apply_threshold(&scores, theta);
            if fp_count(&pred, &labels) >= 10 * base_fp {
                let raw = precision_recall_f1(&pred, &labels).map_err(|e| e.to_string())?;
                let adjusted = adjust_points(&pred, &labels).map_err(|e| e.to_string())?;
                let adj = precision_recall_f1(&adjusted, &labels).map_err(|e| e.to_string())?;
                ensure(
                    raw.f1 < 0.5,
                    format!("unadjusted F1 {} did not collapse at theta {theta}", raw.f1),
                )?;
                return ensure(
                    adj.f1 >= 0.8,
                    format!("adjusted F1 {} fell below 0.8 at theta {theta}", adj.f1),
                );
            }
            step -= 1;
        }
        Err("FP count never reached 10x the baseline".into())
    });
}

fn pipeline_dataset(name: &str, shapes: Vec<AnomalyShape>) -> Dataset {
    let entity = inject_anomalies(&InjectionSpec {
        n: 2000,
        m: 8,
        anomaly_ratio: 0.05,
        shapes,
        seed: 7,
    })
    .unwrap();
    let entity = drop_constant_kpis(&entity).unwrap().0;
    let entity = standardize(&entity).unwrap().0;
    Dataset::new(name, vec![entity]).unwrap()
}

fn bench_config(seed: u64) -> BenchConfig {
    // the dataset table is mandatory in configs but unused by grid_search
    let text = format!(
        "seed = {seed}\noutput_dir = \"unused\"\nparallelism = 2\n\n[[datasets]]\nname = \"unused\"\npath = \"unused\"\n\n[detectors.knn]\n"
    );
    BenchConfig::from_toml_str(&text).unwrap()
}

fn sanity_outcomes() -> &'static Vec<(DetectorKind, GridOutcome)> {
    static OUTCOMES: OnceLock<Vec<(DetectorKind, GridOutcome)>> = OnceLock::new();
    OUTCOMES.get_or_init(|| {
        let dataset = pipeline_dataset("sanity", vec![AnomalyShape::Spike, AnomalyShape::LevelShift]);
        let config = bench_config(7);
        [DetectorKind::Knn, DetectorKind::Lof, DetectorKind::IForest]
            .into_iter()
            .map(|kind| {
                let grid = DetectorParams::grid_for(kind);
                let outcome = grid_search(kind, &grid, &dataset, &config).unwrap();
                (kind, outcome)
            })
            .collect()
    })
}

fn spike_outcome() -> &'static GridOutcome {
    static OUTCOME: OnceLock<GridOutcome> = OnceLock::new();
    OUTCOME.get_or_init(|| {
        let dataset = pipeline_dataset("spikes", vec![AnomalyShape::Spike]);
        let config = bench_config(7);
        let grid = DetectorParams::grid_for(DetectorKind::Knn);
        grid_search(DetectorKind::Knn, &grid, &dataset, &config).unwrap()
    })
}

#[test]
fn c06_detectors_clear_the_easy_instance() {
    criterion(6, "KNN, LOF and iForest reach searched F1 >= 0.7", || {
        for (kind, outcome) in sanity_outcomes() {
            let f1_hat = outcome
                .dataset_row
                .f1_search
                .value()
                .ok_or_else(|| format!("{kind}: searched F1 unavailable"))?;
            ensure(
                f1_hat >= 0.7,
                format!("{kind} reached only {f1_hat:.4} with {}", outcome.best_params.canonical()),
            )?;
        }
        Ok(())
    });
}

#[test]
fn c07_spikes_are_caught_without_delay() {
    criterion(7, "KNN detects every spike segment immediately", || {
        let outcome = spike_outcome();
        let delay = outcome
            .dataset_row
            .delay
            .value()
            .ok_or("delay cell unavailable")?;
        ensure(
            delay == 0.0,
            format!("total delay {delay} with {}", outcome.best_params.canonical()),
        )
    });
}

#[test]
fn c08_knn_scoring_scales_quadratically() {
    criterion(8, "KNN score time grows ~4x when n doubles", || {
        if std::env::var_os("MTAD_SKIP_PERF").is_some() {
            println!("criterion 8: SKIP - MTAD_SKIP_PERF is set");
            return Ok(());
        }
        let time_for = |n: usize| -> Result<f64, String> {
            let entity = inject_anomalies(&InjectionSpec {
                n,
                m: 8,
                anomaly_ratio: 0.01,
                shapes: vec![AnomalyShape::Spike],
                seed: 8,
            })
            .unwrap();
            let config = mtad_core::detectors::DetectorConfig::new(DetectorParams::Knn { k: 10 }, 8);
            let model = mtad_core::detectors::FittedModel::fit(&config, &entity.train)
                .map_err(|e| e.to_string())?;
            let mut runs = Vec::new();
            for _ in 0..5 {
                let (scored, seconds) =
                    mtad_core::bench::time_phase(|| model.score(&entity.test))
                        .map_err(|e| e.to_string())?;
                scored.map_err(|e| e.to_string())?;
                runs.push(seconds);
            }
            runs.sort_by(f64::total_cmp);
            Ok(runs[2])
        };
        let t2000 = time_for(2000)?;
        let t4000 = time_for(4000)?;
        let ratio = t4000 / t2000;
        ensure(
            (3.0..=6.0).contains(&ratio),
            format!("ratio {ratio:.2} outside [3, 6] (t2000={t2000:.4}s t4000={t4000:.4}s)"),
        )
    });
}

#[test]
fn c09_cli_runs_are_deterministic() {
    criterion(9, "two identical runs differ only in timing columns", || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let data_dir = dir.path().join("data");
        for (i, seed) in [31u64, 32].into_iter().enumerate() {
            let mut entity = inject_anomalies(&InjectionSpec {
                n: 300,
                m: 4,
                anomaly_ratio: 0.05,
                shapes: vec![AnomalyShape::Spike, AnomalyShape::LevelShift],
                seed,
            })
            .unwrap();
            entity.entity_id = format!("machine_{i}");
            write_entity(&data_dir, &entity).map_err(|e| e.to_string())?;
        }

        let run = |label: &str| -> Result<std::path::PathBuf, String> {
            let out = dir.path().join(label);
            let config_path = dir.path().join(format!("{label}.toml"));
            let config = format!(
                "seed = 99\noutput_dir = {out:?}\nparallelism = 2\n\n[[datasets]]\nname = \"demo\"\npath = {data:?}\n\n[detectors.knn]\nk = [5, 10]\n\n[detectors.iforest]\ntrees = 50\nsubsample = 64\n",
                out = out.to_str().unwrap(),
                data = data_dir.to_str().unwrap(),
            );
            std::fs::write(&config_path, config).map_err(|e| e.to_string())?;
            let status = std::process::Command::new(env!("CARGO_BIN_EXE_mtad"))
                .args(["run", "--config"])
                .arg(&config_path)
                .output()
                .map_err(|e| e.to_string())?;
            ensure(
                status.status.success(),
                format!("run failed: {}", String::from_utf8_lossy(&status.stderr)),
            )?;
            Ok(out)
        };
        let first = run("a")?;
        let second = run("b")?;

        let strip_timings = |path: &std::path::Path| -> Result<String, String> {
            let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
            Ok(text
                .lines()
                .map(|line| line.rsplitn(3, ',').nth(2).unwrap_or(line))
                .collect::<Vec<_>>()
                .join("\n"))
        };
        ensure(
            strip_timings(&first.join("report.csv"))? == strip_timings(&second.join("report.csv"))?,
            "report.csv differs beyond timing columns",
        )?;
        for name in ["summary.txt", "grid_audit.csv"] {
            let a = std::fs::read(first.join(name)).map_err(|e| e.to_string())?;
            let b = std::fs::read(second.join(name)).map_err(|e| e.to_string())?;
            ensure(a == b, format!("{name} differs between runs"))?;
        }
        Ok(())
    });
}

#[test]
fn c10_search_never_trails_evt() {
    criterion(10, "searched F1 + 0.02 covers EVT F1 on every row", || {
        let mut rows: Vec<MetricRow> = Vec::new();
        let (scores, labels) = issue1_series();
        rows.push(
            evaluate_scores(&scores, &labels, &ThresholdOptions::default())
                .map_err(|e| e.to_string())?,
        );
        for (_, outcome) in sanity_outcomes() {
            rows.push(outcome.dataset_row.clone());
            rows.extend(outcome.entity_rows.iter().cloned());
        }
        rows.push(spike_outcome().dataset_row.clone());
        rows.extend(spike_outcome().entity_rows.iter().cloned());

        let mut compared = 0;
        for row in &rows {
            let f1_hat = row
                .f1_search
                .value()
                .ok_or_else(|| format!("row {}/{} lacks searched F1", row.detector, row.entity_scope))?;
            // EVT can legitimately fail on a degenerate score distribution;
            // such rows carry an NA reason instead of a number.
            let Some(f1) = row.f1.value() else {
                let MetricCell::Na(_) = row.f1 else {
                    return Err("f1 cell is neither value nor reason".into());
                };
                continue;
            };
            compared += 1;
            ensure(
                f1_hat + 0.02 >= f1,
                format!(
                    "row {}/{}: searched {f1_hat:.4} trails EVT {f1:.4}",
                    row.detector, row.entity_scope
                ),
            )?;
        }
        ensure(compared > 0, "no rows carried both F1 flavors")
    });
}
