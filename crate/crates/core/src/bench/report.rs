//! Report serialization: the machine-readable CSV table, a per-dataset text
//! summary, the grid audit trail, and run metadata.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{MtadError, Result};

use super::{MetricCell, MetricRow, Report};

const CSV_HEADER: &str = "dataset,entity_scope,detector,params,f1,f1_adj,f1_search,f1_search_adj,auc,theta_evt,theta_search,salience_raw,salience_norm,delay,train_seconds,test_seconds";

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Timings get fixed microsecond precision; everything else prints with the
/// shortest round-trip form.
fn timing(cell: &MetricCell) -> String {
    match cell {
        MetricCell::Value(v) => format!("{v:.6}"),
        na => na.to_string(),
    }
}

fn csv_line(row: &MetricRow) -> String {
    [
        csv_escape(&row.dataset),
        csv_escape(&row.entity_scope),
        csv_escape(&row.detector),
        csv_escape(&row.params),
        csv_escape(&row.f1.to_string()),
        csv_escape(&row.f1_adj.to_string()),
        csv_escape(&row.f1_search.to_string()),
        csv_escape(&row.f1_search_adj.to_string()),
        csv_escape(&row.auc.to_string()),
        csv_escape(&row.theta_evt.to_string()),
        csv_escape(&row.theta_search.to_string()),
        csv_escape(&row.salience_raw.to_string()),
        csv_escape(&row.salience_norm.to_string()),
        csv_escape(&row.delay.to_string()),
        csv_escape(&timing(&row.train_seconds)),
        csv_escape(&timing(&row.test_seconds)),
    ]
    .join(",")
}

/// CSV table for a row slice: header plus one line per row, in the fixed
/// column order.
pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&csv_line(row));
        out.push('\n');
    }
    out
}

fn render_csv(report: &Report) -> String {
    rows_to_csv(&report.rows)
}

fn rounded(cell: &MetricCell) -> String {
    match cell {
        MetricCell::Value(v) => format!("{v:.4}"),
        na => na.to_string(),
    }
}

fn whole(cell: &MetricCell) -> String {
    cell.to_string()
}

/// One aligned table per dataset over the dataset-level rows. Timings are
/// deliberately left out; the CSV carries them.
fn render_summary(report: &Report) -> String {
    const HEADERS: [&str; 9] = [
        "detector",
        "params",
        "f1",
        "f1_adj",
        "f1_search",
        "f1_search_adj",
        "auc",
        "salience_norm",
        "delay",
    ];
    let mut out = String::new();
    let mut datasets: Vec<&str> = report
        .rows
        .iter()
        .filter(|r| r.entity_scope == "all")
        .map(|r| r.dataset.as_str())
        .collect();
    datasets.dedup();

    for (i, ds) in datasets.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "dataset: {ds}");
        let table: Vec<[String; 9]> = report
            .rows
            .iter()
            .filter(|r| r.entity_scope == "all" && r.dataset == *ds)
            .map(|r| {
                [
                    r.detector.clone(),
                    r.params.clone(),
                    rounded(&r.f1),
                    rounded(&r.f1_adj),
                    rounded(&r.f1_search),
                    rounded(&r.f1_search_adj),
                    rounded(&r.auc),
                    rounded(&r.salience_norm),
                    whole(&r.delay),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = HEADERS.iter().map(|h| h.len()).collect();
        for line in &table {
            for (w, cell) in widths.iter_mut().zip(line.iter()) {
                *w = (*w).max(cell.len());
            }
        }
        let fmt_line = |cells: &[String]| -> String {
            let mut line = String::new();
            for (j, cell) in cells.iter().enumerate() {
                if j > 0 {
                    line.push_str("  ");
                }
                let _ = write!(line, "{cell:<width$}", width = widths[j]);
            }
            line.trim_end().to_string()
        };
        let header: Vec<String> = HEADERS.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(out, "{}", fmt_line(&header));
        for line in &table {
            let _ = writeln!(out, "{}", fmt_line(line));
        }
    }
    out
}

fn render_audit(report: &Report) -> String {
    let mut out = String::from("dataset,detector,params,f1_hat\n");
    for a in &report.audit {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            csv_escape(&a.dataset),
            csv_escape(&a.detector),
            csv_escape(&a.params),
            csv_escape(&a.f1_hat.to_string()),
        );
    }
    out
}

fn render_meta(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "version: {}", report.version);
    let _ = writeln!(out, "started_unix: {}", report.started_unix);
    let _ = writeln!(out, "finished_unix: {}", report.finished_unix);
    let _ = writeln!(out, "rows: {}", report.rows.len());
    if !report.notes.is_empty() {
        let _ = writeln!(out, "\nnotes:");
        for note in &report.notes {
            let _ = writeln!(out, "  - {note}");
        }
    }
    let _ = writeln!(out, "\n-- config --");
    out.push_str(&report.config_text);
    if !report.config_text.ends_with('\n') {
        out.push('\n');
    }
    out
}

/// Writes report.csv, summary.txt, grid_audit.csv and run_meta.txt into
/// `dir`. Emitting the same report twice produces byte-identical files.
pub fn emit_report(report: &Report, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| MtadError::io(dir, e))?;
    let put = |name: &str, content: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, content).map_err(|e| MtadError::io(path, e))
    };
    put("report.csv", render_csv(report))?;
    put("summary.txt", render_summary(report))?;
    put("grid_audit.csv", render_audit(report))?;
    put("run_meta.txt", render_meta(report))?;
    Ok(())
}
