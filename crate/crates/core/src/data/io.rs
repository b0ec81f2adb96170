//! CSV reading and writing for entity directories.
//!
//! Layout on disk: `<dataset>/<entity>/{train.csv,test.csv,test_label.csv}`.
//! Matrices are headerless, comma-separated, one observation per row. Labels
//! are one value per line and must be exactly 0 or 1.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::data::{Dataset, KpiMatrix, LabelVector, LabeledEntity};
use crate::error::{MtadError, Result};

/// Knobs applied while loading raw CSVs.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Replace non-finite cells with the previous row's value for that KPI
    /// (0.0 when the first row is affected) instead of failing.
    pub forward_fill: bool,
}

fn parse_cell(
    raw: &str,
    file: &Path,
    line: usize,
    column: usize,
) -> Result<f64> {
    let trimmed = raw.trim();
    trimmed.parse::<f64>().map_err(|_| MtadError::Parse {
        file: file.to_path_buf(),
        line,
        column,
        message: format!("cannot parse {trimmed:?} as a number"),
    })
}

/// Reads a headerless numeric CSV into a matrix.
pub fn read_matrix(path: &Path, opts: LoadOptions) -> Result<KpiMatrix> {
    let file = fs::File::open(path).map_err(|e| MtadError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| MtadError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut row = Vec::new();
        for (col, raw) in line.split(',').enumerate() {
            let mut value = parse_cell(raw, path, lineno, col + 1)?;
            if !value.is_finite() {
                if opts.forward_fill {
                    value = rows.last().map_or(0.0, |prev: &Vec<f64>| prev[col]);
                } else {
                    return Err(MtadError::NonFinite {
                        file: path.to_path_buf(),
                        line: lineno,
                        column: col + 1,
                    });
                }
            }
            row.push(value);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(MtadError::Parse {
                    file: path.to_path_buf(),
                    line: lineno,
                    column: row.len(),
                    message: format!("row has {} fields, expected {}", row.len(), w),
                });
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(MtadError::EmptyInput(format!(
            "{} holds no observations",
            path.display()
        )));
    }
    KpiMatrix::from_rows(&rows)
}

/// Reads a one-value-per-line label file. Values must parse as numbers and
/// be exactly 0 or 1.
pub fn read_labels(path: &Path) -> Result<LabelVector> {
    let file = fs::File::open(path).map_err(|e| MtadError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut labels = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| MtadError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let value = parse_cell(&line, path, lineno, 1)?;
        if value == 0.0 {
            labels.push(0);
        } else if value == 1.0 {
            labels.push(1);
        } else {
            return Err(MtadError::InvalidLabel {
                file: path.to_path_buf(),
                line: lineno,
                value: line.trim().to_string(),
            });
        }
    }
    LabelVector::new(labels)
}

/// Loads one entity directory containing train.csv, test.csv and
/// test_label.csv.
pub fn load_entity(dir: &Path, opts: LoadOptions) -> Result<LabeledEntity> {
    let entity_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let train = read_matrix(&dir.join("train.csv"), opts)?;
    let test = read_matrix(&dir.join("test.csv"), opts)?;
    let labels = read_labels(&dir.join("test_label.csv"))?;
    LabeledEntity::new(entity_id, train, test, labels)
}

/// Lists entity subdirectories of a dataset root, lexicographically by name.
pub fn discover_entity_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| MtadError::io(root, e))?
        .filter_map(|entry| entry.ok())
        .map(|entry| entry.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort_by_key(|p| {
        p.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    Ok(dirs)
}

/// Loads every entity under a dataset root. Entities appear in lexicographic
/// directory order.
pub fn load_dataset(name: &str, root: &Path, opts: LoadOptions) -> Result<Dataset> {
    let dirs = discover_entity_dirs(root)?;
    if dirs.is_empty() {
        return Err(MtadError::EmptyInput(format!(
            "{} has no entity directories",
            root.display()
        )));
    }
    let mut entities = Vec::with_capacity(dirs.len());
    for dir in dirs {
        entities.push(load_entity(&dir, opts)?);
    }
    Dataset::new(name, entities)
}

fn write_matrix(path: &Path, matrix: &KpiMatrix) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| MtadError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in matrix.rows() {
        let mut first = true;
        for v in row {
            if !first {
                write!(w, ",").map_err(|e| MtadError::io(path, e))?;
            }
            // `{}` prints the shortest digits that round-trip to the same f64,
            // so a write/read cycle is bit-exact.
            write!(w, "{v}").map_err(|e| MtadError::io(path, e))?;
            first = false;
        }
        writeln!(w).map_err(|e| MtadError::io(path, e))?;
    }
    w.flush().map_err(|e| MtadError::io(path, e))
}

fn write_labels(path: &Path, labels: &LabelVector) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| MtadError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for v in labels.iter() {
        writeln!(w, "{v}").map_err(|e| MtadError::io(path, e))?;
    }
    w.flush().map_err(|e| MtadError::io(path, e))
}

/// Writes an entity as an entity directory under `parent`, creating
/// `parent/<entity_id>/` with the three CSV files.
pub fn write_entity(parent: &Path, entity: &LabeledEntity) -> Result<PathBuf> {
    let dir = parent.join(&entity.entity_id);
    fs::create_dir_all(&dir).map_err(|e| MtadError::io(&dir, e))?;
    write_matrix(&dir.join("train.csv"), &entity.train)?;
    write_matrix(&dir.join("test.csv"), &entity.test)?;
    write_labels(&dir.join("test_label.csv"), &entity.test_labels)?;
    Ok(dir)
}
