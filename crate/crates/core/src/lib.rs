//! Benchmark toolkit for multivariate KPI anomaly detection.
//!
//! The crate bundles the pieces needed to run a controlled comparison of
//! classical detectors on entity-structured KPI datasets: data loading and
//! preprocessing, five detectors, score normalization and thresholding,
//! an evaluation metric suite, and a benchmark orchestrator with CSV
//! reporting. The `mtad` binary exposes all of it on the command line.

pub mod bench;
pub mod data;
pub mod detectors;
pub mod error;
pub mod metrics;
pub mod thresholding;

pub use error::{MtadError, Result};
