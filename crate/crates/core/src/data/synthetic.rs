//! Seeded synthetic KPI generator: correlated AR(1) background plus injected
//! anomaly ranges of configurable shapes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::data::{KpiMatrix, LabelVector, LabeledEntity};
use crate::error::{MtadError, Result};

const PHI_LATENT: f64 = 0.9;
const PHI_IDIO: f64 = 0.8;
const IDIO_WEIGHT: f64 = 0.5;
const SPIKE_SIGMAS: f64 = 8.0;
const SHIFT_SIGMAS: f64 = 4.0;
const LEVEL_SHIFT_LEN: usize = 20;

/// Anomaly shapes the generator can inject. Variant order fixes the
/// round-robin order used when several shapes share the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AnomalyShape {
    /// One point at +8 sigma.
    Spike,
    /// Twenty points at +4 sigma.
    LevelShift,
    /// A run of at least 10% of n at +4 sigma.
    LongSegment,
}

impl std::str::FromStr for AnomalyShape {
    type Err = MtadError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spike" => Ok(AnomalyShape::Spike),
            "level_shift" => Ok(AnomalyShape::LevelShift),
            "long_segment" => Ok(AnomalyShape::LongSegment),
            other => Err(MtadError::InvalidParam(format!(
                "unknown anomaly shape {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for AnomalyShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            AnomalyShape::Spike => "spike",
            AnomalyShape::LevelShift => "level_shift",
            AnomalyShape::LongSegment => "long_segment",
        };
        f.write_str(name)
    }
}

/// Parameters for [`inject_anomalies`].
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSpec {
    pub n: usize,
    pub m: usize,
    pub anomaly_ratio: f64,
    pub shapes: Vec<AnomalyShape>,
    pub seed: u64,
}

impl InjectionSpec {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(MtadError::InvalidParam(
                "n and m must both be positive".into(),
            ));
        }
        if !(self.anomaly_ratio > 0.0 && self.anomaly_ratio < 1.0) {
            return Err(MtadError::InvalidParam(format!(
                "anomaly_ratio {} is not in (0,1)",
                self.anomaly_ratio
            )));
        }
        if (self.n as f64) * self.anomaly_ratio < 1.0 {
            return Err(MtadError::InvalidParam(format!(
                "n*anomaly_ratio = {} leaves no room for a single anomalous point",
                self.n as f64 * self.anomaly_ratio
            )));
        }
        if self.shapes.is_empty() {
            return Err(MtadError::InvalidParam(
                "at least one anomaly shape is required".into(),
            ));
        }
        Ok(())
    }
}

/// Splits the anomaly budget into per-range lengths, visiting the requested
/// shapes round robin until the budget is exactly consumed. The last range of
/// a round may be truncated to whatever budget remains.
fn plan_ranges(spec: &InjectionSpec, budget: usize) -> Vec<(AnomalyShape, usize)> {
    let mut shapes = spec.shapes.clone();
    shapes.sort();
    shapes.dedup();
    let mass = (spec.n as f64) * spec.anomaly_ratio;
    let long_len = ((0.1 * spec.n as f64).round() as usize)
        .max((0.5 * mass).ceil() as usize)
        .min(budget);
    let mut plan = Vec::new();
    let mut remaining = budget;
    let mut turn = 0usize;
    while remaining > 0 {
        let shape = shapes[turn % shapes.len()];
        let want = match shape {
            AnomalyShape::Spike => 1,
            AnomalyShape::LevelShift => LEVEL_SHIFT_LEN,
            AnomalyShape::LongSegment => long_len,
        };
        let take = want.min(remaining);
        plan.push((shape, take));
        remaining -= take;
        turn += 1;
    }
    plan
}

/// Places `k` ranges of the given lengths inside `0..n` with at least one
/// normal point between consecutive ranges. Free slack is spread across the
/// k+1 gaps by sorting k uniform cut positions, so placement is a pure
/// function of the RNG stream.
fn place_ranges(
    rng: &mut ChaCha20Rng,
    n: usize,
    lengths: &[usize],
) -> Result<Vec<(usize, usize)>> {
    let k = lengths.len();
    let body: usize = lengths.iter().sum::<usize>() + (k - 1);
    let free = n.checked_sub(body).ok_or_else(|| {
        MtadError::InvalidParam(format!(
            "cannot place {k} separated anomaly ranges totalling {} points in {n} observations",
            body - (k - 1)
        ))
    })?;
    let mut cuts: Vec<usize> = (0..k).map(|_| rng.gen_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut gaps = Vec::with_capacity(k + 1);
    let mut prev = 0usize;
    for &c in &cuts {
        gaps.push(c - prev);
        prev = c;
    }
    gaps.push(free - prev);
    let mut ranges = Vec::with_capacity(k);
    let mut pos = gaps[0];
    for (i, &len) in lengths.iter().enumerate() {
        ranges.push((pos, pos + len));
        pos += len;
        if i + 1 < k {
            pos += 1 + gaps[i + 1];
        }
    }
    Ok(ranges)
}

fn ar1_chain(rng: &mut ChaCha20Rng, len: usize, phi: f64) -> Vec<f64> {
    let stationary_std = (1.0 / (1.0 - phi * phi)).sqrt();
    let mut out = Vec::with_capacity(len);
    let init: f64 = rng.sample(StandardNormal);
    out.push(init * stationary_std);
    for t in 1..len {
        let eps: f64 = rng.sample(StandardNormal);
        out.push(phi * out[t - 1] + eps);
    }
    out
}

/// Generates one synthetic entity: a clean train split and a test split with
/// anomalies injected per `spec`. Identical specs produce identical output.
///
/// Background model: a shared AR(1) latent factor plus per-KPI AR(1) noise,
/// `x[t][j] = a[j]*z[t] + 0.5*w[j][t]`, which gives smooth, cross-correlated
/// KPIs. Injection adds a positive offset scaled by the analytic stationary
/// standard deviation of each KPI.
pub fn inject_anomalies(spec: &InjectionSpec) -> Result<LabeledEntity> {
    spec.validate()?;
    let budget = ((spec.n as f64) * spec.anomaly_ratio).round() as usize;
    let budget = budget.max(1);
    let plan = plan_ranges(spec, budget);

    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let amplitudes: Vec<f64> = (0..spec.m).map(|_| rng.gen_range(0.5..1.0)).collect();
    let latent = ar1_chain(&mut rng, 2 * spec.n, PHI_LATENT);
    let idio: Vec<Vec<f64>> = (0..spec.m)
        .map(|_| ar1_chain(&mut rng, 2 * spec.n, PHI_IDIO))
        .collect();

    let latent_var = 1.0 / (1.0 - PHI_LATENT * PHI_LATENT);
    let idio_var = 1.0 / (1.0 - PHI_IDIO * PHI_IDIO);
    let sigmas: Vec<f64> = amplitudes
        .iter()
        .map(|a| (a * a * latent_var + IDIO_WEIGHT * IDIO_WEIGHT * idio_var).sqrt())
        .collect();

    let mut values = Vec::with_capacity(2 * spec.n * spec.m);
    for t in 0..2 * spec.n {
        for j in 0..spec.m {
            values.push(amplitudes[j] * latent[t] + IDIO_WEIGHT * idio[j][t]);
        }
    }
    let (train_values, test_values) = values.split_at(spec.n * spec.m);
    let train = KpiMatrix::new(train_values.to_vec(), spec.n, spec.m)?;
    let mut test_values = test_values.to_vec();

    let lengths: Vec<usize> = plan.iter().map(|&(_, len)| len).collect();
    let ranges = place_ranges(&mut rng, spec.n, &lengths)?;
    let mut labels = vec![0u8; spec.n];
    for (&(shape, _), &(start, end)) in plan.iter().zip(&ranges) {
        let sigma_mult = match shape {
            AnomalyShape::Spike => SPIKE_SIGMAS,
            AnomalyShape::LevelShift | AnomalyShape::LongSegment => SHIFT_SIGMAS,
        };
        for t in start..end {
            labels[t] = 1;
            for j in 0..spec.m {
                test_values[t * spec.m + j] += sigma_mult * sigmas[j];
            }
        }
    }

    let test = KpiMatrix::new(test_values, spec.n, spec.m)?;
    LabeledEntity::new("synthetic", train, test, LabelVector::new(labels)?)
}
