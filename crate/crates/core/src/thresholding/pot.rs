//! Peaks-over-threshold tail fitting for automatic thresholds.
//!
//! The batch construction: take the empirical `init_quantile` of the
//! normalized scores as the initial threshold t, fit a Generalized Pareto
//! Distribution to the excesses above t, and extrapolate the quantile at the
//! requested risk. GPD parameters come from Grimshaw's reduction of the
//! two-parameter likelihood to a one-dimensional root search, with a
//! method-of-moments fallback when no likelihood root brackets.

use crate::error::{MtadError, Result};
use crate::thresholding::{EvtParams, ThresholdResult, ThresholdStrategy};

const N_MIN: usize = 10;
const QUANTILE_FLOOR: f64 = 0.90;
const QUANTILE_STEP: f64 = 0.01;
const GRID_POINTS: usize = 100;
const BISECT_ITERS: usize = 80;
/// |gamma| below this uses the exponential-limit quantile formula.
const GAMMA_ZERO_TOL: f64 = 1e-9;

/// Linear-interpolation empirical quantile of pre-sorted values.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean of 1/(1+x*y) over the excesses.
fn grimshaw_u(x: f64, y: &[f64]) -> f64 {
    y.iter().map(|&v| 1.0 / (1.0 + x * v)).sum::<f64>() / y.len() as f64
}

/// 1 + mean of ln(1+x*y) over the excesses.
fn grimshaw_v(x: f64, y: &[f64]) -> f64 {
    1.0 + y.iter().map(|&v| (1.0 + x * v).ln()).sum::<f64>() / y.len() as f64
}

fn grimshaw_w(x: f64, y: &[f64]) -> f64 {
    grimshaw_u(x, y) * grimshaw_v(x, y) - 1.0
}

/// Bisects w inside a sign-changing bracket.
fn bisect(y: &[f64], mut a: f64, mut b: f64, wa: f64) -> f64 {
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (a + b);
        let wm = grimshaw_w(mid, y);
        if wm == 0.0 {
            return mid;
        }
        if (wm > 0.0) == (wa > 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Scans a fixed grid over [a,b] for sign changes of w and refines each
/// bracket. `log_spaced` grids handle intervals spanning many decades.
fn scan_roots(y: &[f64], a: f64, b: f64, log_spaced: bool, roots: &mut Vec<f64>) {
    // negated so NaN bounds also bail out
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(a < b) {
        return;
    }
    let point = |i: usize| -> f64 {
        let frac = i as f64 / (GRID_POINTS - 1) as f64;
        if log_spaced {
            a * (b / a).powf(frac)
        } else {
            a + frac * (b - a)
        }
    };
    let mut prev_x = point(0);
    let mut prev_w = grimshaw_w(prev_x, y);
    for i in 1..GRID_POINTS {
        let x = point(i);
        let w = grimshaw_w(x, y);
        if prev_w == 0.0 {
            roots.push(prev_x);
        } else if w != 0.0 && (prev_w > 0.0) != (w > 0.0) {
            roots.push(bisect(y, prev_x, x, prev_w));
        }
        prev_x = x;
        prev_w = w;
    }
    if prev_w == 0.0 {
        roots.push(prev_x);
    }
}

/// GPD log-likelihood of excesses under (gamma, sigma); None when the
/// parameters put any excess outside the support.
fn gpd_log_likelihood(y: &[f64], gamma: f64, sigma: f64) -> Option<f64> {
    if sigma <= 0.0 || !sigma.is_finite() || !gamma.is_finite() {
        return None;
    }
    let n = y.len() as f64;
    if gamma == 0.0 {
        let sum: f64 = y.iter().sum();
        return Some(-n * sigma.ln() - sum / sigma);
    }
    let mut sum = 0.0;
    for &v in y {
        let z = 1.0 + gamma * v / sigma;
        if z <= 0.0 {
            return None;
        }
        sum += z.ln();
    }
    Some(-n * sigma.ln() - (1.0 + 1.0 / gamma) * sum)
}

/// Fits (gamma, sigma) to the excesses.
fn fit_gpd(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let y_min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut roots = Vec::new();
    if y_max > y_min {
        let eps = 1e-8 / y_max;
        // negative-gamma branch: x in (-1/y_max, 0)
        scan_roots(y, -(1.0 - 1e-8) / y_max, -eps, false, &mut roots);
        // positive-gamma branch: x in (0, 2*(mean-min)/min^2]
        let hi = 2.0 * (mean - y_min) / (y_min * y_min);
        scan_roots(y, eps, hi, true, &mut roots);
    }

    if roots.is_empty() {
        // method of moments; exponential fit if even that degenerates
        let var = y.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        if var > 0.0 {
            let r = mean * mean / var;
            let gamma = 0.5 * (1.0 - r);
            let sigma = 0.5 * mean * (1.0 + r);
            if gpd_log_likelihood(y, gamma, sigma).is_some() {
                return (gamma, sigma);
            }
        }
        return (0.0, mean);
    }

    let mut best = (0.0, mean);
    let mut best_ll = gpd_log_likelihood(y, 0.0, mean).expect("positive mean excess");
    for x in roots {
        let gamma = grimshaw_v(x, y) - 1.0;
        let sigma = gamma / x;
        if let Some(ll) = gpd_log_likelihood(y, gamma, sigma) {
            if ll > best_ll {
                best_ll = ll;
                best = (gamma, sigma);
            }
        }
    }
    best
}

/// Computes the automatic threshold for a normalized score series at the
/// given risk, starting the tail at the empirical `init_quantile` and
/// lowering it in 0.01 steps (not below 0.90) until at least 10 excesses
/// exist.
pub fn pot_threshold(normalized: &[f64], risk_q: f64, init_quantile: f64) -> Result<ThresholdResult> {
    if normalized.is_empty() {
        return Err(MtadError::EmptyInput("score series is empty".into()));
    }
    if normalized.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
        return Err(MtadError::InvalidParam(
            "tail fitting expects normalized scores in [0,1]".into(),
        ));
    }
    if !(risk_q > 0.0 && risk_q < 1.0) {
        return Err(MtadError::InvalidParam(format!(
            "risk {risk_q} is not in (0,1)"
        )));
    }
    if !(init_quantile > 0.5 && init_quantile < 1.0) {
        return Err(MtadError::InvalidParam(format!(
            "initial quantile {init_quantile} is not in (0.5,1)"
        )));
    }
    let mut sorted = normalized.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(MtadError::ConstantScores);
    }

    let n = normalized.len();
    let mut quantile = init_quantile;
    let (t, used_quantile, excesses) = loop {
        let t = quantile_sorted(&sorted, quantile);
        let excesses: Vec<f64> = sorted
            .iter()
            .rev()
            .take_while(|&&s| s > t)
            .map(|&s| s - t)
            .collect();
        if excesses.len() >= N_MIN {
            break (t, quantile, excesses);
        }
        if quantile <= QUANTILE_FLOOR + 1e-12 {
            return Err(MtadError::InsufficientTailData {
                required: N_MIN,
                quantile,
            });
        }
        quantile = (quantile - QUANTILE_STEP).max(QUANTILE_FLOOR);
    };

    let (gamma, sigma) = fit_gpd(&excesses);
    let ratio = risk_q * n as f64 / excesses.len() as f64;
    let theta = if gamma.abs() < GAMMA_ZERO_TOL {
        t - sigma * ratio.ln()
    } else {
        t + sigma / gamma * (ratio.powf(-gamma) - 1.0)
    };
    Ok(ThresholdResult {
        theta: theta.clamp(0.0, 1.0),
        strategy: ThresholdStrategy::Evt,
        evt_params: Some(EvtParams {
            init_quantile: used_quantile,
            risk_q,
            gamma_hat: gamma,
            sigma_hat: sigma,
            n_excesses: excesses.len(),
        }),
        search_f1: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thresholding::normalize_scores;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, Exp1};

    fn exp_sample(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n).map(|_| Exp1.sample(&mut rng)).collect()
    }

    #[test]
    fn recovers_exponential_tail_quantile() {
        let raw = exp_sample(42, 10_000);
        let normalized = normalize_scores(&raw).unwrap();
        let res = pot_threshold(&normalized, 1e-3, 0.98).unwrap();
        let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let analytic = (-(1e-3f64).ln() - min) / (max - min);
        let rel = (res.theta - analytic).abs() / analytic;
        assert!(rel < 0.2, "theta {} vs analytic {analytic}", res.theta);
        let params = res.evt_params.unwrap();
        assert_eq!(params.n_excesses, 200);
        assert_eq!(params.init_quantile, 0.98);
    }

    #[test]
    fn higher_risk_means_lower_threshold() {
        let normalized = normalize_scores(&exp_sample(7, 10_000)).unwrap();
        let loose = pot_threshold(&normalized, 1e-2, 0.98).unwrap().theta;
        let tight = pot_threshold(&normalized, 1e-3, 0.98).unwrap().theta;
        assert!(loose <= tight);
    }

    #[test]
    fn deterministic_for_identical_input() {
        let normalized = normalize_scores(&exp_sample(3, 5_000)).unwrap();
        let a = pot_threshold(&normalized, 1e-3, 0.98).unwrap();
        let b = pot_threshold(&normalized, 1e-3, 0.98).unwrap();
        assert_eq!(a.theta.to_bits(), b.theta.to_bits());
    }

    #[test]
    fn constant_scores_are_rejected() {
        assert!(matches!(
            pot_threshold(&[0.3; 100], 1e-3, 0.98),
            Err(MtadError::ConstantScores)
        ));
    }

    #[test]
    fn quantile_lowering_bottoms_out_at_090() {
        // 20 distinct values: even at quantile 0.90 only 2 exceed it
        let scores: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        match pot_threshold(&scores, 1e-3, 0.98) {
            Err(MtadError::InsufficientTailData { required, quantile }) => {
                assert_eq!(required, 10);
                assert!((quantile - 0.90).abs() < 1e-9);
            }
            other => panic!("expected insufficient tail data, got {other:?}"),
        }
    }

    #[test]
    fn quantile_lowering_recovers_enough_excesses() {
        // 120 points: quantile 0.98 leaves 2 excesses, 0.90 leaves 12
        let scores: Vec<f64> = (0..120).map(|i| i as f64 / 119.0).collect();
        let res = pot_threshold(&scores, 1e-2, 0.98).unwrap();
        let params = res.evt_params.unwrap();
        assert!(params.n_excesses >= 10);
        assert!(params.init_quantile < 0.98);
    }

    #[test]
    fn out_of_range_scores_are_rejected() {
        assert!(pot_threshold(&[0.5, 1.5], 1e-3, 0.98).is_err());
        assert!(pot_threshold(&[0.5, 0.6], 2.0, 0.98).is_err());
        assert!(pot_threshold(&[0.5, 0.6], 1e-3, 0.3).is_err());
    }

    #[test]
    fn uniform_tail_gets_negative_gamma() {
        // uniform excesses have a finite endpoint: gamma should fit negative
        let scores: Vec<f64> = (0..2000).map(|i| i as f64 / 1999.0).collect();
        let res = pot_threshold(&scores, 1e-3, 0.98).unwrap();
        let params = res.evt_params.unwrap();
        assert!(params.gamma_hat < 0.0, "gamma {}", params.gamma_hat);
        // extrapolated threshold stays at or below the finite endpoint
        assert!(res.theta <= 1.0);
    }
}
