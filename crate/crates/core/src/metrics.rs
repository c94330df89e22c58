//! Sample-quality statistics.

use serde::Serialize;

use crate::error::{DosError, Result};
use crate::state::StateBatch;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn mean_cross(x: &StateBatch, y: &StateBatch) -> f64 {
    let mut total = 0.0;
    for a in x.rows() {
        total += y.rows().map(|b| dist(a, b)).sum::<f64>();
    }
    total / (x.len() * y.len()) as f64
}

fn mean_within(x: &StateBatch) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let a = x.row(i);
        for j in (i + 1)..n {
            total += dist(a, x.row(j));
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// Energy distance `2E|X−Y| − E|X−X'| − E|Y−Y'|` with unbiased within-sample
/// terms.
pub fn energy_distance(x: &StateBatch, y: &StateBatch) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(DosError::Argument(
            "energy distance needs equal dimensions".into(),
        ));
    }
    if x.len() < 2 || y.len() < 2 {
        return Err(DosError::Argument(
            "energy distance needs at least two samples per set".into(),
        ));
    }
    Ok(2.0 * mean_cross(x, y) - mean_within(x) - mean_within(y))
}

/// Worst coordinate-wise relative errors of the sample mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentErrors {
    pub mean: f64,
    pub var: f64,
}

/// Relative moment errors against a target. A zero target mean is measured
/// against the target standard deviation instead.
pub fn moment_errors(samples: &StateBatch, mean: &[f64], var: &[f64]) -> Result<MomentErrors> {
    if mean.len() != samples.dim() || var.len() != samples.dim() {
        return Err(DosError::Argument(
            "moment target dimension mismatch".into(),
        ));
    }
    if samples.len() < 2 {
        return Err(DosError::Argument(
            "moment errors need at least two samples".into(),
        ));
    }
    let (m, v) = (samples.column_mean(), samples.column_var());
    let mut out = MomentErrors {
        mean: 0.0,
        var: 0.0,
    };
    for j in 0..mean.len() {
        let scale = if mean[j] != 0.0 {
            mean[j].abs()
        } else {
            var[j].sqrt()
        };
        out.mean = out.mean.max((m[j] - mean[j]).abs() / scale);
        out.var = out.var.max((v[j] - var[j]).abs() / var[j]);
    }
    Ok(out)
}
