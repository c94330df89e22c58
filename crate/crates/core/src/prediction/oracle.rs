//! Bayes-optimal predictions for a Gaussian target domain.

use serde::{Deserialize, Serialize};

use super::{data_to_noise, Predictor};
use crate::error::{DosError, Result};
use crate::forward::GaussianSpec;
use crate::schedule::DoSSchedule;
use crate::state::StateBatch;

/// Target `q₀ = N(mean, diag(cov))` paired with a fixed source point `x̂₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianTask {
    pub q0: GaussianSpec,
    pub xhat0: Vec<f64>,
    pub schedule: DoSSchedule,
}

impl GaussianTask {
    pub fn new(q0: GaussianSpec, xhat0: Vec<f64>, schedule: DoSSchedule) -> Result<Self> {
        if xhat0.len() != q0.dim() {
            return Err(DosError::Argument("source point dimension mismatch".into()));
        }
        Ok(Self {
            q0,
            xhat0,
            schedule,
        })
    }

    pub fn dim(&self) -> usize {
        self.q0.dim()
    }

    /// `n` copies of the source point.
    pub fn source_batch(&self, n: usize) -> StateBatch {
        StateBatch::broadcast(&self.xhat0, n)
    }

    /// Posterior variance of `x₀` given `x_t`, per coordinate.
    pub fn posterior_var(&self, t: f64) -> Result<Vec<f64>> {
        let p = self.schedule.at(t)?;
        Ok(self
            .q0
            .cov_diag
            .iter()
            .map(|c| c * p.sigma * p.sigma / (p.scale * p.scale * c + p.sigma * p.sigma))
            .collect())
    }

    fn posterior_mean(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        x_t.check_shape(xhat0, "oracle")?;
        if x_t.dim() != self.dim() {
            return Err(DosError::Argument("oracle dimension mismatch".into()));
        }
        if t > self.schedule.t1() {
            return Err(DosError::Singularity {
                t,
                what: "oracle data prediction is only defined up to t1",
            });
        }
        let p = self.schedule.at(t)?;
        let a = p.scale;
        let shift = p.alpha * p.eta;
        let gains: Vec<f64> = self
            .q0
            .cov_diag
            .iter()
            .map(|c| c * a / (a * a * c + p.sigma * p.sigma))
            .collect();
        let mut out = x_t.clone();
        for i in 0..out.len() {
            let xh = xhat0.row(i);
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                let mu = self.q0.mean[j];
                *v = mu + gains[j] * (*v - shift * xh[j] - a * mu);
            }
        }
        Ok(out)
    }
}

/// E[x₀ | x_t] for the task's own source point.
///
/// Defined for `t ≤ t1`; at the pivot the observation carries no information
/// about `x₀` and the prior mean is returned.
pub fn oracle_data_prediction(task: &GaussianTask, x_t: &StateBatch, t: f64) -> Result<StateBatch> {
    task.posterior_mean(x_t, &task.source_batch(x_t.len()), t)
}

impl Predictor for GaussianTask {
    fn schedule(&self) -> &DoSSchedule {
        &self.schedule
    }

    fn predict_noise(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        let x = self.posterior_mean(x_t, xhat0, t)?;
        data_to_noise(&x, x_t, xhat0, t, &self.schedule)
    }

    fn predict_data(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        self.posterior_mean(x_t, xhat0, t)
    }
}
