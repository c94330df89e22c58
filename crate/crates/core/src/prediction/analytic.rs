//! Closed-form predictors with known step integrals.

use super::{data_to_noise, Predictor};
use crate::error::{DosError, Result};
use crate::schedule::DoSSchedule;
use crate::state::StateBatch;

/// x_θ ≡ `value`, independent of state and time.
#[derive(Debug, Clone)]
pub struct ConstantData {
    pub value: Vec<f64>,
    pub schedule: DoSSchedule,
}

impl Predictor for ConstantData {
    fn schedule(&self) -> &DoSSchedule {
        &self.schedule
    }

    fn predict_noise(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        let x = self.predict_data(x_t, xhat0, t)?;
        data_to_noise(&x, x_t, xhat0, t, &self.schedule)
    }

    fn predict_data(&self, x_t: &StateBatch, _xhat0: &StateBatch, _t: f64) -> Result<StateBatch> {
        if self.value.len() != x_t.dim() {
            return Err(DosError::Argument(
                "constant predictor dimension mismatch".into(),
            ));
        }
        Ok(StateBatch::broadcast(&self.value, x_t.len()))
    }
}

/// x_θ = `intercept + slope · λ_t`, independent of state.
#[derive(Debug, Clone)]
pub struct LinearInLambda {
    pub intercept: Vec<f64>,
    pub slope: Vec<f64>,
    pub schedule: DoSSchedule,
}

impl Predictor for LinearInLambda {
    fn schedule(&self) -> &DoSSchedule {
        &self.schedule
    }

    fn predict_noise(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        let x = self.predict_data(x_t, xhat0, t)?;
        data_to_noise(&x, x_t, xhat0, t, &self.schedule)
    }

    fn predict_data(&self, x_t: &StateBatch, _xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        if self.intercept.len() != x_t.dim() || self.slope.len() != x_t.dim() {
            return Err(DosError::Argument(
                "linear predictor dimension mismatch".into(),
            ));
        }
        let lambda = self.schedule.lambda(t)?;
        let row: Vec<f64> = self
            .intercept
            .iter()
            .zip(&self.slope)
            .map(|(c, k)| c + k * lambda)
            .collect();
        Ok(StateBatch::broadcast(&row, x_t.len()))
    }
}

/// ε̂ ≡ 0, the baseline every trained model should beat.
#[derive(Debug, Clone)]
pub struct ZeroNoise {
    pub schedule: DoSSchedule,
}

impl Predictor for ZeroNoise {
    fn schedule(&self) -> &DoSSchedule {
        &self.schedule
    }

    fn predict_noise(&self, x_t: &StateBatch, _xhat0: &StateBatch, _t: f64) -> Result<StateBatch> {
        Ok(StateBatch::zeros(x_t.len(), x_t.dim()))
    }
}
