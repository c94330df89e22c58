//! Noise, data and score predictions and the conversions between them.
//!
//! With `a = α_t (1 − η_t)` and `b = α_t η_t x̂₀` the forward marginal reads
//! `x_t = a x₀ + b + σ_t ε`, which fixes every conversion:
//!
//! ```text
//! x_θ   = (x_t − b − σ_t ε̂) / a
//! score = −(x_t − a x_θ − b) / σ_t² = −ε̂ / σ_t
//! ```

mod analytic;
mod mlp;
mod oracle;
mod train;

use std::sync::atomic::{AtomicUsize, Ordering};

pub use analytic::{ConstantData, LinearInLambda, ZeroNoise};
pub use mlp::{MlpHeader, TinyMlp, TIME_FREQUENCIES};
pub use oracle::{oracle_data_prediction, GaussianTask};
pub use train::{
    held_out_loss, running_mean, train_noise_predictor, TrainConfig, TrainReport, Trainer,
    RUNNING_WINDOW,
};

use crate::error::{DosError, Result};
use crate::schedule::DoSSchedule;
use crate::state::StateBatch;

/// A (possibly learned) model of the noise `ε` that produced `x_t`.
///
/// Implementations must be deterministic and return a batch shaped like `x_t`.
pub trait Predictor: Send + Sync {
    /// The schedule the predictor was built for.
    fn schedule(&self) -> &DoSSchedule;

    /// ε̂(x_t, x̂₀, t).
    fn predict_noise(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch>;

    /// x_θ(x_t, x̂₀, t). Defaults to converting the noise prediction, which is
    /// singular where η_t = 1; predictors with a finite limit there override it.
    fn predict_data(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        let eps = self.predict_noise(x_t, xhat0, t)?;
        noise_to_data(&eps, x_t, xhat0, t, self.schedule())
    }

    /// ∇ log q_t(x_t).
    fn predict_score(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        let x = self.predict_data(x_t, xhat0, t)?;
        data_to_score(&x, x_t, xhat0, t, self.schedule())
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn schedule(&self) -> &DoSSchedule {
        (**self).schedule()
    }
    fn predict_noise(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        (**self).predict_noise(x_t, xhat0, t)
    }
    fn predict_data(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        (**self).predict_data(x_t, xhat0, t)
    }
    fn predict_score(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        (**self).predict_score(x_t, xhat0, t)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn schedule(&self) -> &DoSSchedule {
        (**self).schedule()
    }
    fn predict_noise(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        (**self).predict_noise(x_t, xhat0, t)
    }
    fn predict_data(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        (**self).predict_data(x_t, xhat0, t)
    }
    fn predict_score(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        (**self).predict_score(x_t, xhat0, t)
    }
}

/// Counts top-level predictor invocations (NFE).
pub struct CountingPredictor<P> {
    inner: P,
    calls: AtomicUsize,
}

impl<P: Predictor> CountingPredictor<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    pub fn into_inner(self) -> P {
        self.inner
    }
}

impl<P: Predictor> Predictor for CountingPredictor<P> {
    fn schedule(&self) -> &DoSSchedule {
        self.inner.schedule()
    }
    fn predict_noise(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.predict_noise(x_t, xhat0, t)
    }
    fn predict_data(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.predict_data(x_t, xhat0, t)
    }
    fn predict_score(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.predict_score(x_t, xhat0, t)
    }
}

fn check_inputs(a: &StateBatch, x_t: &StateBatch, xhat0: &StateBatch, what: &str) -> Result<()> {
    a.check_shape(x_t, what)?;
    x_t.check_shape(xhat0, what)
}

/// x_θ = (x_t − α_t η_t x̂₀ − σ_t ε̂) / (α_t (1 − η_t)).
pub fn noise_to_data(
    eps_hat: &StateBatch,
    x_t: &StateBatch,
    xhat0: &StateBatch,
    t: f64,
    s: &DoSSchedule,
) -> Result<StateBatch> {
    check_inputs(eps_hat, x_t, xhat0, "noise_to_data")?;
    let p = s.at(t)?;
    if s.shift.saturated(t) || p.scale <= 0.0 {
        return Err(DosError::Singularity {
            t,
            what: "data prediction needs alpha (1 - eta) > 0",
        });
    }
    let shift = p.alpha * p.eta;
    let mut out = x_t.clone();
    for ((o, e), xh) in out
        .as_mut_slice()
        .iter_mut()
        .zip(eps_hat.as_slice())
        .zip(xhat0.as_slice())
    {
        *o = (*o - shift * xh - p.sigma * e) / p.scale;
    }
    Ok(out)
}

/// ε̂ = (x_t − α_t η_t x̂₀ − α_t (1 − η_t) x_θ) / σ_t.
pub fn data_to_noise(
    x_pred: &StateBatch,
    x_t: &StateBatch,
    xhat0: &StateBatch,
    t: f64,
    s: &DoSSchedule,
) -> Result<StateBatch> {
    check_inputs(x_pred, x_t, xhat0, "data_to_noise")?;
    let p = s.at(t)?;
    if p.sigma <= 0.0 {
        return Err(DosError::Singularity {
            t,
            what: "noise prediction needs sigma > 0",
        });
    }
    let shift = p.alpha * p.eta;
    let mut out = x_t.clone();
    for ((o, xp), xh) in out
        .as_mut_slice()
        .iter_mut()
        .zip(x_pred.as_slice())
        .zip(xhat0.as_slice())
    {
        *o = (*o - shift * xh - p.scale * xp) / p.sigma;
    }
    Ok(out)
}

/// ∇ log q_t = −(x_t − α_t (1 − η_t) x_θ − α_t η_t x̂₀) / σ_t².
pub fn data_to_score(
    x_pred: &StateBatch,
    x_t: &StateBatch,
    xhat0: &StateBatch,
    t: f64,
    s: &DoSSchedule,
) -> Result<StateBatch> {
    check_inputs(x_pred, x_t, xhat0, "data_to_score")?;
    let p = s.at(t)?;
    if p.sigma <= 0.0 {
        return Err(DosError::Singularity {
            t,
            what: "score needs sigma > 0",
        });
    }
    let shift = p.alpha * p.eta;
    let inv_var = 1.0 / (p.sigma * p.sigma);
    let mut out = x_t.clone();
    for ((o, xp), xh) in out
        .as_mut_slice()
        .iter_mut()
        .zip(x_pred.as_slice())
        .zip(xhat0.as_slice())
    {
        *o = -(*o - p.scale * xp - shift * xh) * inv_var;
    }
    Ok(out)
}

/// Monte Carlo noise-prediction loss `mean_i ‖ε̂_i − ε_i‖²`.
pub fn noise_loss(eps_hat: &StateBatch, eps: &StateBatch) -> f64 {
    let sq: f64 = eps_hat
        .as_slice()
        .iter()
        .zip(eps.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    sq / eps.len() as f64
}
