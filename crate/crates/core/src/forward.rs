//! The forward domain-shift diffusion.
//!
//! The mean drifts from the target sample `x₀` toward the source sample `x̂₀`
//! while the variance-preserving noise schedule decays it:
//!
//! ```text
//! x_t = α_t (η_t x̂₀ + (1 − η_t) x₀) + σ_t ε
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{DosError, Result};
use crate::noise::NoiseStreams;
use crate::schedule::DoSSchedule;
use crate::state::StateBatch;

/// Diagonal Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub cov_diag: Vec<f64>,
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, cov_diag: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != cov_diag.len() {
            return Err(DosError::Argument(format!(
                "gaussian mean/cov lengths {} and {}",
                mean.len(),
                cov_diag.len()
            )));
        }
        if cov_diag.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(DosError::Argument(
                "covariance entries must be positive".into(),
            ));
        }
        Ok(Self { mean, cov_diag })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// One draw per noise stream.
    pub fn sample(&self, noise: &mut NoiseStreams) -> StateBatch {
        let mut z = noise.standard_normal(self.dim());
        for i in 0..z.len() {
            for ((v, m), c) in z.row_mut(i).iter_mut().zip(&self.mean).zip(&self.cov_diag) {
                *v = m + c.sqrt() * *v;
            }
        }
        z
    }
}

/// η x̂₀ + (1 − η) x₀.
pub fn domain_shift_mean(x0: &StateBatch, xhat0: &StateBatch, eta: f64) -> Result<StateBatch> {
    x0.check_shape(xhat0, "domain shift")?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(DosError::Argument(format!(
            "eta must lie in [0, 1], got {eta}"
        )));
    }
    if eta == 0.0 {
        return Ok(x0.clone());
    }
    if eta == 1.0 {
        return Ok(xhat0.clone());
    }
    Ok(x0.zip_map(xhat0, |a, b| eta * b + (1.0 - eta) * a))
}

/// Draw `x_t` from the forward marginal. Returns `(x_t, ε)`.
pub fn sample_marginal(
    x0: &StateBatch,
    xhat0: &StateBatch,
    t: f64,
    s: &DoSSchedule,
    noise: &mut NoiseStreams,
) -> Result<(StateBatch, StateBatch)> {
    x0.check_shape(xhat0, "sample_marginal")?;
    let p = s.at(t)?;
    let eps = noise.standard_normal(x0.dim());
    let mut x = if p.keep == 0.0 {
        xhat0.scaled(p.alpha)
    } else {
        StateBatch::combine(&[(p.alpha * p.eta, xhat0), (p.scale, x0)])
    };
    x.axpy(p.sigma, &eps);
    Ok((x, eps))
}

/// Training input and regression target for the noise-prediction loss.
///
/// Identical to [`sample_marginal`]; the drawn ε is the target.
pub fn training_pair(
    x0: &StateBatch,
    xhat0: &StateBatch,
    t: f64,
    s: &DoSSchedule,
    noise: &mut NoiseStreams,
) -> Result<(StateBatch, StateBatch)> {
    sample_marginal(x0, xhat0, t, s, noise)
}

/// Coefficients of one forward transition `t_prev → t`:
/// `x_t = decay·x_prev + shift·(x̂₀ − x₀) + std·z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionCoefficients {
    pub decay: f64,
    pub shift: f64,
    pub std: f64,
}

pub fn transition_coefficients(
    t_prev: f64,
    t: f64,
    s: &DoSSchedule,
) -> Result<TransitionCoefficients> {
    let (p, q) = (s.at(t_prev)?, s.at(t)?);
    if t < t_prev {
        return Err(DosError::Argument(format!(
            "transition must move forward in time: {t_prev} -> {t}"
        )));
    }
    let decay = q.alpha / p.alpha;
    Ok(TransitionCoefficients {
        decay,
        shift: q.alpha * (q.eta - p.eta),
        std: (1.0 - decay * decay).max(0.0).sqrt(),
    })
}

/// One forward transition step.
pub fn sample_transition(
    x_prev: &StateBatch,
    x0: &StateBatch,
    xhat0: &StateBatch,
    t_prev: f64,
    t: f64,
    s: &DoSSchedule,
    noise: &mut NoiseStreams,
) -> Result<StateBatch> {
    x_prev.check_shape(x0, "sample_transition")?;
    x0.check_shape(xhat0, "sample_transition")?;
    if t == t_prev {
        return Ok(x_prev.clone());
    }
    if t < t_prev {
        return Err(DosError::Argument(format!(
            "transition must move forward in time: {t_prev} -> {t}"
        )));
    }
    let c = transition_coefficients(t_prev, t, s)?;
    let mut x = x_prev.scaled(c.decay);
    if c.shift != 0.0 {
        x.axpy(c.shift, xhat0);
        x.axpy(-c.shift, x0);
    }
    let z = noise.standard_normal(x.dim());
    x.axpy(c.std, &z);
    Ok(x)
}

/// Analytic mean and diagonal variance of `x_t` when `x₀ ~ q0`.
pub fn marginal_moments(
    q0: &GaussianSpec,
    xhat0: &[f64],
    t: f64,
    s: &DoSSchedule,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if xhat0.len() != q0.dim() {
        return Err(DosError::Argument("source point dimension mismatch".into()));
    }
    let p = s.at(t)?;
    let mean = q0
        .mean
        .iter()
        .zip(xhat0)
        .map(|(m, xh)| p.alpha * p.eta * xh + p.scale * m)
        .collect();
    let var = q0
        .cov_diag
        .iter()
        .map(|c| p.scale * p.scale * c + p.sigma * p.sigma)
        .collect();
    Ok((mean, var))
}

/// Euler–Maruyama options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Diffusion {
    #[default]
    On,
    /// g forced to zero: the scheme integrates the mean ODE.
    Off,
}

/// Euler–Maruyama simulation of the forward SDE on an increasing grid.
///
/// The trajectory starts from a marginal draw at `grid[0]` (which is `x₀`
/// itself when `grid[0] = 0`) and contains one entry per grid time.
pub fn euler_maruyama_forward(
    x0: &StateBatch,
    xhat0: &StateBatch,
    grid: &[f64],
    s: &DoSSchedule,
    noise: &mut NoiseStreams,
    diffusion: Diffusion,
) -> Result<Vec<(f64, StateBatch)>> {
    let mut out = Vec::with_capacity(grid.len());
    euler_maruyama_forward_with(x0, xhat0, grid, s, noise, diffusion, |t, x| {
        out.push((t, x.clone()))
    })?;
    Ok(out)
}

/// [`euler_maruyama_forward`] without storing the path: `observe` sees every
/// grid state and the terminal state is returned.
pub fn euler_maruyama_forward_with(
    x0: &StateBatch,
    xhat0: &StateBatch,
    grid: &[f64],
    s: &DoSSchedule,
    noise: &mut NoiseStreams,
    diffusion: Diffusion,
    mut observe: impl FnMut(f64, &StateBatch),
) -> Result<StateBatch> {
    x0.check_shape(xhat0, "euler_maruyama_forward")?;
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DosError::Argument(
            "forward grid must be strictly increasing".into(),
        ));
    }
    if let Some(&bad) = grid.iter().find(|&&t| s.shift.saturated(t)) {
        return Err(DosError::Domain {
            t: bad,
            lo: 0.0,
            hi: s.t1(),
        });
    }
    let (mut x, _) = sample_marginal(x0, xhat0, grid[0], s, noise)?;
    observe(grid[0], &x);
    let mut z = StateBatch::zeros(x.len(), x.dim());
    for w in grid.windows(2) {
        let (t, dt) = (w[0], w[1] - w[0]);
        let c = s.sde_coefficients(t)?;
        let decay = 1.0 + c.f * dt;
        let drift = c.h * dt;
        if diffusion == Diffusion::On {
            noise.fill_normal(&mut z);
        }
        let kick = c.g * dt.sqrt();
        for ((xv, hv), zv) in x
            .as_mut_slice()
            .iter_mut()
            .zip(xhat0.as_slice())
            .zip(z.as_slice())
        {
            *xv = decay * *xv + drift * hv + kick * zv;
        }
        observe(w[1], &x);
    }
    Ok(x)
}
