//! Fine-grid Euler–Maruyama integration of the reverse SDE
//! `dx = [f x + h x̂₀ − g² ∇log q_t(x)] dt + g dw̄`.

use crate::error::{DosError, Result};
use crate::forward::{marginal_moments, Diffusion, GaussianSpec};
use crate::noise::NoiseStreams;
use crate::prediction::Predictor;
use crate::schedule::DoSSchedule;
use crate::state::StateBatch;

/// Where the reverse integration starts.
#[derive(Debug, Clone, Copy)]
pub enum ReverseStart<'a> {
    /// A given state at the first grid time.
    State(&'a StateBatch),
    /// A draw from the forward marginal of `N(mean, diag(cov))` at the first
    /// grid time, using the rows of `x̂₀`.
    Marginal(&'a GaussianSpec),
}

/// Integrate from `times[0]` down to the last entry of a strictly decreasing
/// grid. Every grid time must lie strictly before the pivot.
pub fn euler_maruyama_reverse<P: Predictor + ?Sized>(
    predictor: &P,
    xhat0: &StateBatch,
    times: &[f64],
    sched: &DoSSchedule,
    start: ReverseStart<'_>,
    noise: &mut NoiseStreams,
    diffusion: Diffusion,
) -> Result<StateBatch> {
    if times.len() < 2 || times.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(DosError::Argument(
            "reverse grid must be strictly decreasing".into(),
        ));
    }
    if let Some(&bad) = times.iter().find(|&&t| sched.shift.saturated(t) || t < 0.0) {
        return Err(DosError::Domain {
            t: bad,
            lo: 0.0,
            hi: sched.t1(),
        });
    }
    let mut x = match start {
        ReverseStart::State(x) => {
            x.check_shape(xhat0, "reverse start")?;
            x.clone()
        }
        ReverseStart::Marginal(q0) => {
            let mut out = noise.standard_normal(xhat0.dim());
            for i in 0..out.len() {
                let (mean, var) = marginal_moments(q0, xhat0.row(i), times[0], sched)?;
                for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                    *v = mean[j] + var[j].sqrt() * *v;
                }
            }
            out
        }
    };
    let mut z = StateBatch::zeros(x.len(), x.dim());
    for w in times.windows(2) {
        let (t, dt) = (w[0], w[0] - w[1]);
        let c = sched.sde_coefficients(t)?;
        let g_sq = c.g * c.g;
        let score = if g_sq > 0.0 {
            predictor.predict_score(&x, xhat0, t)?
        } else {
            StateBatch::zeros(x.len(), x.dim())
        };
        if diffusion == Diffusion::On {
            noise.fill_normal(&mut z);
        }
        let kick = c.g * dt.sqrt();
        for (i, xv) in x.as_mut_slice().iter_mut().enumerate() {
            let drift = c.f * *xv + c.h * xhat0.as_slice()[i] - g_sq * score.as_slice()[i];
            *xv -= drift * dt;
            if diffusion == Diffusion::On {
                *xv += kick * z.as_slice()[i];
            }
        }
        if !x.is_finite() {
            return Err(DosError::Numeric(format!(
                "reverse integration diverged at t = {t}"
            )));
        }
    }
    Ok(x)
}
