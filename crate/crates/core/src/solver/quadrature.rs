//! Reference solution of a single noise-free step by numerical quadrature.
//!
//! Along the deterministic path started at `x_s`,
//!
//! ```text
//! x_τ = (a_τ/a_s)(λ_τ²/λ_s²) x_s + a_τ(η_τ/(1−η_τ) − η_s/(1−η_s) λ_τ²/λ_s²) x̂₀ − a_τ λ_τ² Φ(τ)
//! Φ(τ) = ∫_{λ_s}^{λ_τ} 2 μ⁻³ x_θ(x_μ, μ) dμ
//! ```
//!
//! so `Φ` solves the ODE `Φ' = 2 λ' λ⁻³ x_θ(x_τ, τ)`, integrated here with RK4 in
//! `τ` and refined by doubling.

use crate::error::{DosError, Result};
use crate::prediction::Predictor;
use crate::schedule::{DoSSchedule, SchedulePoint};
use crate::state::StateBatch;

pub const DEFAULT_QUAD_POINTS: usize = 64;
const MAX_DOUBLINGS: u32 = 12;
const REL_TOL: f64 = 1e-11;

/// Exact step, split like [`StepTerms`](super::StepTerms).
#[derive(Debug, Clone)]
pub struct QuadratureStep {
    pub linear: StateBatch,
    pub dosg: StateBatch,
    /// −a_t λ_t² Φ(t).
    pub pat: StateBatch,
    /// Standard deviation of the exact noise term.
    pub noise_std: f64,
    /// Panels used by the accepted estimate.
    pub panels: usize,
}

impl QuadratureStep {
    pub fn deterministic(&self) -> StateBatch {
        let mut out = self.linear.clone();
        out.axpy(1.0, &self.dosg);
        out.axpy(1.0, &self.pat);
        out
    }
}

struct Path<'a, P: ?Sized> {
    predictor: &'a P,
    sched: &'a DoSSchedule,
    x_s: &'a StateBatch,
    xhat0: &'a StateBatch,
    start: SchedulePoint,
}

impl<P: Predictor + ?Sized> Path<'_, P> {
    fn state(&self, p: &SchedulePoint, phi: &StateBatch) -> StateBatch {
        let ratio_sq = (p.lambda / self.start.lambda).powi(2);
        let lin = p.scale / self.start.scale * ratio_sq;
        let shift = p.alpha * p.eta - p.scale * self.start.eta / self.start.keep * ratio_sq;
        StateBatch::combine(&[
            (lin, self.x_s),
            (shift, self.xhat0),
            (-p.scale * p.lambda * p.lambda, phi),
        ])
    }

    fn rate(&self, tau: f64, phi: &StateBatch) -> Result<StateBatch> {
        let p = self.sched.at(tau)?;
        let x = self.state(&p, phi);
        let x_theta = self.predictor.predict_data(&x, self.xhat0, tau)?;
        let k = 2.0 * self.sched.d_lambda(tau)? / p.lambda.powi(3);
        Ok(x_theta.scaled(k))
    }

    fn integrate(&self, t: f64, panels: usize) -> Result<StateBatch> {
        let s = self.start.t;
        let h = (t - s) / panels as f64;
        let mut phi = StateBatch::zeros(self.x_s.len(), self.x_s.dim());
        for i in 0..panels {
            let tau = s + i as f64 * h;
            let k1 = self.rate(tau, &phi)?;
            let mut y = phi.clone();
            y.axpy(0.5 * h, &k1);
            let k2 = self.rate(tau + 0.5 * h, &y)?;
            let mut y = phi.clone();
            y.axpy(0.5 * h, &k2);
            let k3 = self.rate(tau + 0.5 * h, &y)?;
            let mut y = phi.clone();
            y.axpy(h, &k3);
            let k4 = self.rate(tau + h, &y)?;
            phi.axpy(h / 6.0, &k1);
            phi.axpy(h / 3.0, &k2);
            phi.axpy(h / 3.0, &k3);
            phi.axpy(h / 6.0, &k4);
        }
        Ok(phi)
    }
}

/// Integrate one noise-free step `s → t` of the reverse dynamics with the
/// given predictor. Requires `t < s < t1`.
pub fn exact_step_quadrature<P: Predictor + ?Sized>(
    x_s: &StateBatch,
    s_from: f64,
    t: f64,
    predictor: &P,
    xhat0: &StateBatch,
    sched: &DoSSchedule,
    quad_points: usize,
) -> Result<QuadratureStep> {
    x_s.check_shape(xhat0, "quadrature step")?;
    if quad_points == 0 {
        return Err(DosError::Argument(
            "quadrature needs at least one panel".into(),
        ));
    }
    if !(t > 0.0 && t < s_from) {
        return Err(DosError::Argument(format!(
            "quadrature needs 0 < t < s, got {s_from} -> {t}"
        )));
    }
    sched.lambda(s_from)?;
    let target = sched.at(t)?;
    let path = Path {
        predictor,
        sched,
        x_s,
        xhat0,
        start: sched.at(s_from)?,
    };
    let mut panels = quad_points;
    let mut prev = path.integrate(t, panels)?;
    for _ in 0..MAX_DOUBLINGS {
        panels *= 2;
        let next = path.integrate(t, panels)?;
        let scale = next.as_slice().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !next.is_finite() {
            return Err(DosError::Numeric(
                "quadrature produced non-finite values".into(),
            ));
        }
        if next.max_abs_diff(&prev) <= REL_TOL * scale.max(1e-300) {
            let ratio_sq = (target.lambda / path.start.lambda).powi(2);
            return Ok(QuadratureStep {
                linear: x_s.scaled(target.scale / path.start.scale * ratio_sq),
                dosg: xhat0.scaled(
                    target.alpha * target.eta
                        - target.scale * path.start.eta / path.start.keep * ratio_sq,
                ),
                pat: next.scaled(-target.scale * target.lambda * target.lambda),
                noise_std: target.scale * target.lambda * (1.0 - ratio_sq).max(0.0).sqrt(),
                panels,
            });
        }
        prev = next;
    }
    Err(DosError::Numeric(format!(
        "quadrature did not converge within {panels} panels"
    )))
}
