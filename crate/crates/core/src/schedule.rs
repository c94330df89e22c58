//! Time parameterization: noise schedule, shifting sequence, λ and time grids.
//!
//! Time is continuous on `[0, T]` with `T = 1`. Integer DDPM step indices are
//! a display concern only, see [`DISPLAY_STEPS`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{DosError, Result};

/// Canonical horizon.
pub const HORIZON: f64 = 1.0;

/// Number of discrete training steps the unit horizon is displayed as.
pub const DISPLAY_STEPS: u32 = 1000;

/// Relative offset below `t1` used wherever a finite λ is required near the pivot.
pub const PIVOT_OFFSET: f64 = 1e-4;

/// Integer step index shown for continuous time `t`.
pub fn display_step(t: f64) -> u32 {
    (t * DISPLAY_STEPS as f64).round() as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSchedule {
    /// β(t) = β_min + t (β_max − β_min), α_t = exp(−½ ∫₀ᵗ β).
    LinearBeta { beta_min: f64, beta_max: f64 },
    /// Improved-DDPM cosine schedule with small offset `s`.
    Cosine { offset: f64 },
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        // DDPM limits 1e-4 .. 2e-2 per step over 1000 steps.
        NoiseSchedule::LinearBeta {
            beta_min: 0.1,
            beta_max: 20.0,
        }
    }
}

impl NoiseSchedule {
    pub fn cosine() -> Self {
        NoiseSchedule::Cosine { offset: 0.008 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSchedule::LinearBeta { beta_min, beta_max } => {
                if !(beta_min >= 0.0 && beta_max > beta_min && beta_max.is_finite()) {
                    return Err(DosError::Config(format!(
                        "linear-beta needs 0 <= beta_min < beta_max, got {beta_min}, {beta_max}"
                    )));
                }
            }
            NoiseSchedule::Cosine { offset } => {
                if !(offset > 0.0 && offset < 1.0) {
                    return Err(DosError::Config(format!(
                        "cosine offset must lie in (0, 1), got {offset}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check(t: f64) -> Result<()> {
        if (0.0..=HORIZON).contains(&t) {
            Ok(())
        } else {
            Err(DosError::Domain {
                t,
                lo: 0.0,
                hi: HORIZON,
            })
        }
    }

    /// `(α_t, σ_t)`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        Self::check(t)?;
        Ok((self.alpha(t), self.sigma(t)))
    }

    pub(crate) fn alpha(&self, t: f64) -> f64 {
        match *self {
            NoiseSchedule::LinearBeta { .. } => self.log_alpha(t).exp(),
            NoiseSchedule::Cosine { offset } => {
                let (phi, phi0) = cosine_angles(t, offset);
                phi.cos() / phi0.cos()
            }
        }
    }

    fn log_alpha(&self, t: f64) -> f64 {
        match *self {
            NoiseSchedule::LinearBeta { beta_min, beta_max } => {
                -0.5 * (beta_min * t + 0.5 * (beta_max - beta_min) * t * t)
            }
            NoiseSchedule::Cosine { .. } => self.alpha(t).ln(),
        }
    }

    pub(crate) fn sigma(&self, t: f64) -> f64 {
        self.sigma_sq(t).max(0.0).sqrt()
    }

    /// σ² computed without cancellation near `t = 0`.
    pub(crate) fn sigma_sq(&self, t: f64) -> f64 {
        match *self {
            NoiseSchedule::LinearBeta { .. } => -(2.0 * self.log_alpha(t)).exp_m1(),
            NoiseSchedule::Cosine { offset } => {
                let (phi, phi0) = cosine_angles(t, offset);
                let c0 = phi0.cos();
                (phi - phi0).sin() * (phi + phi0).sin() / (c0 * c0)
            }
        }
    }

    /// β(t) for the linear schedule; for cosine the equivalent −2 d log α/dt.
    pub fn beta(&self, t: f64) -> f64 {
        match *self {
            NoiseSchedule::LinearBeta { beta_min, beta_max } => {
                beta_min + t * (beta_max - beta_min)
            }
            NoiseSchedule::Cosine { offset } => {
                let (phi, _) = cosine_angles(t, offset);
                2.0 * phi.tan() * cosine_rate(offset)
            }
        }
    }

    /// dα/dt.
    pub fn d_alpha(&self, t: f64) -> f64 {
        match *self {
            NoiseSchedule::LinearBeta { .. } => -0.5 * self.beta(t) * self.alpha(t),
            NoiseSchedule::Cosine { offset } => {
                let (phi, phi0) = cosine_angles(t, offset);
                -phi.sin() * cosine_rate(offset) / phi0.cos()
            }
        }
    }

    /// dσ²/dt = −2 α dα/dt.
    pub fn d_sigma_sq(&self, t: f64) -> f64 {
        -2.0 * self.alpha(t) * self.d_alpha(t)
    }

    /// dσ/dt; infinite at `t = 0` where σ vanishes.
    pub fn d_sigma(&self, t: f64) -> f64 {
        self.d_sigma_sq(t) / (2.0 * self.sigma(t))
    }
}

fn cosine_angles(t: f64, s: f64) -> (f64, f64) {
    let phi = (t / HORIZON + s) / (1.0 + s) * PI / 2.0;
    let phi0 = s / (1.0 + s) * PI / 2.0;
    (phi, phi0)
}

fn cosine_rate(s: f64) -> f64 {
    PI / (2.0 * (1.0 + s) * HORIZON)
}

/// Shape of the shifting sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftKind {
    /// η_t = (1 − cos(π t / t1)) / 2 on `[0, t1]`, 1 afterwards.
    #[default]
    Cosine,
    /// η ≡ 0: no domain shift, the process reduces to plain VP diffusion.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftingSequence {
    pub t1: f64,
    #[serde(default)]
    pub kind: ShiftKind,
}

impl Default for ShiftingSequence {
    fn default() -> Self {
        Self {
            t1: HORIZON / 2.0,
            kind: ShiftKind::Cosine,
        }
    }
}

impl ShiftingSequence {
    pub fn new(t1: f64) -> Result<Self> {
        let s = Self {
            t1,
            kind: ShiftKind::Cosine,
        };
        s.validate()?;
        Ok(s)
    }

    /// Degenerate η ≡ 0 sequence that still carries a start time `t1`.
    pub fn none(t1: f64) -> Result<Self> {
        let s = Self {
            t1,
            kind: ShiftKind::None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t1 > 0.0 && self.t1 <= HORIZON {
            Ok(())
        } else {
            Err(DosError::Config(format!(
                "t1 must lie in (0, {HORIZON}], got {}",
                self.t1
            )))
        }
    }

    /// η_t.
    pub fn eval(&self, t: f64) -> Result<f64> {
        NoiseSchedule::check(t)?;
        Ok(self.eta(t))
    }

    pub(crate) fn eta(&self, t: f64) -> f64 {
        match self.kind {
            ShiftKind::None => 0.0,
            ShiftKind::Cosine if t >= self.t1 => 1.0,
            ShiftKind::Cosine => (1.0 - (PI * t / self.t1).cos()) / 2.0,
        }
    }

    /// 1 − η_t evaluated as cos²(π t / 2 t1), accurate near the pivot.
    pub(crate) fn one_minus_eta(&self, t: f64) -> f64 {
        match self.kind {
            ShiftKind::None => 1.0,
            ShiftKind::Cosine if t >= self.t1 => 0.0,
            ShiftKind::Cosine => {
                let c = (PI * t / (2.0 * self.t1)).cos();
                c * c
            }
        }
    }

    /// dη/dt.
    pub fn d_eta(&self, t: f64) -> f64 {
        match self.kind {
            ShiftKind::None => 0.0,
            ShiftKind::Cosine if t >= self.t1 => 0.0,
            ShiftKind::Cosine => PI / (2.0 * self.t1) * (PI * t / self.t1).sin(),
        }
    }

    /// True where η_t = 1 and λ is infinite.
    pub fn saturated(&self, t: f64) -> bool {
        self.kind == ShiftKind::Cosine && t >= self.t1
    }
}

/// Coefficients of the forward SDE `dx = (f x + h x̂₀) dt + g dw`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeCoefficients {
    pub f: f64,
    pub h: f64,
    pub g: f64,
}

/// Noise schedule plus shifting sequence.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DoSSchedule {
    pub noise: NoiseSchedule,
    pub shift: ShiftingSequence,
}

impl DoSSchedule {
    pub fn new(noise: NoiseSchedule, shift: ShiftingSequence) -> Result<Self> {
        noise.validate()?;
        shift.validate()?;
        Ok(Self { noise, shift })
    }

    /// Default noise schedule with pivot `t1`.
    pub fn with_t1(t1: f64) -> Result<Self> {
        Self::new(NoiseSchedule::default(), ShiftingSequence::new(t1)?)
    }

    #[inline]
    pub fn t1(&self) -> f64 {
        self.shift.t1
    }

    pub fn eval_noise(&self, t: f64) -> Result<(f64, f64)> {
        self.noise.eval(t)
    }

    pub fn eval_eta(&self, t: f64) -> Result<f64> {
        self.shift.eval(t)
    }

    /// Everything a step needs at time `t`, without singularity checks.
    pub fn point(&self, t: f64) -> SchedulePoint {
        let alpha = self.noise.alpha(t);
        let sigma = self.noise.sigma(t);
        let eta = self.shift.eta(t);
        let keep = self.shift.one_minus_eta(t);
        let scale = alpha * keep;
        let lambda = if self.shift.saturated(t) {
            f64::INFINITY
        } else {
            sigma / scale
        };
        SchedulePoint {
            t,
            alpha,
            sigma,
            eta,
            keep,
            scale,
            lambda,
        }
    }

    /// Checked [`point`](Self::point).
    pub fn at(&self, t: f64) -> Result<SchedulePoint> {
        NoiseSchedule::check(t)?;
        Ok(self.point(t))
    }

    /// λ_t = σ_t / (α_t (1 − η_t)).
    pub fn lambda(&self, t: f64) -> Result<f64> {
        NoiseSchedule::check(t)?;
        if self.shift.saturated(t) {
            return Err(DosError::Singularity {
                t,
                what: "lambda diverges where eta = 1",
            });
        }
        let p = self.point(t);
        if !(p.lambda.is_finite() && p.scale > 0.0) {
            return Err(DosError::Singularity {
                t,
                what: "alpha (1 - eta) vanishes",
            });
        }
        Ok(p.lambda)
    }

    /// d[α(1−η)]/dt.
    fn d_scale(&self, t: f64) -> f64 {
        self.noise.d_alpha(t) * self.shift.one_minus_eta(t)
            - self.noise.alpha(t) * self.shift.d_eta(t)
    }

    /// dλ/dt.
    pub fn d_lambda(&self, t: f64) -> Result<f64> {
        let lambda = self.lambda(t)?;
        let p = self.point(t);
        let log_sigma_rate = -p.alpha * self.noise.d_alpha(t) / (p.sigma * p.sigma);
        Ok(lambda * (log_sigma_rate - self.d_scale(t) / p.scale))
    }

    /// Forward SDE coefficients (f, h, g).
    pub fn sde_coefficients(&self, t: f64) -> Result<SdeCoefficients> {
        NoiseSchedule::check(t)?;
        if self.shift.saturated(t) {
            return Err(DosError::Singularity {
                t,
                what: "sde coefficients diverge where eta = 1",
            });
        }
        let p = self.point(t);
        if p.scale <= 0.0 {
            return Err(DosError::Singularity {
                t,
                what: "alpha (1 - eta) vanishes",
            });
        }
        let f = self.d_scale(t) / p.scale;
        let h = p.alpha * self.shift.d_eta(t) / p.keep;
        let mut g_sq = self.noise.d_sigma_sq(t) - 2.0 * f * p.sigma * p.sigma;
        if g_sq < 0.0 {
            if g_sq < -1e-12 {
                return Err(DosError::Schedule {
                    t,
                    what: format!("negative diffusion radicand g^2 = {g_sq:e}"),
                });
            }
            g_sq = 0.0;
        }
        Ok(SdeCoefficients {
            f,
            h,
            g: g_sq.sqrt(),
        })
    }

    /// Invert the monotone map t ↦ λ_t on `[lo, hi]` by bisection.
    pub fn time_of_lambda(&self, lambda: f64, lo: f64, hi: f64) -> Result<f64> {
        let (mut a, mut b) = (lo, hi);
        let (la, lb) = (self.lambda(a)?, self.lambda(b)?);
        if !(la <= lambda && lambda <= lb) {
            return Err(DosError::Argument(format!(
                "lambda {lambda} outside [{la}, {lb}]"
            )));
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if self.point(m).lambda < lambda {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }
}

/// Schedule quantities at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulePoint {
    pub t: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub eta: f64,
    /// 1 − η_t.
    pub keep: f64,
    /// α_t (1 − η_t).
    pub scale: f64,
    /// λ_t, `+inf` where η_t = 1.
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    /// Equal steps in t.
    #[default]
    UniformT,
    /// Equal steps in λ.
    UniformLambda,
    /// Equal steps in ln λ.
    LogLambda,
}

/// Decreasing times from `t1` to `t_end` driving a reverse solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(s: &DoSSchedule, steps: usize, t_end: f64, spacing: Spacing) -> Result<Self> {
        let t1 = s.t1();
        if steps == 0 {
            return Err(DosError::Argument(
                "time grid needs at least one step".into(),
            ));
        }
        if !(t_end > 0.0 && t_end < t1) {
            return Err(DosError::Argument(format!(
                "t_end must lie in (0, t1 = {t1}), got {t_end}"
            )));
        }
        let mut times = spaced_times(s, t1, t_end, steps, spacing)?;
        times[0] = t1;
        let grid = Self { times };
        grid.validate(t1)?;
        Ok(grid)
    }

    /// Uniform-t grid, independent of the schedule.
    pub fn uniform(t1: f64, steps: usize, t_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(DosError::Argument(
                "time grid needs at least one step".into(),
            ));
        }
        if !(t_end > 0.0 && t_end < t1) {
            return Err(DosError::Argument(format!(
                "t_end must lie in (0, t1 = {t1}), got {t_end}"
            )));
        }
        let grid = Self {
            times: linspace(t1, t_end, steps),
        };
        grid.validate(t1)?;
        Ok(grid)
    }

    /// Arbitrary strictly decreasing times starting at `t1`.
    pub fn from_times(t1: f64, times: Vec<f64>) -> Result<Self> {
        let grid = Self { times };
        grid.validate(t1)?;
        Ok(grid)
    }

    fn validate(&self, t1: f64) -> Result<()> {
        if self.times.len() < 2 {
            return Err(DosError::Argument(
                "time grid needs at least one step".into(),
            ));
        }
        if self.times[0] != t1 {
            return Err(DosError::Argument(format!(
                "time grid must start at t1 = {t1}, starts at {}",
                self.times[0]
            )));
        }
        if self.times.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(DosError::Argument(
                "time grid must be strictly decreasing".into(),
            ));
        }
        if self.times.iter().any(|&t| !(t > 0.0 && t <= t1)) {
            return Err(DosError::Argument(
                "time grid entries must lie in (0, t1]".into(),
            ));
        }
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

fn linspace(hi: f64, lo: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|i| {
            if i == steps {
                lo
            } else {
                hi + (lo - hi) * i as f64 / steps as f64
            }
        })
        .collect()
}

/// `steps + 1` decreasing times from `t_hi` to `t_lo`.
///
/// λ-based spacings evaluate λ at `(1 − PIVOT_OFFSET) t1` in place of a
/// saturated `t_hi`; the first entry is still `t_hi`.
pub fn spaced_times(
    s: &DoSSchedule,
    t_hi: f64,
    t_lo: f64,
    steps: usize,
    spacing: Spacing,
) -> Result<Vec<f64>> {
    if steps == 0 || !(t_lo > 0.0 && t_lo < t_hi) {
        return Err(DosError::Argument(format!(
            "need steps >= 1 and 0 < t_lo < t_hi, got {steps}, {t_lo}, {t_hi}"
        )));
    }
    if spacing == Spacing::UniformT {
        return Ok(linspace(t_hi, t_lo, steps));
    }
    let near_pivot = (1.0 - PIVOT_OFFSET) * s.t1();
    let hi_eval = if s.shift.kind == ShiftKind::Cosine && t_hi > near_pivot {
        near_pivot
    } else {
        t_hi
    };
    let (l_hi, l_lo) = (s.lambda(hi_eval)?, s.lambda(t_lo)?);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(t_hi);
    for i in 1..steps {
        let frac = i as f64 / steps as f64;
        let target = match spacing {
            Spacing::UniformLambda => l_hi + (l_lo - l_hi) * frac,
            Spacing::LogLambda => (l_hi.ln() + (l_lo.ln() - l_hi.ln()) * frac).exp(),
            Spacing::UniformT => unreachable!(),
        };
        out.push(s.time_of_lambda(target, t_lo, hi_eval)?);
    }
    out.push(t_lo);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central(f: impl Fn(f64) -> f64, t: f64) -> f64 {
        let h = 1e-6 * HORIZON;
        (f(t + h) - f(t - h)) / (2.0 * h)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn schedules() -> Vec<NoiseSchedule> {
        vec![NoiseSchedule::default(), NoiseSchedule::cosine()]
    }

    #[test]
    fn endpoints() {
        for n in schedules() {
            let (a0, s0) = n.eval(0.0).unwrap();
            assert!(a0 >= 1.0 - 1e-3 && s0 < 1e-6);
            let (a1, _) = n.eval(HORIZON).unwrap();
            assert!(a1 <= 1e-2, "{n:?}: alpha_T = {a1}");
        }
        assert!(NoiseSchedule::default().eval(1.5).is_err());
        assert!(NoiseSchedule::default().eval(-0.1).is_err());
    }

    #[test]
    fn linear_terminal_alpha_matches_integrated_beta() {
        // trapezoid on β over 10⁵ panels
        let n = NoiseSchedule::default();
        let m = 100_000;
        let h = HORIZON / m as f64;
        let integral: f64 = (0..m)
            .map(|i| 0.5 * h * (n.beta(i as f64 * h) + n.beta((i + 1) as f64 * h)))
            .sum();
        let alpha_bar = (-integral).exp();
        let (a, _) = n.eval(HORIZON).unwrap();
        assert!(rel(a * a, alpha_bar) < 1e-9);
        assert!(a < 0.01);
    }

    #[test]
    fn variance_preserving_and_monotone() {
        for n in schedules() {
            let mut prev = (f64::INFINITY, -1.0);
            for i in 0..1000 {
                let t = i as f64 / 999.0 * HORIZON;
                let (a, s) = n.eval(t).unwrap();
                assert!((a * a + s * s - 1.0).abs() < 1e-12);
                assert!(a < prev.0 && s > prev.1, "{n:?} not monotone at {t}");
                prev = (a, s);
            }
        }
    }

    #[test]
    fn analytic_alpha_sigma_derivatives() {
        for n in schedules() {
            for i in 1..100 {
                let t = 1e-3 + (1.0 - 2e-3) * i as f64 / 100.0;
                assert!(rel(n.d_alpha(t), central(|u| n.alpha(u), t)) < 1e-5);
                assert!(rel(n.d_sigma(t), central(|u| n.sigma(u), t)) < 1e-5);
            }
        }
    }

    #[test]
    fn eta_values() {
        let s = ShiftingSequence::new(0.5).unwrap();
        assert_eq!(s.eval(0.0).unwrap(), 0.0);
        assert_eq!(s.eval(0.5).unwrap(), 1.0);
        assert!((s.eval(0.25).unwrap() - 0.5).abs() < 1e-15);
        assert!((s.eval(0.5 / 3.0).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(s.eval(0.9).unwrap(), 1.0);
        assert!(s.eval(1.1).is_err());
        let mut prev = -1.0;
        for i in 0..=1000 {
            let e = s.eval(i as f64 / 1000.0).unwrap();
            assert!((0.0..=1.0).contains(&e) && e >= prev);
            prev = e;
        }
    }

    #[test]
    fn eta_derivative() {
        let s = ShiftingSequence::new(0.5).unwrap();
        for i in 1..100 {
            let t = 0.5 * i as f64 / 100.0;
            if !(1e-3..=0.5 - 1e-3).contains(&t) {
                continue;
            }
            assert!(rel(s.d_eta(t), central(|u| s.eta(u), t)) < 1e-5);
        }
    }

    #[test]
    fn lambda_properties() {
        let s = DoSSchedule::with_t1(0.5).unwrap();
        assert!(s.lambda(0.0).unwrap() < 1e-6);
        assert!(matches!(s.lambda(0.5), Err(DosError::Singularity { .. })));
        let mut prev = -1.0;
        for i in 0..1000 {
            let t = 0.999 * 0.5 * i as f64 / 999.0;
            let l = s.lambda(t).unwrap();
            assert!(l.is_finite() && l > prev);
            prev = l;
        }
        assert!(s.lambda(0.5 * (1.0 - 1e-7)).unwrap() > 1e12);
        for i in 1..99 {
            let t = 0.5 * i as f64 / 100.0;
            if !(1e-3..=0.5 - 1e-3).contains(&t) {
                continue;
            }
            let fd = central(|u| s.point(u).lambda, t);
            assert!(rel(s.d_lambda(t).unwrap(), fd) < 1e-5, "t = {t}");
        }
    }

    #[test]
    fn lambda_unit_at_balanced_point() {
        // η = 0 and α = σ = √½ ⇒ λ = 1
        let n = NoiseSchedule::default();
        let s = DoSSchedule::new(n, ShiftingSequence::none(1.0).unwrap()).unwrap();
        let mut lo: f64 = 0.0;
        let mut hi: f64 = 1.0;
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if n.alpha(m) > n.sigma(m) {
                lo = m
            } else {
                hi = m
            }
        }
        assert!((s.lambda(lo).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shift_free_coefficients_are_plain_vp() {
        let n = NoiseSchedule::default();
        let s = DoSSchedule::new(n, ShiftingSequence::none(0.5).unwrap()).unwrap();
        for t in [0.01, 0.2, 0.45] {
            let c = s.sde_coefficients(t).unwrap();
            assert_eq!(c.h, 0.0);
            assert!(rel(c.f, -0.5 * n.beta(t)) < 1e-12);
            assert!(rel(c.g, n.beta(t).sqrt()) < 1e-12);
        }
    }

    #[test]
    fn coefficients_singular_at_pivot() {
        let s = DoSSchedule::with_t1(0.5).unwrap();
        assert!(s.sde_coefficients(0.5).is_err());
        assert!(s.sde_coefficients(0.7).is_err());
        let c = s.sde_coefficients(0.3).unwrap();
        assert!(c.g > 0.0 && c.h > 0.0 && c.f < 0.0);
    }

    #[test]
    fn grids() {
        let s = DoSSchedule::with_t1(0.5).unwrap();
        let g = TimeGrid::new(&s, 5, 1e-3, Spacing::UniformT).unwrap();
        assert_eq!(g.times().len(), 6);
        assert_eq!(g.times()[0], 0.5);
        assert_eq!(g.t_end(), 1e-3);
        let g1 = TimeGrid::new(&s, 1, 1e-3, Spacing::UniformT).unwrap();
        assert_eq!(g1.times(), &[0.5, 1e-3]);
        assert!(TimeGrid::new(&s, 0, 1e-3, Spacing::UniformT).is_err());
        assert!(TimeGrid::new(&s, 3, 0.5, Spacing::UniformT).is_err());

        for spacing in [Spacing::UniformLambda, Spacing::LogLambda] {
            let g = TimeGrid::new(&s, 8, 1e-3, spacing).unwrap();
            assert_eq!(g.times()[0], 0.5);
            let lams: Vec<f64> = g.times()[1..]
                .iter()
                .map(|&t| s.lambda(t).unwrap())
                .collect();
            assert!(lams.windows(2).all(|w| w[1] < w[0]));
        }
        let g = TimeGrid::new(&s, 8, 1e-3, Spacing::UniformLambda).unwrap();
        let lams: Vec<f64> = g.times()[1..]
            .iter()
            .map(|&t| s.lambda(t).unwrap())
            .collect();
        let gaps: Vec<f64> = lams.windows(2).map(|w| w[0] - w[1]).collect();
        for w in gaps.windows(2) {
            assert!(rel(w[0], w[1]) < 1e-6);
        }
    }
}
