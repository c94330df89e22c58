//! Reverse-time solvers for the domain-shift SDE.
//!
//! A step from `s` to `t < s` with `a_τ = α_τ(1−η_τ)` and `ρ = λ_t/λ_s` is the
//! sum of four terms:
//!
//! ```text
//! linear = (a_t/a_s) ρ² x_s
//! DoSG   = a_t (η_t/(1−η_t) − η_s/(1−η_s) ρ²) x̂₀
//! PAT    = a_t (1 − ρ²) x_θ(s)
//!          − a_t ((λ_t − λ_s)²/λ_s) D                        (order ≥ 2)
//!          + a_t ((λ_s−3λ_t)(λ_s−λ_t)/2 − λ_t² ln(λ_t/λ_s)) U   (order 3)
//! noise  = a_t √(λ_t² − λ_t⁴/λ_s²) z
//! ```
//!
//! `D` and `U` are backward divided differences of past data predictions in λ.
//! At the pivot `s = t1` we have `λ_s = ∞` and the step takes its exact limit:
//! `x_t = α_t η_t x̂₀ + a_t x_θ + σ_t z`.

mod quadrature;
mod reference;

pub use quadrature::{exact_step_quadrature, QuadratureStep, DEFAULT_QUAD_POINTS};
pub use reference::{euler_maruyama_reverse, ReverseStart};

use serde::{Deserialize, Serialize};

use crate::error::{DosError, Result};
use crate::noise::NoiseStreams;
use crate::prediction::Predictor;
use crate::schedule::{DoSSchedule, SchedulePoint, Spacing, TimeGrid};
use crate::state::StateBatch;

/// Default terminal time of a solve.
pub const DEFAULT_T_END: f64 = 1e-3;
/// Default number of solver steps (= NFE).
pub const DEFAULT_STEPS: usize = 5;
/// Default solver order.
pub const DEFAULT_ORDER: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinalOutput {
    /// The state after the last step.
    State,
    /// The data prediction made at the last step; that step draws no noise.
    #[default]
    DataPrediction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub order: u8,
    pub grid: TimeGrid,
    pub seed: u64,
    pub final_output: FinalOutput,
}

impl SolverConfig {
    pub fn new(order: u8, grid: TimeGrid, seed: u64, final_output: FinalOutput) -> Result<Self> {
        check_order(order)?;
        Ok(Self {
            order,
            grid,
            seed,
            final_output,
        })
    }

    /// Five third-order steps from `t1` with uniform-t spacing.
    pub fn default_for(s: &DoSSchedule, seed: u64) -> Result<Self> {
        let grid = TimeGrid::new(s, DEFAULT_STEPS, DEFAULT_T_END, Spacing::UniformT)?;
        Self::new(DEFAULT_ORDER, grid, seed, FinalOutput::DataPrediction)
    }
}

fn check_order(order: u8) -> Result<()> {
    if (1..=3).contains(&order) {
        Ok(())
    } else {
        Err(DosError::Argument(format!(
            "solver order must be 1, 2 or 3, got {order}"
        )))
    }
}

/// A past data prediction and the λ it was made at.
#[derive(Debug, Clone)]
struct Evaluation {
    lambda: f64,
    x_theta: StateBatch,
}

/// A first divided difference and the λ of its older endpoint.
#[derive(Debug, Clone)]
struct Difference {
    far_lambda: f64,
    value: StateBatch,
}

/// Current state plus the multistep buffers.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: StateBatch,
    last: Option<Evaluation>,
    last_diff: Option<Difference>,
}

/// Derivative estimates available for one step.
struct Derivatives {
    first: Option<StateBatch>,
    second: Option<StateBatch>,
    update: (Evaluation, Option<Difference>),
}

impl SolverState {
    pub fn new(x: StateBatch) -> Self {
        Self {
            x,
            last: None,
            last_diff: None,
        }
    }

    /// The most recent data prediction.
    pub fn last_prediction(&self) -> Option<&StateBatch> {
        self.last.as_ref().map(|e| &e.x_theta)
    }

    pub fn has_derivative(&self) -> bool {
        self.last_diff.is_some()
    }

    /// Record a data prediction made at `lambda` exactly as a step would,
    /// without moving the state. Used to seed multistep history.
    pub fn prime(&mut self, lambda: f64, x_theta: StateBatch) -> Result<()> {
        let d = self.derivatives(lambda, &x_theta, 3)?;
        self.commit(d.update);
        Ok(())
    }

    fn derivatives(&self, lambda: f64, x_theta: &StateBatch, order: u8) -> Result<Derivatives> {
        let mut first = None;
        let mut second = None;
        let mut diff = None;
        if order >= 2 && lambda.is_finite() {
            if let Some(prev) = self.last.as_ref().filter(|p| p.lambda.is_finite()) {
                if lambda == prev.lambda {
                    return Err(DosError::Grid(format!(
                        "repeated lambda {lambda} in divided difference"
                    )));
                }
                let value = x_theta.zip_map(&prev.x_theta, |a, b| (a - b) / (lambda - prev.lambda));
                if order >= 3 {
                    if let Some(old) = &self.last_diff {
                        let half_span = (lambda - old.far_lambda) / 2.0;
                        if half_span == 0.0 {
                            return Err(DosError::Grid(
                                "degenerate lambda span for second difference".into(),
                            ));
                        }
                        second = Some(value.zip_map(&old.value, |a, b| (a - b) / half_span));
                    }
                }
                first = Some(value.clone());
                diff = Some(Difference {
                    far_lambda: prev.lambda,
                    value,
                });
            }
        }
        Ok(Derivatives {
            first,
            second,
            update: (
                Evaluation {
                    lambda,
                    x_theta: x_theta.clone(),
                },
                diff,
            ),
        })
    }

    fn commit(&mut self, (eval, diff): (Evaluation, Option<Difference>)) {
        self.last = Some(eval);
        self.last_diff = diff;
    }
}

/// The four components of a step; their sum is the new state.
#[derive(Debug, Clone)]
pub struct StepTerms {
    pub linear: StateBatch,
    pub dosg: StateBatch,
    pub pat: StateBatch,
    pub noise: StateBatch,
    /// Order actually applied after buffer fallbacks.
    pub order_used: u8,
}

impl StepTerms {
    /// linear + DoSG + PAT.
    pub fn deterministic(&self) -> StateBatch {
        let mut out = self.linear.clone();
        out.axpy(1.0, &self.dosg);
        out.axpy(1.0, &self.pat);
        out
    }

    pub fn total(&self) -> StateBatch {
        let mut out = self.deterministic();
        out.axpy(1.0, &self.noise);
        out
    }
}

/// Scalar coefficients of a step `s → t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    pub linear: f64,
    pub dosg: f64,
    pub pat: f64,
    /// Multiplies D.
    pub first: f64,
    /// Multiplies U.
    pub second: f64,
    pub noise_std: f64,
}

/// Coefficient of the second divided difference, before the `a_t` factor.
pub fn second_order_weight(lambda_s: f64, lambda_t: f64) -> f64 {
    (lambda_s - 3.0 * lambda_t) * (lambda_s - lambda_t) / 2.0
        - lambda_t * lambda_t * (lambda_t / lambda_s).ln()
}

fn endpoints(sched: &DoSSchedule, s_from: f64, t: f64) -> Result<(SchedulePoint, SchedulePoint)> {
    if !(t < s_from) {
        return Err(DosError::Argument(format!(
            "reverse step needs t < s, got {s_from} -> {t}"
        )));
    }
    if s_from > sched.t1() {
        return Err(DosError::Argument(format!("step starts past t1: {s_from}")));
    }
    let (ps, pt) = (sched.at(s_from)?, sched.at(t)?);
    if !pt.lambda.is_finite() || pt.scale <= 0.0 {
        return Err(DosError::Schedule {
            t,
            what: "step target has infinite lambda".into(),
        });
    }
    if !ps.lambda.is_infinite() && !(ps.lambda > 0.0 && ps.lambda.is_finite()) {
        return Err(DosError::Schedule {
            t: s_from,
            what: format!("singular lambda {} at step start", ps.lambda),
        });
    }
    Ok((ps, pt))
}

impl StepCoefficients {
    pub fn new(sched: &DoSSchedule, s_from: f64, t: f64) -> Result<Self> {
        let (ps, pt) = endpoints(sched, s_from, t)?;
        let (ls, lt) = (ps.lambda, pt.lambda);
        let a_t = pt.scale;
        if ls.is_infinite() {
            return Ok(Self {
                linear: 0.0,
                dosg: pt.alpha * pt.eta,
                pat: a_t,
                first: 0.0,
                second: 0.0,
                noise_std: pt.sigma,
            });
        }
        let ratio_sq = (lt / ls) * (lt / ls);
        Ok(Self {
            linear: a_t / ps.scale * ratio_sq,
            dosg: pt.alpha * pt.eta - a_t * ps.eta / ps.keep * ratio_sq,
            pat: a_t * (1.0 - ratio_sq),
            first: -a_t * (lt - ls) * (lt - ls) / ls,
            second: a_t * second_order_weight(ls, lt),
            noise_std: a_t * lt * (1.0 - ratio_sq).max(0.0).sqrt(),
        })
    }
}

/// DoSG term of a step `s → t`, using the exact limit at the pivot.
pub fn dosg_term(
    t: f64,
    s_from: f64,
    xhat0: &StateBatch,
    sched: &DoSSchedule,
) -> Result<StateBatch> {
    if !(t > 0.0) {
        return Err(DosError::Argument("dosg needs t > 0".into()));
    }
    let c = StepCoefficients::new(sched, s_from, t)?;
    Ok(xhat0.scaled(c.dosg))
}

/// DoSG evaluated with a caller-supplied η_s, straight from the formula with no
/// limit handling. Used to cross-check the pivot limit with η_s = 1 − δ.
pub fn dosg_term_with_eta(
    t: f64,
    s_from: f64,
    eta_s: f64,
    xhat0: &StateBatch,
    sched: &DoSSchedule,
) -> Result<StateBatch> {
    let (ps, pt) = (sched.at(s_from)?, sched.at(t)?);
    let lambda_s = ps.sigma / (ps.alpha * (1.0 - eta_s));
    let lambda_t = pt.lambda;
    let ratio_sq = (lambda_t / lambda_s).powi(2);
    let coeff = pt.scale * (pt.eta / pt.keep - eta_s / (1.0 - eta_s) * ratio_sq);
    Ok(xhat0.scaled(coeff))
}

/// Full first-order deterministic step with η_s replaced by a caller-supplied value,
/// evaluated from the plain formulas. Cross-check for the pivot limit.
pub fn step_order1_with_eta(
    x_s: &StateBatch,
    x_theta: &StateBatch,
    xhat0: &StateBatch,
    s_from: f64,
    t: f64,
    eta_s: f64,
    sched: &DoSSchedule,
) -> Result<StepTerms> {
    let (ps, pt) = (sched.at(s_from)?, sched.at(t)?);
    let a_s = ps.alpha * (1.0 - eta_s);
    let lambda_s = ps.sigma / a_s;
    let lambda_t = pt.lambda;
    let ratio_sq = (lambda_t / lambda_s).powi(2);
    Ok(StepTerms {
        linear: x_s.scaled(pt.scale / a_s * ratio_sq),
        dosg: dosg_term_with_eta(t, s_from, eta_s, xhat0, sched)?,
        pat: x_theta.scaled(pt.scale * (1.0 - ratio_sq)),
        noise: StateBatch::zeros(x_s.len(), x_s.dim()),
        order_used: 1,
    })
}

/// One solver step of the given order. Evaluates the predictor once at `s`,
/// applies the update, advances `state.x` and the history buffers.
///
/// With `noise = None` the noise term is zero.
#[allow(clippy::too_many_arguments)]
pub fn step<P: Predictor + ?Sized>(
    state: &mut SolverState,
    order: u8,
    s_from: f64,
    t: f64,
    predictor: &P,
    xhat0: &StateBatch,
    sched: &DoSSchedule,
    noise: Option<&mut NoiseStreams>,
) -> Result<StepTerms> {
    check_order(order)?;
    state.x.check_shape(xhat0, "solver step")?;
    let coeffs = StepCoefficients::new(sched, s_from, t)?;
    let lambda_s = sched.point(s_from).lambda;
    let x_theta = predictor.predict_data(&state.x, xhat0, s_from)?;
    state.x.check_shape(&x_theta, "predictor output")?;
    let ders = state.derivatives(lambda_s, &x_theta, order)?;

    let mut pat = x_theta.scaled(coeffs.pat);
    let mut order_used = 1;
    if let Some(d) = &ders.first {
        pat.axpy(coeffs.first, d);
        order_used = 2;
        if let Some(u) = &ders.second {
            pat.axpy(coeffs.second, u);
            order_used = 3;
        }
    }
    let noise_term = match noise {
        Some(ns) if coeffs.noise_std > 0.0 => {
            ns.standard_normal(state.x.dim()).scaled(coeffs.noise_std)
        }
        _ => StateBatch::zeros(state.x.len(), state.x.dim()),
    };
    let terms = StepTerms {
        linear: state.x.scaled(coeffs.linear),
        dosg: xhat0.scaled(coeffs.dosg),
        pat,
        noise: noise_term,
        order_used,
    };
    state.x = terms.total();
    state.commit(ders.update);
    Ok(terms)
}

/// First-order update.
#[allow(clippy::too_many_arguments)]
pub fn step_order1<P: Predictor + ?Sized>(
    state: &mut SolverState,
    s_from: f64,
    t: f64,
    predictor: &P,
    xhat0: &StateBatch,
    sched: &DoSSchedule,
    noise: Option<&mut NoiseStreams>,
) -> Result<StepTerms> {
    step(state, 1, s_from, t, predictor, xhat0, sched, noise)
}

/// Second-order multistep update; falls back to order 1 without a usable history.
#[allow(clippy::too_many_arguments)]
pub fn step_order2<P: Predictor + ?Sized>(
    state: &mut SolverState,
    s_from: f64,
    t: f64,
    predictor: &P,
    xhat0: &StateBatch,
    sched: &DoSSchedule,
    noise: Option<&mut NoiseStreams>,
) -> Result<StepTerms> {
    step(state, 2, s_from, t, predictor, xhat0, sched, noise)
}

/// Third-order multistep update; falls back to lower orders while buffers fill.
#[allow(clippy::too_many_arguments)]
pub fn step_order3<P: Predictor + ?Sized>(
    state: &mut SolverState,
    s_from: f64,
    t: f64,
    predictor: &P,
    xhat0: &StateBatch,
    sched: &DoSSchedule,
    noise: Option<&mut NoiseStreams>,
) -> Result<StepTerms> {
    step(state, 3, s_from, t, predictor, xhat0, sched, noise)
}

/// x_{t1} = α_{t1} x̂₀ + σ_{t1} ε; ε = 0 when `noise` is `None`.
pub fn init_state(
    xhat0: &StateBatch,
    t1: f64,
    sched: &DoSSchedule,
    noise: Option<&mut NoiseStreams>,
) -> Result<StateBatch> {
    if !(t1 > 0.0) {
        return Err(DosError::Argument(format!(
            "start time must be positive, got {t1}"
        )));
    }
    let (alpha, sigma) = sched.eval_noise(t1)?;
    let mut x = xhat0.scaled(alpha);
    if let Some(ns) = noise {
        let eps = ns.standard_normal(xhat0.dim());
        x.axpy(sigma, &eps);
    }
    Ok(x)
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub t_from: f64,
    pub t: f64,
    pub lambda: f64,
    pub order: u8,
    pub norm_linear: f64,
    pub norm_dosg: f64,
    pub norm_pat: f64,
    pub norm_noise: f64,
}

#[derive(Debug, Clone)]
pub struct SampleRun {
    pub samples: StateBatch,
    pub trace: Vec<TraceRow>,
}

/// Initialize at `t1` and run every step of the grid.
pub fn sample<P: Predictor + ?Sized>(
    predictor: &P,
    xhat0: &StateBatch,
    cfg: &SolverConfig,
    sched: &DoSSchedule,
) -> Result<SampleRun> {
    check_order(cfg.order)?;
    if predictor.schedule() != sched {
        return Err(DosError::Argument(
            "predictor was built for a different schedule".into(),
        ));
    }
    let times = cfg.grid.times();
    if times[0] != sched.t1() {
        return Err(DosError::Argument(
            "solver grid must start at the schedule's t1".into(),
        ));
    }
    let mut noise = NoiseStreams::new(cfg.seed, xhat0.len());
    let x = init_state(xhat0, sched.t1(), sched, Some(&mut noise))?;
    let mut state = SolverState::new(x);
    let mut trace = Vec::with_capacity(cfg.grid.steps());
    let last = cfg.grid.steps() - 1;
    for (i, w) in times.windows(2).enumerate() {
        let quiet = i == last && cfg.final_output == FinalOutput::DataPrediction;
        let ns = if quiet { None } else { Some(&mut noise) };
        let terms = step(
            &mut state, cfg.order, w[0], w[1], predictor, xhat0, sched, ns,
        )?;
        trace.push(TraceRow {
            step: i + 1,
            t_from: w[0],
            t: w[1],
            lambda: sched.point(w[1]).lambda,
            order: terms.order_used,
            norm_linear: terms.linear.rms_norm(),
            norm_dosg: terms.dosg.rms_norm(),
            norm_pat: terms.pat.rms_norm(),
            norm_noise: terms.noise.rms_norm(),
        });
    }
    let samples = match cfg.final_output {
        FinalOutput::State => state.x,
        FinalOutput::DataPrediction => state
            .last_prediction()
            .cloned()
            .expect("at least one step was taken"),
    };
    Ok(SampleRun { samples, trace })
}
