//! Score-matching training of [`TinyMlp`] on the noise-prediction loss
//! `E_t E_x₀ E_ε ‖ε_θ(x_t, x̂₀, t) − ε‖²` with unit weighting and
//! `t ~ U(0, t1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{noise_loss, Predictor, TinyMlp, TIME_FREQUENCIES};
use crate::error::{DosError, Result};
use crate::schedule::DoSSchedule;
use crate::state::StateBatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub width: usize,
    pub freqs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 4000,
            batch: 256,
            lr: 2e-3,
            seed: 0,
            width: 64,
            freqs: TIME_FREQUENCIES,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch == 0 || self.width == 0 {
            return Err(DosError::Config(
                "steps, batch and width must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(DosError::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub predictor: TinyMlp,
    /// Per-step minibatch loss.
    pub losses: Vec<f64>,
    /// Mean of the last 20 minibatch losses.
    pub final_running_loss: f64,
}

/// Window of the reported running loss.
pub const RUNNING_WINDOW: usize = 20;

pub fn running_mean(losses: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(losses.len());
    let mut acc = 0.0;
    for (i, l) in losses.iter().enumerate() {
        acc += l;
        if i >= window {
            acc -= losses[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

/// Stepwise trainer; keeps Adam state between calls.
pub struct Trainer<'a> {
    net: TinyMlp,
    x0: &'a StateBatch,
    xhat0: &'a StateBatch,
    cfg: TrainConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
    rng: ChaCha8Rng,
    losses: Vec<f64>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        x0: &'a StateBatch,
        xhat0: &'a StateBatch,
        s: &DoSSchedule,
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        x0.check_shape(xhat0, "training pairs")?;
        let net = TinyMlp::new(x0.dim(), cfg.width, cfg.freqs, *s, cfg.seed)?;
        let n = net.params().len();
        Ok(Self {
            net,
            x0,
            xhat0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_7a11),
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            losses: Vec::new(),
        })
    }

    pub fn network(&self) -> &TinyMlp {
        &self.net
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn done(&self) -> bool {
        self.step >= self.cfg.steps
    }

    /// Draw a minibatch `(x_t, x̂₀, t, ε)`.
    fn minibatch(&mut self) -> Result<(StateBatch, StateBatch, Vec<f64>, StateBatch)> {
        let (b, d) = (self.cfg.batch, self.x0.dim());
        let s = *self.net.schedule();
        let t1 = s.t1();
        let mut xt = StateBatch::zeros(b, d);
        let mut xh = StateBatch::zeros(b, d);
        let mut eps = StateBatch::zeros(b, d);
        let mut times = Vec::with_capacity(b);
        for i in 0..b {
            let k = self.rng.random_range(0..self.x0.len());
            // (0, t1]
            let t = t1 * (1.0 - self.rng.random::<f64>());
            let p = s.point(t);
            for j in 0..d {
                let e: f64 = self.rng.sample(StandardNormal);
                let (x0, xhat) = (self.x0.row(k)[j], self.xhat0.row(k)[j]);
                xt.row_mut(i)[j] = p.alpha * p.eta * xhat + p.scale * x0 + p.sigma * e;
                xh.row_mut(i)[j] = xhat;
                eps.row_mut(i)[j] = e;
            }
            times.push(t);
        }
        Ok((xt, xh, times, eps))
    }

    /// One Adam step. Returns the minibatch loss.
    pub fn step(&mut self) -> Result<f64> {
        let (xt, xh, times, eps) = self.minibatch()?;
        let (loss, grad) = self.net.loss_and_grad(&xt, &xh, &times, &eps)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            let last = self.losses.iter().rev().find(|l| l.is_finite()).copied();
            return Err(DosError::Training {
                step: self.step,
                detail: format!("non-finite loss {loss}; last finite loss {last:?}"),
            });
        }
        self.step += 1;
        let progress = self.step as f64 / self.cfg.steps as f64;
        let lr = self.cfg.lr * (0.1 + 0.45 * (1.0 + (std::f64::consts::PI * progress).cos()));
        let (b1, b2, eps_adam) = (0.9, 0.999, 1e-8);
        let c1 = 1.0 - b1_pow(b1, self.step);
        let c2 = 1.0 - b1_pow(b2, self.step);
        for ((p, g), (m, v)) in self
            .net
            .params_mut()
            .iter_mut()
            .zip(&grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps_adam);
        }
        self.losses.push(loss);
        Ok(loss)
    }

    pub fn finish(mut self) -> TrainReport {
        let running = running_mean(&self.losses, RUNNING_WINDOW);
        let final_running_loss = running.last().copied().unwrap_or(f64::NAN);
        self.net.set_recorded_loss(final_running_loss);
        TrainReport {
            predictor: self.net,
            losses: self.losses,
            final_running_loss,
        }
    }
}

fn b1_pow(b: f64, k: usize) -> f64 {
    b.powi(k.min(i32::MAX as usize) as i32)
}

/// Train a [`TinyMlp`] on pairs `(x₀, x̂₀)`.
pub fn train_noise_predictor(
    x0: &StateBatch,
    xhat0: &StateBatch,
    s: &DoSSchedule,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let mut trainer = Trainer::new(x0, xhat0, s, cfg.clone())?;
    while !trainer.done() {
        trainer.step()?;
    }
    Ok(trainer.finish())
}

/// Monte Carlo estimate of the noise-prediction loss of any predictor on
/// held-out pairs, with `t ~ U(0, t1]` drawn per row.
pub fn held_out_loss<P: Predictor + ?Sized>(
    predictor: &P,
    x0: &StateBatch,
    xhat0: &StateBatch,
    seed: u64,
) -> Result<f64> {
    x0.check_shape(xhat0, "held-out pairs")?;
    let s = *predictor.schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for i in 0..x0.len() {
        let t = s.t1() * (1.0 - rng.random::<f64>());
        let p = s.point(t);
        let eps: Vec<f64> = (0..x0.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let x: Vec<f64> = (0..x0.dim())
            .map(|j| p.alpha * p.eta * xhat0.row(i)[j] + p.scale * x0.row(i)[j] + p.sigma * eps[j])
            .collect();
        let xt = StateBatch::new(1, x0.dim(), x)?;
        let xh = StateBatch::new(1, x0.dim(), xhat0.row(i).to_vec())?;
        let e = StateBatch::new(1, x0.dim(), eps)?;
        total += noise_loss(&predictor.predict_noise(&xt, &xh, t)?, &e);
    }
    Ok(total / x0.len() as f64)
}
