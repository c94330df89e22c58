//! Toy source/target domain pairs.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DosError, Result};
use crate::forward::GaussianSpec;
use crate::noise::NoiseStreams;
use crate::prediction::GaussianTask;
use crate::schedule::DoSSchedule;
use crate::state::StateBatch;

/// Stream offset separating degradation noise from target draws.
const DEGRADE_STREAM: u64 = 0x00de_9a4d;

pub const MIXTURE_OFFSET: f64 = 1.5;
pub const MIXTURE_STD: f64 = 0.3;
pub const RING_RADIUS: f64 = 2.0;
pub const RING_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Gaussian,
    /// Four isotropic components at `(±1.5, ±1.5)`.
    GaussianMixture,
    /// Radius 2 with Gaussian radial jitter.
    Ring,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Gaussian => "gaussian",
            TaskKind::GaussianMixture => "gaussian-mixture",
            TaskKind::Ring => "ring",
        }
    }
}

/// `x̂₀ = A (m + c (x₀ − m)) + b + noise_std · z` with diagonal `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Degradation {
    pub contraction: f64,
    /// Diagonal of `A`; all ones when absent.
    pub gain: Option<Vec<f64>>,
    /// `b`; 0.5 in every coordinate when absent.
    pub offset: Option<Vec<f64>>,
    pub noise_std: f64,
}

impl Default for Degradation {
    fn default() -> Self {
        Self {
            contraction: 0.3,
            gain: None,
            offset: None,
            noise_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTask {
    pub kind: TaskKind,
    pub d: usize,
    /// Gaussian task only.
    pub mean: Option<Vec<f64>>,
    /// Gaussian task only; diagonal covariance.
    pub cov: Option<Vec<f64>>,
    pub degradation: Degradation,
    pub seed: u64,
}

impl Default for ToyTask {
    fn default() -> Self {
        Self {
            kind: TaskKind::Gaussian,
            d: 2,
            mean: None,
            cov: None,
            degradation: Degradation::default(),
            seed: 0,
        }
    }
}

impl ToyTask {
    pub fn new(kind: TaskKind, d: usize) -> Result<Self> {
        let task = Self {
            kind,
            d,
            ..Default::default()
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(DosError::Config("task dimension must be positive".into()));
        }
        if self.kind != TaskKind::Gaussian {
            if self.d != 2 {
                return Err(DosError::Config(format!(
                    "{} task is two-dimensional",
                    self.kind.name()
                )));
            }
            if self.mean.is_some() || self.cov.is_some() {
                return Err(DosError::Config(
                    "mean and cov apply to the gaussian task only".into(),
                ));
            }
        }
        let g = &self.degradation;
        if !(g.contraction > 0.0 && g.contraction <= 1.0) {
            return Err(DosError::Config(format!(
                "contraction must lie in (0, 1], got {}",
                g.contraction
            )));
        }
        if !(g.noise_std >= 0.0 && g.noise_std.is_finite()) {
            return Err(DosError::Config(
                "degradation noise must be nonnegative".into(),
            ));
        }
        for (name, v) in [
            ("gain", &g.gain),
            ("offset", &g.offset),
            ("mean", &self.mean),
            ("cov", &self.cov),
        ] {
            if let Some(v) = v {
                if v.len() != self.d || v.iter().any(|x| !x.is_finite()) {
                    return Err(DosError::Config(format!(
                        "{name} must hold {} finite values",
                        self.d
                    )));
                }
            }
        }
        if let Some(gain) = &g.gain {
            if gain.contains(&0.0) {
                return Err(DosError::Config("gain entries must be nonzero".into()));
            }
        }
        if self.kind == TaskKind::Gaussian {
            self.gaussian()?;
        }
        Ok(())
    }

    /// Target distribution of the gaussian task.
    pub fn gaussian(&self) -> Result<GaussianSpec> {
        if self.kind != TaskKind::Gaussian {
            return Err(DosError::Config(format!(
                "{} task has no gaussian target",
                self.kind.name()
            )));
        }
        let mean = self.mean.clone().unwrap_or_else(|| {
            (0..self.d)
                .map(|j| if j % 2 == 0 { 1.5 } else { -1.0 })
                .collect()
        });
        let cov = self.cov.clone().unwrap_or_else(|| {
            (0..self.d)
                .map(|j| if j % 2 == 0 { 0.5 } else { 0.25 })
                .collect()
        });
        GaussianSpec::new(mean, cov).map_err(|e| DosError::Config(e.to_string()))
    }

    /// Exact target mean and per-coordinate variance.
    pub fn target_moments(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok(match self.kind {
            TaskKind::Gaussian => {
                let g = self.gaussian()?;
                (g.mean, g.cov_diag)
            }
            TaskKind::GaussianMixture => {
                let v = MIXTURE_OFFSET * MIXTURE_OFFSET + MIXTURE_STD * MIXTURE_STD;
                (vec![0.0; 2], vec![v; 2])
            }
            TaskKind::Ring => {
                let v = (RING_RADIUS * RING_RADIUS + RING_STD * RING_STD) / 2.0;
                (vec![0.0; 2], vec![v; 2])
            }
        })
    }

    /// `n` target samples; row `i` depends only on `(seed, i)`.
    pub fn sample_target(&self, n: usize, seed: u64) -> Result<StateBatch> {
        let mut noise = NoiseStreams::new(seed, n);
        Ok(match self.kind {
            TaskKind::Gaussian => self.gaussian()?.sample(&mut noise),
            TaskKind::GaussianMixture => {
                let mut out = StateBatch::zeros(n, 2);
                for i in 0..n {
                    let rng = noise.row_rng(i);
                    let k: u8 = rng.random_range(0..4);
                    let centre = [
                        if k & 1 == 0 {
                            MIXTURE_OFFSET
                        } else {
                            -MIXTURE_OFFSET
                        },
                        if k & 2 == 0 {
                            MIXTURE_OFFSET
                        } else {
                            -MIXTURE_OFFSET
                        },
                    ];
                    for (v, c) in out.row_mut(i).iter_mut().zip(centre) {
                        let z: f64 = rng.sample(StandardNormal);
                        *v = c + MIXTURE_STD * z;
                    }
                }
                out
            }
            TaskKind::Ring => {
                let mut out = StateBatch::zeros(n, 2);
                for i in 0..n {
                    let rng = noise.row_rng(i);
                    let angle = 2.0 * PI * rng.random::<f64>();
                    let z: f64 = rng.sample(StandardNormal);
                    let r = RING_RADIUS + RING_STD * z;
                    out.row_mut(i)
                        .copy_from_slice(&[r * angle.cos(), r * angle.sin()]);
                }
                out
            }
        })
    }

    /// Apply the degradation row by row. Noise, if any, is drawn from streams
    /// derived from the task seed.
    pub fn degrade(&self, x0: &StateBatch) -> Result<StateBatch> {
        if x0.dim() != self.d {
            return Err(DosError::Argument("degradation dimension mismatch".into()));
        }
        let (m, _) = self.target_moments()?;
        let g = &self.degradation;
        let gain = g.gain.clone().unwrap_or_else(|| vec![1.0; self.d]);
        let offset = g.offset.clone().unwrap_or_else(|| vec![0.5; self.d]);
        let mut out = x0.clone();
        for i in 0..out.len() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = gain[j] * (m[j] + g.contraction * (*v - m[j])) + offset[j];
            }
        }
        if g.noise_std > 0.0 {
            let z = NoiseStreams::new(self.seed ^ DEGRADE_STREAM, x0.len()).standard_normal(self.d);
            out.axpy(g.noise_std, &z);
        }
        Ok(out)
    }

    /// Source points used at sampling time: the degraded target mean for the
    /// gaussian task, otherwise degraded fresh target samples.
    pub fn source_batch(&self, n: usize, seed: u64) -> Result<StateBatch> {
        match self.kind {
            TaskKind::Gaussian => {
                let mean = StateBatch::broadcast(&self.gaussian()?.mean, 1);
                let point = self.degrade(&mean)?;
                Ok(StateBatch::broadcast(point.row(0), n))
            }
            _ => self.degrade(&self.sample_target(n, seed)?),
        }
    }

    /// Training pairs `(x₀, x̂₀)`.
    pub fn training_pairs(&self, n: usize, seed: u64) -> Result<(StateBatch, StateBatch)> {
        let x0 = self.sample_target(n, seed)?;
        let xhat0 = match self.kind {
            TaskKind::Gaussian => self.source_batch(n, seed)?,
            _ => self.degrade(&x0)?,
        };
        Ok((x0, xhat0))
    }

    /// Bayes-optimal predictor; gaussian task only.
    pub fn oracle(&self, schedule: DoSSchedule) -> Result<GaussianTask> {
        let q0 = self.gaussian()?;
        let xhat0 = self.source_batch(1, 0)?.row(0).to_vec();
        GaussianTask::new(q0, xhat0, schedule)
    }
}
