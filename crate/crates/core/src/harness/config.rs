//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::task::ToyTask;
use crate::error::{DosError, Result};
use crate::prediction::TrainConfig;
use crate::schedule::{
    DoSSchedule, NoiseSchedule, ShiftingSequence, Spacing, TimeGrid, DISPLAY_STEPS,
};
use crate::solver::{FinalOutput, SolverConfig, DEFAULT_ORDER, DEFAULT_STEPS, DEFAULT_T_END};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    LinearBeta,
    Cosine,
}

/// Noise schedule and pivot. `beta_min`/`beta_max` are per display step and
/// are scaled by `T_display` to per-unit-time rates; `t1` is a fraction of the
/// horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub beta_min: f64,
    pub beta_max: f64,
    pub t1: f64,
    #[serde(rename = "T_display")]
    pub t_display: u32,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::LinearBeta,
            beta_min: 1e-4,
            beta_max: 2e-2,
            t1: 0.5,
            t_display: DISPLAY_STEPS,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<DoSSchedule> {
        self.build_with_t1(self.t1)
    }

    pub fn build_with_t1(&self, t1: f64) -> Result<DoSSchedule> {
        if self.t_display == 0 {
            return Err(DosError::Config("T_display must be positive".into()));
        }
        let noise = match self.kind {
            ScheduleKind::LinearBeta => NoiseSchedule::LinearBeta {
                beta_min: self.beta_min * self.t_display as f64,
                beta_max: self.beta_max * self.t_display as f64,
            },
            ScheduleKind::Cosine => NoiseSchedule::cosine(),
        };
        let shift = ShiftingSequence::new(t1).map_err(|e| DosError::Config(e.to_string()))?;
        DoSSchedule::new(noise, shift).map_err(|e| DosError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub order: u8,
    pub steps: usize,
    pub t_end: f64,
    pub spacing: Spacing,
    pub final_output: FinalOutput,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            steps: DEFAULT_STEPS,
            t_end: DEFAULT_T_END,
            spacing: Spacing::UniformT,
            final_output: FinalOutput::DataPrediction,
        }
    }
}

impl SolverParams {
    pub fn build(&self, s: &DoSSchedule, seed: u64) -> Result<SolverConfig> {
        let grid = TimeGrid::new(s, self.steps, self.t_end, self.spacing)?;
        SolverConfig::new(self.order, grid, seed, self.final_output)
    }
}

/// Where data predictions come from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PredictorSource {
    /// Closed-form posterior mean; gaussian task only.
    #[default]
    Oracle,
    /// A trained network file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardParams {
    /// Number of equally spaced output times on `[0, T]`.
    pub times: usize,
    /// Monte Carlo trajectories.
    pub samples: usize,
    /// Trajectories written in full.
    pub keep: usize,
}

impl Default for ForwardParams {
    fn default() -> Self {
        Self {
            times: 101,
            samples: 2000,
            keep: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorefieldParams {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub resolution: usize,
    pub t: f64,
}

impl Default for ScorefieldParams {
    fn default() -> Self {
        Self {
            lo: [-3.0, -3.0],
            hi: [3.0, 3.0],
            resolution: 21,
            t: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    pub fractions: Vec<f64>,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            fractions: vec![1.0, 2.0 / 3.0, 0.5, 1.0 / 3.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: ToyTask,
    pub schedule: ScheduleConfig,
    pub solver: SolverParams,
    pub predictor: PredictorSource,
    pub train: TrainConfig,
    pub forward: ForwardParams,
    pub scorefield: ScorefieldParams,
    pub sweep: SweepParams,
    /// Sample count for sampling runs and training set size.
    pub samples: usize,
    /// Rows used by energy distance and step-error estimates.
    pub metric_samples: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: ToyTask::default(),
            schedule: ScheduleConfig::default(),
            solver: SolverParams::default(),
            predictor: PredictorSource::default(),
            train: TrainConfig::default(),
            forward: ForwardParams::default(),
            scorefield: ScorefieldParams::default(),
            sweep: SweepParams::default(),
            samples: 10_000,
            metric_samples: 10_000,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| DosError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DosError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        let s = self.schedule.build()?;
        self.solver
            .build(&s, self.seed)
            .map_err(|e| DosError::Config(e.to_string()))?;
        self.train.validate()?;
        if self.samples < 2 || self.metric_samples < 2 {
            return Err(DosError::Config(
                "samples and metric_samples must be at least 2".into(),
            ));
        }
        if self.forward.times < 2 || self.forward.samples == 0 {
            return Err(DosError::Config(
                "forward needs >= 2 times and >= 1 sample".into(),
            ));
        }
        if self.scorefield.resolution < 2 || !(self.scorefield.t > 0.0 && self.scorefield.t <= 1.0)
        {
            return Err(DosError::Config(
                "scorefield needs resolution >= 2 and t in (0, 1]".into(),
            ));
        }
        if self
            .sweep
            .fractions
            .iter()
            .any(|f| !(*f > 0.0 && *f <= 1.0))
            || self.sweep.fractions.is_empty()
        {
            return Err(DosError::Config(
                "sweep fractions must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}
