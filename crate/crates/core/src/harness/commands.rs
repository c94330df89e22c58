use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PredictorSource, SolverParams};
use super::task::TaskKind;
use super::{columns, write_csv};
use crate::error::{DosError, Result};
use crate::forward::{marginal_moments, sample_transition};
use crate::metrics::{energy_distance, moment_errors};
use crate::noise::NoiseStreams;
use crate::prediction::{held_out_loss, CountingPredictor, Predictor, TinyMlp, Trainer, ZeroNoise};
use crate::schedule::{display_step, DoSSchedule, Spacing, HORIZON};
use crate::solver::{
    exact_step_quadrature, init_state, sample, step, SolverState, TraceRow, DEFAULT_QUAD_POINTS,
};
use crate::state::StateBatch;

pub const SUMMARY_FILE: &str = "summary.json";

/// Rows used for the quadrature comparison in order sweeps.
const STEP_ERROR_ROWS: usize = 256;

// Stream offsets keeping independent draws apart under one user seed.
const TARGET_STREAM: u64 = 0x7a59_e700;
const HELD_OUT_STREAM: u64 = 0x4e1d_0b00;
const TRAJECTORY_STREAM: u64 = 0x0f0d_0a00;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub t1: f64,
    pub order: u8,
    pub steps: usize,
    pub spacing: Spacing,
    pub nfe: usize,
    pub samples: usize,
    /// α at the pivot; the mean scale of the initial state.
    pub init_alpha: f64,
    pub energy_distance: f64,
    pub mean_error: f64,
    pub var_error: f64,
    /// Mean RMS gap between deterministic solver steps and quadrature.
    pub step_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub steps: usize,
    pub final_running_loss: f64,
    pub held_out_loss: f64,
    pub zero_baseline_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub task: String,
    pub seed: u64,
    pub wall_time_s: f64,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<RunSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingSummary>,
}

impl Summary {
    fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            command: command.into(),
            task: cfg.task.kind.name().into(),
            seed: cfg.seed,
            wall_time_s: 0.0,
            files: Vec::new(),
            runs: Vec::new(),
            training: None,
        }
    }

    fn finish(mut self, out: &Path, started: Instant) -> Result<Self> {
        self.wall_time_s = started.elapsed().as_secs_f64();
        self.files.push(SUMMARY_FILE.into());
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(out.join(SUMMARY_FILE), text + "\n")?;
        Ok(self)
    }
}

fn prepare(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

/// The configured predictor for schedule `s`.
pub fn load_predictor(cfg: &ExperimentConfig, s: &DoSSchedule) -> Result<Box<dyn Predictor>> {
    match &cfg.predictor {
        PredictorSource::Oracle => {
            if cfg.task.kind != TaskKind::Gaussian {
                return Err(DosError::Config(format!(
                    "oracle predictor needs the gaussian task, got {}",
                    cfg.task.kind.name()
                )));
            }
            Ok(Box::new(cfg.task.oracle(*s)?))
        }
        PredictorSource::File { path } => {
            if !path.is_file() {
                return Err(DosError::Config(format!(
                    "predictor file {} not found",
                    path.display()
                )));
            }
            let net = TinyMlp::load(path)?;
            if net.schedule() != s {
                return Err(DosError::Config(format!(
                    "predictor {} was trained for a different schedule",
                    path.display()
                )));
            }
            if net.dim() != cfg.task.d {
                return Err(DosError::Config(
                    "predictor dimension does not match the task".into(),
                ));
            }
            Ok(Box::new(net))
        }
    }
}

fn head(x: &StateBatch, n: usize) -> Result<StateBatch> {
    let n = n.min(x.len());
    StateBatch::new(n, x.dim(), x.as_slice()[..n * x.dim()].to_vec())
}

fn write_samples(path: &Path, x: &StateBatch) -> Result<()> {
    let header: Vec<String> = columns("x", x.dim()).collect();
    write_csv(path, &header, x.rows().map(<[f64]>::to_vec))
}

fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let header: Vec<String> = [
        "step", "t", "lambda", "order", "linear", "dosg", "pat", "noise",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    write_csv(
        path,
        &header,
        trace.iter().map(|r| {
            vec![
                r.step as f64,
                r.t,
                r.lambda,
                r.order as f64,
                r.norm_linear,
                r.norm_dosg,
                r.norm_pat,
                r.norm_noise,
            ]
        }),
    )
}

struct SamplingRun {
    samples: StateBatch,
    trace: Vec<TraceRow>,
    summary: RunSummary,
}

fn run_sampling<P: Predictor>(
    cfg: &ExperimentConfig,
    s: &DoSSchedule,
    predictor: P,
    params: &SolverParams,
) -> Result<SamplingRun> {
    let solver_cfg = params.build(s, cfg.seed)?;
    let xhat0 = cfg.task.source_batch(cfg.samples, cfg.seed)?;
    let counted = CountingPredictor::new(predictor);
    let run = sample(&counted, &xhat0, &solver_cfg, s)?;
    let nfe = counted.calls();
    if !run.samples.is_finite() {
        return Err(DosError::Numeric(
            "sampler produced non-finite samples".into(),
        ));
    }
    let target = cfg
        .task
        .sample_target(cfg.metric_samples, cfg.seed ^ TARGET_STREAM)?;
    let ed = energy_distance(&head(&run.samples, cfg.metric_samples)?, &target)?;
    let (mean, var) = cfg.task.target_moments()?;
    let errs = moment_errors(&run.samples, &mean, &var)?;
    Ok(SamplingRun {
        summary: RunSummary {
            t1: s.t1(),
            order: params.order,
            steps: params.steps,
            spacing: params.spacing,
            nfe,
            samples: run.samples.len(),
            init_alpha: s.eval_noise(s.t1())?.0,
            energy_distance: ed,
            mean_error: errs.mean,
            var_error: errs.var,
            step_error: None,
        },
        samples: run.samples,
        trace: run.trace,
    })
}

/// Mean RMS difference between each deterministic solver step and the
/// quadrature solution from the same state, along the noise-free solver path.
/// Steps leaving the pivot are skipped.
pub fn deterministic_step_error<P: Predictor + ?Sized>(
    predictor: &P,
    xhat0: &StateBatch,
    params: &SolverParams,
    s: &DoSSchedule,
    seed: u64,
) -> Result<f64> {
    let solver_cfg = params.build(s, seed)?;
    let mut noise = NoiseStreams::new(seed, xhat0.len());
    let x = init_state(xhat0, s.t1(), s, Some(&mut noise))?;
    let mut state = SolverState::new(x);
    let mut errs = Vec::new();
    for w in solver_cfg.grid.times().windows(2) {
        if s.point(w[0]).lambda.is_finite() {
            let mut probe = state.clone();
            let ours = step(
                &mut probe,
                params.order,
                w[0],
                w[1],
                predictor,
                xhat0,
                s,
                None,
            )?
            .deterministic();
            let exact = exact_step_quadrature(
                &state.x,
                w[0],
                w[1],
                predictor,
                xhat0,
                s,
                DEFAULT_QUAD_POINTS,
            )?;
            let diff = ours.zip_map(&exact.deterministic(), |a, b| a - b);
            errs.push(diff.rms_norm());
        }
        step(
            &mut state,
            params.order,
            w[0],
            w[1],
            predictor,
            xhat0,
            s,
            None,
        )?;
    }
    if errs.is_empty() {
        return Err(DosError::Argument(
            "no step with finite lambda to compare".into(),
        ));
    }
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Forward process demo: schedule curves, Monte Carlo moments and a few full
/// trajectories built from exact transitions.
pub fn cmd_forward(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    let started = Instant::now();
    prepare(out)?;
    let s = cfg.schedule.build()?;
    let mut summary = Summary::new("forward", cfg);
    let p = &cfg.forward;
    let times: Vec<f64> = (0..p.times)
        .map(|i| HORIZON * i as f64 / (p.times - 1) as f64)
        .collect();

    let header: Vec<String> = ["t", "step", "alpha", "sigma", "eta", "lambda"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_csv(
        &out.join("curves.csv"),
        &header,
        times.iter().map(|&t| {
            let q = s.point(t);
            vec![t, display_step(t) as f64, q.alpha, q.sigma, q.eta, q.lambda]
        }),
    )?;

    let (x0, xhat0) = cfg.task.training_pairs(p.samples, cfg.seed)?;
    let d = x0.dim();
    let gaussian = match cfg.task.kind {
        TaskKind::Gaussian => Some(cfg.task.gaussian()?),
        _ => None,
    };
    let mut noise = NoiseStreams::new(cfg.seed ^ TRAJECTORY_STREAM, x0.len());
    let mut x = x0.clone();
    let mut moment_rows = Vec::with_capacity(times.len());
    let mut traj_rows = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        if k > 0 {
            x = sample_transition(&x, &x0, &xhat0, times[k - 1], t, &s, &mut noise)?;
        }
        let mut row = vec![t];
        row.extend(x.column_mean());
        row.extend(if x.len() > 1 {
            x.column_var()
        } else {
            vec![0.0; d]
        });
        if let Some(q0) = &gaussian {
            let (m, v) = marginal_moments(q0, xhat0.row(0), t, &s)?;
            row.extend(m);
            row.extend(v);
        }
        moment_rows.push(row);
        for i in 0..p.keep.min(x.len()) {
            let mut r = vec![t, i as f64];
            r.extend_from_slice(x.row(i));
            traj_rows.push(r);
        }
    }
    let mut header: Vec<String> = vec!["t".into()];
    header.extend(columns("mc_mean_", d));
    header.extend(columns("mc_var_", d));
    if gaussian.is_some() {
        header.extend(columns("mean_", d));
        header.extend(columns("var_", d));
    }
    write_csv(&out.join("moments.csv"), &header, moment_rows)?;
    let mut header: Vec<String> = vec!["t".into(), "id".into()];
    header.extend(columns("x", d));
    write_csv(&out.join("trajectories.csv"), &header, traj_rows)?;

    summary.files = vec![
        "curves.csv".into(),
        "moments.csv".into(),
        "trajectories.csv".into(),
    ];
    summary.finish(out, started)
}

/// One sampling run with the configured solver.
pub fn cmd_sample(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    let started = Instant::now();
    prepare(out)?;
    let s = cfg.schedule.build()?;
    let predictor = load_predictor(cfg, &s)?;
    let run = run_sampling(cfg, &s, predictor, &cfg.solver)?;
    write_samples(&out.join("samples.csv"), &run.samples)?;
    write_trace(&out.join("trace.csv"), &run.trace)?;
    let mut summary = Summary::new("sample", cfg);
    summary.files = vec!["samples.csv".into(), "trace.csv".into()];
    summary.runs.push(run.summary);
    summary.finish(out, started)
}

fn run_table(out: &Path, name: &str, runs: &[RunSummary]) -> Result<()> {
    let header: Vec<String> = [
        "t1",
        "order",
        "steps",
        "nfe",
        "init_alpha",
        "energy_distance",
        "mean_error",
        "var_error",
        "step_error",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    write_csv(
        &out.join(name),
        &header,
        runs.iter().map(|r| {
            vec![
                r.t1,
                r.order as f64,
                r.steps as f64,
                r.nfe as f64,
                r.init_alpha,
                r.energy_distance,
                r.mean_error,
                r.var_error,
                r.step_error.unwrap_or(f64::NAN),
            ]
        }),
    )
}

/// Sample quality across pivots `t1 = fraction · T`. The oracle is rebuilt for
/// each pivot; a network predictor is retrained on the task for each pivot.
pub fn cmd_sweep_t1(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    let started = Instant::now();
    prepare(out)?;
    let mut summary = Summary::new("sweep-t1", cfg);
    for (k, &frac) in cfg.sweep.fractions.iter().enumerate() {
        let s = cfg.schedule.build_with_t1(frac * HORIZON)?;
        let predictor: Box<dyn Predictor> = match &cfg.predictor {
            PredictorSource::Oracle => load_predictor(cfg, &s)?,
            PredictorSource::File { .. } => {
                let (x0, xhat0) = cfg.task.training_pairs(cfg.samples, cfg.seed)?;
                let mut trainer = Trainer::new(&x0, &xhat0, &s, cfg.train.clone())?;
                while !trainer.done() {
                    trainer.step()?;
                }
                let net = trainer.finish().predictor;
                let name = format!("predictor_t1_{k}.bin");
                net.save(&out.join(&name))?;
                summary.files.push(name);
                Box::new(net)
            }
        };
        summary
            .runs
            .push(run_sampling(cfg, &s, predictor, &cfg.solver)?.summary);
    }
    run_table(out, "sweep_t1.csv", &summary.runs)?;
    summary.files.push("sweep_t1.csv".into());
    summary.finish(out, started)
}

/// Orders 1 to 3 at the configured step count, same seed for each.
pub fn cmd_sweep_order(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    let started = Instant::now();
    prepare(out)?;
    let s = cfg.schedule.build()?;
    let predictor = load_predictor(cfg, &s)?;
    let probe = cfg
        .task
        .source_batch(STEP_ERROR_ROWS.min(cfg.samples), cfg.seed)?;
    let mut summary = Summary::new("sweep-order", cfg);
    for order in 1..=3 {
        let params = SolverParams {
            order,
            ..cfg.solver
        };
        let mut run = run_sampling(cfg, &s, &*predictor, &params)?.summary;
        run.step_error = Some(deterministic_step_error(
            &*predictor,
            &probe,
            &params,
            &s,
            cfg.seed,
        )?);
        summary.runs.push(run);
    }
    run_table(out, "sweep_order.csv", &summary.runs)?;
    summary.files.push("sweep_order.csv".into());
    summary.finish(out, started)
}

/// Score field on a regular 2-D grid at the configured time.
pub fn cmd_scorefield(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    let started = Instant::now();
    if cfg.task.d != 2 {
        return Err(DosError::Config(format!(
            "scorefield needs d = 2, got {}",
            cfg.task.d
        )));
    }
    prepare(out)?;
    let s = cfg.schedule.build()?;
    let predictor = load_predictor(cfg, &s)?;
    let p = &cfg.scorefield;
    let r = p.resolution;
    let coord = |k: usize, i: usize| p.lo[k] + (p.hi[k] - p.lo[k]) * i as f64 / (r - 1) as f64;
    let mut nodes = Vec::with_capacity(r * r);
    for i in 0..r {
        for j in 0..r {
            nodes.push(vec![coord(0, i), coord(1, j)]);
        }
    }
    let x = StateBatch::from_rows(&nodes)?;
    let (mean, _) = cfg.task.target_moments()?;
    let source = cfg.task.degrade(&StateBatch::broadcast(&mean, 1))?;
    let xhat0 = StateBatch::broadcast(source.row(0), x.len());
    let score = predictor.predict_score(&x, &xhat0, p.t)?;
    let header: Vec<String> = ["x", "y", "score_x", "score_y"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_csv(
        &out.join("scorefield.csv"),
        &header,
        x.rows()
            .zip(score.rows())
            .map(|(a, b)| vec![a[0], a[1], b[0], b[1]]),
    )?;
    let mut summary = Summary::new("scorefield", cfg);
    summary.files = vec!["scorefield.csv".into()];
    summary.finish(out, started)
}

/// Train a network on the task. On divergence the last finite parameters are
/// written to `predictor_last_good.bin` before the error is returned.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    let started = Instant::now();
    prepare(out)?;
    let s = cfg.schedule.build()?;
    let (x0, xhat0) = cfg.task.training_pairs(cfg.samples, cfg.seed)?;
    let mut trainer = Trainer::new(&x0, &xhat0, &s, cfg.train.clone())?;
    let write_losses = |losses: &[f64]| {
        let running = crate::prediction::running_mean(losses, crate::prediction::RUNNING_WINDOW);
        let header: Vec<String> = ["step", "loss", "running_loss"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        write_csv(
            &out.join("loss.csv"),
            &header,
            losses
                .iter()
                .zip(&running)
                .enumerate()
                .map(|(i, (l, r))| vec![(i + 1) as f64, *l, *r]),
        )
    };
    while !trainer.done() {
        let last_good = trainer.network().clone();
        if let Err(e) = trainer.step() {
            let path = out.join("predictor_last_good.bin");
            last_good.save(&path)?;
            write_losses(trainer.losses())?;
            return Err(match e {
                DosError::Training { step, detail } => DosError::Training {
                    step,
                    detail: format!("{detail}; last good parameters in {}", path.display()),
                },
                other => other,
            });
        }
    }
    let report = trainer.finish();
    report.predictor.save(&out.join("predictor.bin"))?;
    write_losses(&report.losses)?;

    let (hx, hxh) = cfg.task.training_pairs(
        cfg.metric_samples.min(cfg.samples),
        cfg.seed ^ HELD_OUT_STREAM,
    )?;
    let held_out = held_out_loss(&report.predictor, &hx, &hxh, cfg.seed ^ HELD_OUT_STREAM)?;
    let zero = held_out_loss(
        &ZeroNoise { schedule: s },
        &hx,
        &hxh,
        cfg.seed ^ HELD_OUT_STREAM,
    )?;
    let mut summary = Summary::new("train", cfg);
    summary.files = vec!["predictor.bin".into(), "loss.csv".into()];
    summary.training = Some(TrainingSummary {
        steps: report.losses.len(),
        final_running_loss: report.final_running_loss,
        held_out_loss: held_out,
        zero_baseline_loss: zero,
    });
    summary.finish(out, started)
}
