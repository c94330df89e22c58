//! Experiment suite behind the command-line tool.
//!
//! Every command reads an [`ExperimentConfig`], writes CSV arrays and a
//! `summary.json` into the output directory, and is deterministic for a fixed
//! seed apart from the `wall_time_s` field.

mod commands;
mod config;
mod task;

pub use commands::{
    cmd_forward, cmd_sample, cmd_scorefield, cmd_sweep_order, cmd_sweep_t1, cmd_train,
    deterministic_step_error, load_predictor, RunSummary, Summary, TrainingSummary, SUMMARY_FILE,
};
pub use config::{
    ExperimentConfig, ForwardParams, PredictorSource, ScheduleConfig, ScheduleKind,
    ScorefieldParams, SolverParams, SweepParams,
};
pub use task::{Degradation, TaskKind, ToyTask};

use std::path::Path;

use crate::error::{DosError, Result};

/// JSON schema every `summary.json` conforms to.
pub const SUMMARY_SCHEMA: &str = include_str!("../../schema/summary.schema.json");

fn io_error(e: csv::Error) -> DosError {
    DosError::Io(std::io::Error::other(e.to_string()))
}

/// Write a numeric table with a header row.
pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut w = csv::Writer::from_path(path).map_err(io_error)?;
    w.write_record(header).map_err(io_error)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(DosError::Argument(format!(
                "csv row has {} fields, header {}",
                row.len(),
                header.len()
            )));
        }
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(io_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a table written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(io_error)?;
    let header = r
        .headers()
        .map_err(io_error)?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(io_error)?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| DosError::Numeric(format!("bad csv field {f:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn columns(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (0..d).map(move |j| format!("{prefix}{j}"))
}
