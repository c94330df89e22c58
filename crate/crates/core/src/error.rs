use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum DosError {
    /// A time argument fell outside the admissible interval.
    #[error("time {t} outside admissible range [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },

    /// Evaluation hit the η = 1 (λ = ∞) singularity or σ = 0.
    #[error("singularity at t = {t}: {what}")]
    Singularity { t: f64, what: &'static str },

    /// Malformed call arguments (shapes, step counts, orderings).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The noise schedule produced an inconsistent quantity (e.g. negative g²).
    #[error("schedule inconsistency at t = {t}: {what}")]
    Schedule { t: f64, what: String },

    /// Degenerate λ spacing in a multistep update.
    #[error("degenerate grid: {0}")]
    Grid(String),

    /// Quadrature or iteration failed to converge.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Training diverged.
    #[error("training diverged at step {step}: {detail}")]
    Training { step: usize, detail: String },

    /// Invalid experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl DosError {
    /// Stable machine-readable tag, used by the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            DosError::Domain { .. } => "domain",
            DosError::Singularity { .. } => "singularity",
            DosError::Argument(_) => "argument",
            DosError::Schedule { .. } => "schedule",
            DosError::Grid(_) => "grid",
            DosError::Numeric(_) => "numeric",
            DosError::Training { .. } => "training",
            DosError::Config(_) => "config",
            DosError::Io(_) => "io",
            DosError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, DosError>;
