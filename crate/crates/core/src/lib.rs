//! Domain-shift diffusion SDE: forward process, predictors and fast
//! reverse-time solvers.

pub mod error;
pub mod forward;
pub mod harness;
pub mod metrics;
pub mod noise;
pub mod prediction;
pub mod schedule;
pub mod solver;
pub mod state;

pub use error::{DosError, Result};
pub use state::StateBatch;
