//! Experiment runner for the cooling simulations: configuration, one
//! runner per experiment that write CSV/JSON, and run records.

pub mod config;
pub mod error;
pub mod record;
pub mod runners;

pub use config::{Experiment, ExperimentConfig, InitialState};
pub use error::{HarnessError, Result};
pub use record::RunRecord;
pub use runners::{run, run_checked, Outcome};
