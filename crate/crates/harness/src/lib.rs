//! Experiment harness: configuration files, presets, batch runs and
//! artifact emission around [`asyncfo_core`].

pub mod config;
pub mod error;
pub mod experiment;
pub mod presets;
pub mod setup;

pub use config::SimConfig;
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, simulate, sweep, Experiment, ExperimentSummary};
pub use presets::{preset_aircraft, preset_qp};
