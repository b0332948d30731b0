//! Experiments, file formats and the command line on top of `tdoc-core`.
//!
//! A run is described by an [`ExperimentConfig`] (TOML, optionally layered
//! over one of the [`presets`]), turned into numerical objects by
//! [`problem::Problem`], optimized by [`artifacts::Experiment`] and written
//! out as CSV/JSON [`artifacts::RunArtifacts`]. The [`oracle`] module holds
//! the dense brute-force references used by `validate --deep` and the tests.

pub mod artifacts;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod oracle;
pub mod presets;
pub mod problem;
pub mod reference;
pub mod sweep;
pub mod table;
pub mod validate;

pub use artifacts::{run_experiment, Experiment, RunArtifacts};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
