//! Experiment harness for `hades-core`: seeded multi-start studies, loss
//! landscapes, the input-perturbation study, synthetic data and the CLI.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod gronwall;
pub mod landscape;
pub mod seeds;
pub mod study;

pub use config::{ExperimentConfig, OptimizerId, SignalSource};
pub use error::{BenchError, Result};
pub use study::{run_study, StudyReport};
