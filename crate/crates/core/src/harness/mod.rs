//! Config-driven scenario runner: composes field model, noise, chopping,
//! lock-in and spectral analysis, and writes plot-ready artifacts.

mod artifacts;
mod config;
mod demo;
mod run;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use artifacts::{
    create_run_dir, write_demo_artifacts, write_index, write_scenario_artifacts,
    write_suite_artifacts,
};
pub use config::{
    Acquisition, Analysis, Mode, OutputOptions, ScenarioConfig, SuiteConfig, SuitePoint,
};
pub use demo::{run_dynamics_demo, DynamicsDemo};
pub use run::{
    calibrate, predict_table, run_scenario, run_suite, suite_scenario, sweep_dc_bias,
    ComparisonReport, ComparisonRow, PathResult, PredictRow, ScenarioOutcome, SuiteOutcome,
    SweepRow,
};

use crate::chain::ChainError;
use crate::dynamics::DynamicsError;
use crate::field::FieldError;
use crate::lockin::LockInError;
use crate::spectrum::SpectrumError;
use crate::trace::TraceError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at `{path}`: {msg}")]
    ConfigInvalid { path: String, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    LockIn(#[from] LockInError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

impl HarnessError {
    pub fn is_config_error(&self) -> bool {
        matches!(self, HarnessError::ConfigInvalid { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }
}
