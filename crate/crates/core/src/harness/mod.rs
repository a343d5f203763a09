//! Experiment front end: configs, the epsilon sweep, report files and the
//! DE self-validation suite. Everything here is `f64`.

mod config;
mod report;
mod sweep;
mod validate;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{load_body, DeSettings, EvalSettings, ExperimentConfig, RobotChoice};
pub use report::{
    emit_evaluation, emit_reports, load_delta, load_report, perturbation_table, write_atomic,
    write_trace, DeltaFile, GrandAverageRecord, TableRow, BEST_TRACE_HEADER, PERTURBATIONS_HEADER,
    REWARDS_HEADER, RUN_MEANS_HEADER, TRACE_HEADER,
};
pub use sweep::{
    evaluate_delta, evaluation_seed, run_cell, run_sweep, search_seed, CellReport, SweepReport,
};
pub use validate::{
    default_suites, run_suite, validate_de, Criterion, SeedOutcome, SuiteOutcome, SuiteSpec,
};

use crate::body::BodyError;
use crate::env::EnvError;
use crate::eval::EvalError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error("search failed: {0}")]
    Search(String),
}
