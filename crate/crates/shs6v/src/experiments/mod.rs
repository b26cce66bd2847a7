//! Orchestration: flat configuration files, the weakly asymmetric
//! fluctuation scan, single trajectories and their CSV/JSON output.

mod config;
mod emit;
mod scan;
mod simulate;

pub use config::{ExperimentConfig, FlatConfig, InitialShape, LeftBoundary, Observable, ParamSource, SimulationConfig};
pub use emit::{
    emit, records_csv, render, summary_csv, trajectory_csv, OutputFormat, RECORD_HEADER, SUMMARY_HEADER,
    TRAJECTORY_HEADER,
};
pub use scan::{
    kpz_scan, layout, CoefficientReport, CovarianceEntry, FluctuationRecord, FluctuationSummary, IncrementStats,
    KpzReport, ScanLayout,
};
pub use simulate::{simulate, TrajectoryRow};

use crate::dynamics::DynamicsError;
use crate::kernels::KernelError;
use crate::params::ParamError;
use crate::stationary::StationaryError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("missing config key: {0}")]
    MissingKey(String),
    #[error("unknown config key: {0}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}")]
    InvalidValue { key: String, value: String },
    #[error("eps^2 T exceeds the horizon: eps={epsilon}, T={steps}, horizon={horizon}")]
    HorizonExceeded { epsilon: f64, steps: usize, horizon: f64 },
    #[error("window of {given} sites is below the required {required} at eps={epsilon}")]
    WindowUnderflow { epsilon: f64, required: usize, given: usize },
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Stationary(#[from] StationaryError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
