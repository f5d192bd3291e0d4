//! Synthetic systems, dataset IO and the repeated coverage experiment.

mod dataset;
mod experiment;
mod generators;

use thiserror::Error;

pub use dataset::{
    load_predictions, load_trajectories, load_weights, read_trajectories_from, read_weights_from, save_trajectories,
    select, split_ids, write_trajectories_to, SplitSizes, Splits,
};
pub use experiment::{
    emit_report, mean_se, paired_difference, run_experiment, CoverageReport, CoverageRow, EpsilonSpec, ExperimentConfig,
    ExperimentSummary, GraphMismatch, MethodSummary, MethodTiming, PredictorSpec, SystemSpec, Timing, Variant,
    swarm_formula,
};
pub use generators::{generate_noisy_reference, generate_swarm_lite, ReferenceCurve, SwarmParams};

use crate::conformal::ConformalError;
use crate::predictors::PredictError;
use crate::rprv::RprvError;
use crate::semantics::SemanticsError;
use crate::shift::ShiftError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("duplicate row for trial {trial}, time {time}, agent {agent}")]
    Duplicate { trial: usize, time: usize, agent: usize },
    #[error("trial {trial}: expected time {expected}, found {found}")]
    NonContiguous { trial: usize, expected: usize, found: usize },
    #[error("trial {trial}, time {time}: agents must be exactly 1..={agents}")]
    Agents { trial: usize, time: usize, agents: usize },
    #[error("trial {0} not found")]
    MissingTrial(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Rprv(#[from] RprvError),
    #[error(transparent)]
    Shift(#[from] ShiftError),
}
