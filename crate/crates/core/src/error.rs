use thiserror::Error;

use crate::conformal::ConformalError;
use crate::harness::HarnessError;
use crate::logic::LogicError;
use crate::predictors::PredictError;
use crate::rprv::RprvError;
use crate::semantics::SemanticsError;
use crate::shift::ShiftError;

/// Top-level error wrapping every module error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Rprv(#[from] RprvError),
    #[error(transparent)]
    Shift(#[from] ShiftError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
