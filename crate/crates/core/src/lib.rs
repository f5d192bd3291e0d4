//! Robust predictive runtime verification for stochastic multi-agent systems.
//!
//! The crate is organised bottom-up:
//!
//! - [`logic`]: formula AST, DSL parser/printer, formula length, positive normal form.
//! - [`semantics`]: Boolean and robust semantics of STL and STREL over discrete trajectories.
//! - [`conformal`]: vanilla and f-divergence robust conformal quantiles.
//! - [`predictors`]: trajectory predictor interface plus constant-velocity and AR predictors.
//! - [`rprv`]: accurate and interpretable calibration/verification methods.
//! - [`shift`]: KDE-based estimation of the total-variation shift between score samples.
//! - [`harness`]: synthetic systems, dataset IO and the repeated coverage experiment.

pub mod conformal;
pub mod error;
pub mod ext_real;
pub mod harness;
pub mod logic;
pub mod predictors;
pub mod rprv;
pub mod semantics;
pub mod shift;

pub use error::{Error, Result};
pub use ext_real::ExtReal;
