//! Trajectory predictors producing `X̂ = (X_obs, X̂_{t+1|t}, …, X̂_{t+H|t})`.
//!
//! Both built-in predictors treat every state component of every agent as an
//! independent scalar series.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{formula_length, Formula};
use crate::semantics::{SemanticsError, Trajectory};

const RIDGE_LAMBDA: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("observation too short: need {needed} time steps, have {len}")]
    TooShort { needed: usize, len: usize },
    #[error("empty training set")]
    EmptyTraining,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("AR order must be at least 1")]
    ZeroOrder,
    #[error("non-finite coefficient after fitting component {0}")]
    NonFinite(usize),
    #[error("no external prediction for trial {0}")]
    MissingExternal(usize),
    #[error("prediction time t = {t} is past τ0 + L = {end}")]
    BadHorizon { t: usize, end: usize },
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

/// Observed prefix followed by `h` predicted states.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictedTrajectory {
    full: Trajectory,
    t: usize,
    h: usize,
}

impl PredictedTrajectory {
    pub fn new(observed: &Trajectory, predictions: &Trajectory) -> Result<Self, PredictError> {
        let full = observed.concat(predictions)?;
        Ok(PredictedTrajectory { t: observed.len() - 1, h: predictions.len(), full })
    }

    /// Prediction with `h = 0`, i.e. the observation itself.
    pub fn observed_only(observed: &Trajectory) -> Self {
        PredictedTrajectory { t: observed.len() - 1, h: 0, full: observed.clone() }
    }

    /// `(X_obs, X̂)` as one trajectory of length `t + h + 1`.
    pub fn full(&self) -> &Trajectory {
        &self.full
    }
    pub fn t(&self) -> usize {
        self.t
    }
    pub fn h(&self) -> usize {
        self.h
    }
}

/// Prediction horizon `H = τ0 + L^φ − t`.
pub fn horizon(f: &Formula, tau0: usize, t: usize) -> Result<usize, PredictError> {
    let end = tau0 + formula_length(f);
    end.checked_sub(t).ok_or(PredictError::BadHorizon { t, end })
}

pub trait Predictor: Sync {
    /// Predicts `h` steps past the last observed time of `x_obs`.
    fn predict(&self, x_obs: &Trajectory, h: usize) -> Result<PredictedTrajectory, PredictError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PredictorKind {
    ConstantVelocity,
    Ar { order: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub dataset: String,
    pub size: usize,
    /// Components whose normal equations needed the ridge fallback.
    pub ridge_components: Vec<usize>,
}

/// A fitted predictor. AR coefficients are stored per flattened state
/// component as `[intercept, a_1, …, a_p]` with `a_i` weighting `x_{τ−i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    pub kind: PredictorKind,
    pub agents: usize,
    pub dims: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coefficients: Vec<Vec<f64>>,
    pub meta: TrainingMeta,
}

impl PredictorModel {
    pub fn constant_velocity(agents: usize, dims: usize) -> Self {
        PredictorModel { kind: PredictorKind::ConstantVelocity, agents, dims, coefficients: vec![], meta: TrainingMeta::default() }
    }

    /// Fits on times `0..=t+h` of each training trajectory.
    pub fn fit(kind: PredictorKind, train: &[Trajectory], t: usize, h: usize, dataset: &str) -> Result<Self, PredictError> {
        let first = train.first().ok_or(PredictError::EmptyTraining)?;
        let (agents, dims) = (first.agents(), first.dims());
        for x in train {
            if x.agents() != agents || x.dims() != dims {
                return Err(PredictError::Shape(format!("training trajectory {} has a different shape", x.id())));
            }
            if x.len() < t + h + 1 {
                return Err(PredictError::TooShort { needed: t + h + 1, len: x.len() });
            }
        }
        let meta = TrainingMeta { dataset: dataset.into(), size: train.len(), ridge_components: vec![] };
        let p = match kind {
            PredictorKind::ConstantVelocity => {
                return Ok(PredictorModel { meta, ..Self::constant_velocity(agents, dims) });
            }
            PredictorKind::Ar { order: 0 } => return Err(PredictError::ZeroOrder),
            PredictorKind::Ar { order } => order,
        };
        let end = t + h;
        if end < p {
            return Err(PredictError::TooShort { needed: p + 1, len: end + 1 });
        }
        let width = agents * dims;
        let mut model = PredictorModel { kind, agents, dims, coefficients: Vec::with_capacity(width), meta };
        for c in 0..width {
            let rows = train.len() * (end + 1 - p);
            let mut xm = DMatrix::<f64>::zeros(rows, p + 1);
            let mut y = DVector::<f64>::zeros(rows);
            let mut r = 0;
            for x in train {
                for tau in p..=end {
                    xm[(r, 0)] = 1.0;
                    for i in 1..=p {
                        xm[(r, i)] = x.flat(tau - i)[c];
                    }
                    y[r] = x.flat(tau)[c];
                    r += 1;
                }
            }
            let (coef, ridge) = least_squares(&xm, &y);
            if ridge {
                model.meta.ridge_components.push(c);
            }
            if coef.iter().any(|v| !v.is_finite()) {
                return Err(PredictError::NonFinite(c));
            }
            model.coefficients.push(coef);
        }
        Ok(model)
    }

    fn min_obs(&self) -> usize {
        match self.kind {
            PredictorKind::ConstantVelocity => 2,
            PredictorKind::Ar { order } => order.max(2),
        }
    }
}

/// Ordinary least squares via the normal equations, with a ridge fallback
/// when they are rank deficient.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> (Vec<f64>, bool) {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let n = xtx.nrows();
    let scale = xtx.diagonal().amax().max(1.0);
    let rank = xtx.clone().svd(false, false).rank(scale * 1e-12);
    if rank == n {
        if let Some(ch) = xtx.clone().cholesky() {
            return (ch.solve(&xty).iter().copied().collect(), false);
        }
    }
    let reg = xtx + DMatrix::<f64>::identity(n, n) * RIDGE_LAMBDA;
    let sol = match reg.clone().cholesky() {
        Some(ch) => ch.solve(&xty),
        None => reg.lu().solve(&xty).unwrap_or_else(|| DVector::zeros(n)),
    };
    (sol.iter().copied().collect(), true)
}

impl Predictor for PredictorModel {
    fn predict(&self, x_obs: &Trajectory, h: usize) -> Result<PredictedTrajectory, PredictError> {
        if x_obs.agents() != self.agents || x_obs.dims() != self.dims {
            return Err(PredictError::Shape(format!(
                "observation has {}x{} states, model expects {}x{}",
                x_obs.agents(),
                x_obs.dims(),
                self.agents,
                self.dims
            )));
        }
        let need = self.min_obs();
        if x_obs.len() < need {
            return Err(PredictError::TooShort { needed: need, len: x_obs.len() });
        }
        if h == 0 {
            return Ok(PredictedTrajectory::observed_only(x_obs));
        }
        let width = self.agents * self.dims;
        let t = x_obs.len() - 1;
        let mut out = vec![0.0; h * width];
        for c in 0..width {
            match self.kind {
                PredictorKind::ConstantVelocity => {
                    let last = x_obs.flat(t)[c];
                    let v = last - x_obs.flat(t - 1)[c];
                    for k in 1..=h {
                        out[(k - 1) * width + c] = last + k as f64 * v;
                    }
                }
                PredictorKind::Ar { order } => {
                    let coef = &self.coefficients[c];
                    // history[j] = x_{t+1−order+j}
                    let mut hist: Vec<f64> = (t + 1 - order..=t).map(|tau| x_obs.flat(tau)[c]).collect();
                    for k in 1..=h {
                        let n = hist.len();
                        let next = coef[0] + (1..=order).map(|i| coef[i] * hist[n - i]).sum::<f64>();
                        out[(k - 1) * width + c] = next;
                        hist.push(next);
                    }
                }
            }
        }
        let pred = Trajectory::new(x_obs.id(), h, self.agents, self.dims, out)?;
        PredictedTrajectory::new(x_obs, &pred)
    }
}

/// Precomputed predictions keyed by trial id, e.g. from an external model.
#[derive(Clone, Debug, Default)]
pub struct ExternalPredictions {
    by_trial: HashMap<usize, Trajectory>,
}

impl ExternalPredictions {
    pub fn new(predictions: impl IntoIterator<Item = Trajectory>) -> Self {
        ExternalPredictions { by_trial: predictions.into_iter().map(|p| (p.id(), p)).collect() }
    }

    pub fn len(&self) -> usize {
        self.by_trial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_trial.is_empty()
    }
}

impl Predictor for ExternalPredictions {
    fn predict(&self, x_obs: &Trajectory, h: usize) -> Result<PredictedTrajectory, PredictError> {
        if h == 0 {
            return Ok(PredictedTrajectory::observed_only(x_obs));
        }
        let p = self.by_trial.get(&x_obs.id()).ok_or(PredictError::MissingExternal(x_obs.id()))?;
        if p.len() < h {
            return Err(PredictError::TooShort { needed: h, len: p.len() });
        }
        let p = if p.len() == h { p.clone() } else { p.prefix(h - 1)? };
        PredictedTrajectory::new(x_obs, &p)
    }
}
