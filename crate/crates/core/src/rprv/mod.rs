//! Robust predictive runtime verification.
//!
//! Three method families, each for STL and STREL:
//!
//! - accurate: conformalises `ρ(X̂) − ρ(X)` for the whole formula;
//! - interp1 (Variant I): conformalises normalised state prediction errors
//!   and bounds each predicate by its infimum over a norm ball around `X̂`;
//! - interp2 (Variant II): conformalises normalised predicate robustness
//!   errors and shifts each predicate value directly.
//!
//! Interpretable verdicts evaluate the formula in positive normal form with
//! true predicate values up to `t` and the per-predicate bounds after it.

mod ball;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use ball::bound as ball_bound;

use crate::conformal::{robust_quantile, ConformalError, DivergenceSpec};
use crate::logic::{parse, to_pnf, Dialect, Expr, Formula, LogicError, Norm};
use crate::predictors::{horizon, PredictError, PredictedTrajectory, Predictor};
use crate::semantics::{
    check_vars, eval_robust_stl, eval_robust_strel, graph_at, predicate_demands, Evaluator, Locs, SemanticsError,
    StateValuation, Trajectory, Valuation, View, WeightSpec,
};
use crate::ExtReal;

/// Floor applied to every normalisation constant.
pub const ALPHA_MIN: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum RprvError {
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error("no finite Lipschitz constant for predicate expression {0}")]
    UnsupportedPredicate(String),
    #[error("empty α dataset")]
    EmptyAlpha,
    #[error("empty calibration dataset")]
    EmptyCalibration,
    #[error("trial {0} appears in both the α and the calibration dataset")]
    OverlappingSplits(usize),
    #[error("STREL monitoring needs a weight specification")]
    MissingWeights,
    #[error("{0} needs an α table")]
    MissingAlpha(Method),
    #[error("artifact does not match the monitor: {0}")]
    ArtifactMismatch(String),
    #[error("unknown method '{0}'")]
    UnknownMethod(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Accurate,
    Interp1,
    Interp2,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Accurate, Family::Interp1, Family::Interp2];

    pub fn name(self) -> &'static str {
        match self {
            Family::Accurate => "accurate",
            Family::Interp1 => "interp1",
            Family::Interp2 => "interp2",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = RprvError;
    fn from_str(s: &str) -> Result<Self, RprvError> {
        Family::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| RprvError::UnknownMethod(s.into()))
    }
}

/// A method family applied to a dialect, e.g. `interp2-strel`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Method {
    pub family: Family,
    pub dialect: Dialect,
}

impl Method {
    pub fn new(family: Family, dialect: Dialect) -> Self {
        Method { family, dialect }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match self.dialect {
            Dialect::Stl => "stl",
            Dialect::Strel => "strel",
        };
        write!(f, "{}-{d}", self.family.name())
    }
}

impl FromStr for Method {
    type Err = RprvError;
    fn from_str(s: &str) -> Result<Self, RprvError> {
        let (fam, d) = s.rsplit_once('-').ok_or_else(|| RprvError::UnknownMethod(s.into()))?;
        let dialect = d.parse().map_err(|_| RprvError::UnknownMethod(s.into()))?;
        Ok(Method { family: fam.parse()?, dialect })
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Serializable description of a monitoring task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorSpec {
    pub formula: String,
    pub dialect: Dialect,
    pub tau0: usize,
    pub t: usize,
    /// Number of agents `L` (1 for STL).
    pub agents: usize,
    /// Monitored agent, 0-based (0 for STL).
    pub agent: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightSpec>,
    /// Norm of the Variant I balls.
    #[serde(default)]
    pub norm: Norm,
}

impl MonitorSpec {
    pub fn stl(formula: &str, tau0: usize, t: usize) -> Self {
        MonitorSpec { formula: formula.into(), dialect: Dialect::Stl, tau0, t, agents: 1, agent: 0, weights: None, norm: Norm::Euclidean }
    }

    pub fn strel(formula: &str, tau0: usize, t: usize, weights: WeightSpec, agents: usize, agent: usize) -> Self {
        MonitorSpec {
            formula: formula.into(),
            dialect: Dialect::Strel,
            tau0,
            t,
            agents,
            agent,
            weights: Some(weights),
            norm: Norm::Euclidean,
        }
    }

    pub fn with_norm(mut self, norm: Norm) -> Self {
        self.norm = norm;
        self
    }
}

/// A parsed [`MonitorSpec`] with the index sets the methods work on.
#[derive(Clone, Debug)]
pub struct MonitorSetup {
    pub spec: MonitorSpec,
    pub formula: Formula,
    /// Prediction horizon `H = τ0 + L − t`.
    pub h: usize,
    pnf: Result<Formula, LogicError>,
    /// State components referenced by the positive-normal-form predicates.
    components: Vec<usize>,
    /// `(τ, l)` pairs of future predicate evaluations.
    keys1: Vec<(usize, usize)>,
    /// `(π, τ, l)` triples of future predicate evaluations, with the index
    /// of their `(τ, l)` in `keys1`.
    keys2: Vec<((usize, usize, usize), usize)>,
    /// `h` of each positive-normal-form predicate by id.
    hexpr: HashMap<usize, Expr>,
}

impl MonitorSetup {
    pub fn new(spec: MonitorSpec) -> Result<Self, RprvError> {
        let formula = parse(&spec.formula, spec.dialect)?;
        let mut spec = spec;
        match spec.dialect {
            Dialect::Stl => {
                spec.agents = 1;
                spec.agent = 0;
            }
            Dialect::Strel => {
                if spec.weights.is_none() {
                    return Err(RprvError::MissingWeights);
                }
                if spec.agent >= spec.agents {
                    return Err(SemanticsError::AgentOutOfRange { agent: spec.agent, agents: spec.agents }.into());
                }
            }
        }
        let h = horizon(&formula, spec.tau0, spec.t)?;
        let pnf = to_pnf(&formula);
        let mut components = BTreeSet::new();
        let mut hexpr = HashMap::new();
        let mut keys1 = Vec::new();
        let mut keys2 = Vec::new();
        if let Ok(p) = &pnf {
            for pr in p.predicates() {
                pr.lhs.collect_vars(&mut components);
                pr.rhs.collect_vars(&mut components);
                hexpr.insert(pr.id, pr.h_expr());
            }
            let mut index: HashMap<(usize, usize), usize> = HashMap::new();
            for d in predicate_demands(p, spec.tau0, Locs::One(spec.agent)) {
                for tau in d.lo.max(spec.t + 1)..=d.hi {
                    for l in d.locs.iter(spec.agents) {
                        let k = *index.entry((tau, l)).or_insert_with(|| {
                            keys1.push((tau, l));
                            keys1.len() - 1
                        });
                        keys2.push(((d.pred, tau, l), k));
                    }
                }
            }
        }
        Ok(MonitorSetup { spec, formula, h, pnf, components: components.into_iter().collect(), keys1, keys2, hexpr })
    }

    pub fn dialect(&self) -> Dialect {
        self.spec.dialect
    }

    pub fn t(&self) -> usize {
        self.spec.t
    }

    pub fn agent(&self) -> usize {
        self.spec.agent
    }

    /// The formula in positive normal form.
    pub fn pnf(&self) -> Result<&Formula, RprvError> {
        self.pnf.as_ref().map_err(|e| RprvError::Logic(e.clone()))
    }

    /// State components that the predicates read.
    pub fn components(&self) -> &[usize] {
        &self.components
    }

    /// Future `(τ, l)` pairs used by Variant I.
    pub fn interp1_keys(&self) -> &[(usize, usize)] {
        &self.keys1
    }

    /// Future `(π, τ, l)` triples used by Variant II.
    pub fn interp2_keys(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.keys2.iter().map(|(k, _)| *k)
    }

    fn view(&self) -> View {
        match self.spec.dialect {
            Dialect::Stl => View::Flat,
            Dialect::Strel => View::PerAgent,
        }
    }

    fn state<'x>(&self, x: &'x Trajectory, tau: usize, l: usize) -> &'x [f64] {
        match self.spec.dialect {
            Dialect::Stl => x.flat(tau),
            Dialect::Strel => x.state(tau, l),
        }
    }

    /// Required trajectory length `τ0 + L + 1 = t + H + 1`.
    pub fn required_len(&self) -> usize {
        self.spec.t + self.h + 1
    }

    pub fn check_trajectory(&self, x: &Trajectory) -> Result<(), RprvError> {
        if x.len() < self.required_len() {
            return Err(SemanticsError::TooShort { needed: self.required_len(), len: x.len() }.into());
        }
        match self.spec.dialect {
            Dialect::Stl => check_vars(&self.formula, x.flat_dim())?,
            Dialect::Strel => {
                if x.agents() != self.spec.agents {
                    return Err(RprvError::ArtifactMismatch(format!(
                        "{} agents expected, trajectory {} has {}",
                        self.spec.agents,
                        x.id(),
                        x.agents()
                    )));
                }
                check_vars(&self.formula, x.dims())?;
            }
        }
        Ok(())
    }

    /// `ρ(x, τ0[, l])` of the original formula.
    pub fn robustness(&self, x: &Trajectory) -> Result<ExtReal, RprvError> {
        Ok(match self.spec.dialect {
            Dialect::Stl => eval_robust_stl(&self.formula, x, self.spec.tau0)?,
            Dialect::Strel => {
                let w = self.spec.weights.as_ref().ok_or(RprvError::MissingWeights)?;
                eval_robust_strel(&self.formula, x, w, self.spec.tau0, self.spec.agent)?
            }
        })
    }

    /// Predicts from the observed prefix `0..=t` of `x`.
    pub fn predict(&self, predictor: &dyn Predictor, x: &Trajectory) -> Result<PredictedTrajectory, RprvError> {
        Ok(predictor.predict(&x.prefix(self.spec.t)?, self.h)?)
    }

    fn check_pair(&self, p: &Pair) -> Result<(), RprvError> {
        self.check_trajectory(p.truth)?;
        self.check_trajectory(p.pred.full())?;
        if p.pred.t() != self.spec.t {
            return Err(RprvError::ArtifactMismatch(format!("prediction made at t = {}, monitor uses t = {}", p.pred.t(), self.spec.t)));
        }
        Ok(())
    }

    /// Number of future times whose predicted graph has a different edge
    /// set from the true one.
    pub fn graph_mismatch(&self, truth: &Trajectory, pred: &PredictedTrajectory) -> Result<usize, RprvError> {
        let Some(w) = &self.spec.weights else { return Ok(0) };
        let mut count = 0;
        for tau in self.spec.t + 1..self.required_len() {
            let a = graph_at(w, truth, tau)?;
            let b = graph_at(w, pred.full(), tau)?;
            let same = (0..a.n).all(|l| {
                let na = a.neighbors(l).iter().map(|e| e.0);
                let nb = b.neighbors(l).iter().map(|e| e.0);
                na.eq(nb)
            });
            count += usize::from(!same);
        }
        Ok(count)
    }
}

/// A true trajectory with its prediction.
#[derive(Clone, Copy, Debug)]
pub struct Pair<'a> {
    pub truth: &'a Trajectory,
    pub pred: &'a PredictedTrajectory,
}

/// Normalisation constants keyed by `(π, τ, l)` (`π` absent for Variant I,
/// `l` absent for STL).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred: Option<usize>,
    pub tau: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<usize>,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaTable {
    pub entries: Vec<AlphaEntry>,
}

impl AlphaTable {
    fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.alpha).collect()
    }
}

/// Per-key errors of one pair: Variant I state errors or Variant II signed
/// predicate robustness errors.
fn key_errors(family: Family, s: &MonitorSetup, p: &Pair) -> Result<Vec<f64>, RprvError> {
    let (x, xh) = (p.truth, p.pred.full());
    match family {
        Family::Accurate => unreachable!("accurate scores have no keys"),
        Family::Interp1 => Ok(s
            .keys1
            .iter()
            .map(|&(tau, l)| {
                let (a, b) = (s.state(x, tau, l), s.state(xh, tau, l));
                s.spec.norm.of(s.components.iter().map(|&i| a[i] - b[i]))
            })
            .collect()),
        Family::Interp2 => Ok(s
            .keys2
            .iter()
            .map(|&((pi, tau, l), _)| {
                let h = &s.hexpr[&pi];
                h.eval(s.state(xh, tau, l)) - h.eval(s.state(x, tau, l))
            })
            .collect()),
    }
}

/// Computes the α table of an interpretable method from a dedicated dataset.
pub fn compute_alpha(family: Family, s: &MonitorSetup, pairs: &[Pair]) -> Result<Option<AlphaTable>, RprvError> {
    if family == Family::Accurate {
        return Ok(None);
    }
    s.pnf()?;
    if pairs.is_empty() {
        return Err(RprvError::EmptyAlpha);
    }
    let stl = s.spec.dialect == Dialect::Stl;
    let keys: Vec<(Option<usize>, usize, usize)> = match family {
        Family::Interp1 => s.keys1.iter().map(|&(tau, l)| (None, tau, l)).collect(),
        _ => s.interp2_keys().map(|(pi, tau, l)| (Some(pi), tau, l)).collect(),
    };
    let mut alpha = vec![0.0f64; keys.len()];
    for p in pairs {
        s.check_pair(p)?;
        for (a, e) in alpha.iter_mut().zip(key_errors(family, s, p)?) {
            *a = a.max(e.abs());
        }
    }
    let entries = keys
        .into_iter()
        .zip(alpha)
        .map(|((pred, tau, l), a)| AlphaEntry { pred, tau, agent: (!stl).then_some(l), alpha: a.max(ALPHA_MIN) })
        .collect();
    Ok(Some(AlphaTable { entries }))
}

/// Nonconformity scores of `pairs`, in order.
pub fn scores(family: Family, s: &MonitorSetup, alpha: Option<&AlphaTable>, pairs: &[Pair]) -> Result<Vec<f64>, RprvError> {
    let method = Method::new(family, s.spec.dialect);
    let alpha = match family {
        Family::Accurate => None,
        _ => {
            let a = alpha.ok_or(RprvError::MissingAlpha(method))?;
            s.pnf()?;
            let v = a.values();
            let expected = if family == Family::Interp1 { s.keys1.len() } else { s.keys2.len() };
            if v.len() != expected {
                return Err(RprvError::ArtifactMismatch(format!("α table has {} entries, expected {expected}", v.len())));
            }
            Some(v)
        }
    };
    pairs
        .iter()
        .map(|p| {
            s.check_pair(p)?;
            Ok(match &alpha {
                None => s.robustness(p.pred.full())?.sub(s.robustness(p.truth)?).value(),
                Some(a) => key_errors(family, s, p)?.iter().zip(a).map(|(e, a)| e / a).fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect()
}

/// Recorded trial ids of the datasets behind an artifact.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitIds {
    pub alpha: Vec<usize>,
    pub calibration: Vec<usize>,
}

/// Everything needed to issue verdicts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub method: Method,
    pub monitor: MonitorSpec,
    pub h: usize,
    pub delta: f64,
    pub divergence: DivergenceSpec,
    pub k: usize,
    pub c_tilde: ExtReal,
    /// 1-based rank of `C̃` among the scores.
    pub quantile_index: Option<usize>,
    pub quantile_level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<AlphaTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictor: Option<String>,
    pub splits: SplitIds,
}

impl CalibrationArtifact {
    pub fn is_feasible(&self) -> bool {
        !self.c_tilde.is_pos_inf()
    }
}

/// Builds an artifact from precomputed scores.
#[allow(clippy::too_many_arguments)]
pub fn artifact_from_scores(
    family: Family,
    s: &MonitorSetup,
    alpha: Option<AlphaTable>,
    scores: &[f64],
    delta: f64,
    div: &DivergenceSpec,
    splits: SplitIds,
) -> Result<CalibrationArtifact, RprvError> {
    if scores.is_empty() {
        return Err(RprvError::EmptyCalibration);
    }
    let q = robust_quantile(scores, delta, div)?;
    Ok(CalibrationArtifact {
        method: Method::new(family, s.spec.dialect),
        monitor: s.spec.clone(),
        h: s.h,
        delta,
        divergence: div.clone(),
        k: scores.len(),
        c_tilde: q.value,
        quantile_index: q.index,
        quantile_level: q.level,
        alpha,
        predictor: None,
        splits,
    })
}

/// Calibrates from predicted pairs; `alpha_pairs` is ignored by the
/// accurate family.
pub fn calibrate(
    family: Family,
    s: &MonitorSetup,
    alpha_pairs: &[Pair],
    calib: &[Pair],
    delta: f64,
    div: &DivergenceSpec,
) -> Result<CalibrationArtifact, RprvError> {
    if calib.is_empty() {
        return Err(RprvError::EmptyCalibration);
    }
    let calib_ids: Vec<usize> = calib.iter().map(|p| p.truth.id()).collect();
    let mut splits = SplitIds { alpha: vec![], calibration: calib_ids };
    let alpha = if family == Family::Accurate {
        None
    } else {
        splits.alpha = alpha_pairs.iter().map(|p| p.truth.id()).collect();
        let seen: HashSet<usize> = splits.alpha.iter().copied().collect();
        if let Some(&dup) = splits.calibration.iter().find(|id| seen.contains(id)) {
            return Err(RprvError::OverlappingSplits(dup));
        }
        compute_alpha(family, s, alpha_pairs)?
    };
    let sc = scores(family, s, alpha.as_ref(), calib)?;
    artifact_from_scores(family, s, alpha, &sc, delta, div, splits)
}

fn predict_all(s: &MonitorSetup, predictor: &dyn Predictor, xs: &[Trajectory]) -> Result<Vec<PredictedTrajectory>, RprvError> {
    xs.iter().map(|x| s.predict(predictor, x)).collect()
}

/// Calibrates with a predictor applied to the prefixes of the given trajectories.
pub fn calibrate_with_predictor(
    family: Family,
    s: &MonitorSetup,
    alpha_set: &[Trajectory],
    calib: &[Trajectory],
    predictor: &dyn Predictor,
    delta: f64,
    div: &DivergenceSpec,
) -> Result<CalibrationArtifact, RprvError> {
    let ap = if family == Family::Accurate { vec![] } else { predict_all(s, predictor, alpha_set)? };
    let cp = predict_all(s, predictor, calib)?;
    let ap: Vec<Pair> = alpha_set.iter().zip(&ap).map(|(truth, pred)| Pair { truth, pred }).collect();
    let cp: Vec<Pair> = calib.iter().zip(&cp).map(|(truth, pred)| Pair { truth, pred }).collect();
    calibrate(family, s, &ap, &cp, delta, div)
}

pub fn calibrate_accurate(
    s: &MonitorSetup,
    calib: &[Trajectory],
    predictor: &dyn Predictor,
    delta: f64,
    div: &DivergenceSpec,
) -> Result<CalibrationArtifact, RprvError> {
    calibrate_with_predictor(Family::Accurate, s, &[], calib, predictor, delta, div)
}

pub fn calibrate_interp1(
    s: &MonitorSetup,
    alpha_set: &[Trajectory],
    calib: &[Trajectory],
    predictor: &dyn Predictor,
    delta: f64,
    div: &DivergenceSpec,
) -> Result<CalibrationArtifact, RprvError> {
    calibrate_with_predictor(Family::Interp1, s, alpha_set, calib, predictor, delta, div)
}

pub fn calibrate_interp2(
    s: &MonitorSetup,
    alpha_set: &[Trajectory],
    calib: &[Trajectory],
    predictor: &dyn Predictor,
    delta: f64,
    div: &DivergenceSpec,
) -> Result<CalibrationArtifact, RprvError> {
    calibrate_with_predictor(Family::Interp2, s, alpha_set, calib, predictor, delta, div)
}

/// Lower bound on one predicate's robustness at one future time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredicateBound {
    pub pred: usize,
    pub tau: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<usize>,
    pub value: ExtReal,
    /// Ball radius `C̃ α` (Variant I).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<ExtReal>,
    /// Ball center, the predicted state (Variant I).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationVerdict {
    pub method: Method,
    pub trial: usize,
    /// Probabilistic lower bound `ρ*` on the true robustness.
    pub rho_star: ExtReal,
    /// `1 − δ`.
    pub level: f64,
    pub satisfied: bool,
    /// `ρ(X̂)` for the accurate family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_rho: Option<ExtReal>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<PredicateBound>,
}

/// Predicate values: true `h` on the observed prefix, bounds afterwards.
struct BoundValuation<'a> {
    base: StateValuation<'a>,
    t: usize,
    bounds: HashMap<(usize, usize, usize), ExtReal>,
}

impl Valuation for BoundValuation<'_> {
    fn predicate(&self, p: &crate::logic::Predicate, tau: usize, loc: usize) -> Result<ExtReal, SemanticsError> {
        if tau <= self.t {
            return self.base.predicate(p, tau, loc);
        }
        self.bounds.get(&(p.id, tau, loc)).copied().ok_or(SemanticsError::MissingValue { pred: p.id, tau, loc })
    }
}

/// Evaluates the positive normal form with `bounds` substituted after `t`.
pub fn bounded_robustness(
    s: &MonitorSetup,
    xh: &Trajectory,
    bounds: HashMap<(usize, usize, usize), ExtReal>,
) -> Result<ExtReal, RprvError> {
    let f = s.pnf()?;
    let val = BoundValuation { base: StateValuation::new(xh, s.view()), t: s.spec.t, bounds };
    Ok(match s.spec.dialect {
        Dialect::Stl => Evaluator::stl(&val).eval(f, s.spec.tau0, 0)?,
        Dialect::Strel => {
            let w = s.spec.weights.as_ref().ok_or(RprvError::MissingWeights)?;
            Evaluator::strel(&val, w, xh).eval(f, s.spec.tau0, s.spec.agent)?
        }
    })
}

fn check_artifact(a: &CalibrationArtifact, s: &MonitorSetup) -> Result<(), RprvError> {
    if a.monitor != s.spec {
        return Err(RprvError::ArtifactMismatch("monitor specification differs".into()));
    }
    if a.method.dialect != s.spec.dialect {
        return Err(RprvError::ArtifactMismatch(format!("{} artifact for a {:?} monitor", a.method, s.spec.dialect)));
    }
    Ok(())
}

/// Issues a verdict for one prediction.
pub fn verify(a: &CalibrationArtifact, s: &MonitorSetup, pred: &PredictedTrajectory) -> Result<VerificationVerdict, RprvError> {
    check_artifact(a, s)?;
    let xh = pred.full();
    s.check_trajectory(xh)?;
    if pred.t() != s.spec.t {
        return Err(RprvError::ArtifactMismatch(format!("prediction made at t = {}, monitor uses t = {}", pred.t(), s.spec.t)));
    }
    let c = a.c_tilde;
    let stl = s.spec.dialect == Dialect::Stl;
    let mut verdict = VerificationVerdict {
        method: a.method,
        trial: xh.id(),
        rho_star: ExtReal::NEG_INFINITY,
        level: 1.0 - a.delta,
        satisfied: false,
        predicted_rho: None,
        bounds: vec![],
    };
    match a.method.family {
        Family::Accurate => {
            let rho = s.robustness(xh)?;
            verdict.predicted_rho = Some(rho);
            if !c.is_pos_inf() {
                verdict.rho_star = rho.sub(c);
            }
        }
        family => {
            let alpha = a.alpha.as_ref().ok_or(RprvError::MissingAlpha(a.method))?.values();
            let expected = if family == Family::Interp1 { s.keys1.len() } else { s.keys2.len() };
            if alpha.len() != expected {
                return Err(RprvError::ArtifactMismatch(format!("α table has {} entries, expected {expected}", alpha.len())));
            }
            let mut map = HashMap::with_capacity(s.keys2.len());
            for (j, &((pi, tau, l), k)) in s.keys2.iter().enumerate() {
                let center = s.state(xh, tau, l);
                let h = &s.hexpr[&pi];
                let (value, radius) = match family {
                    Family::Interp1 => {
                        let r = c.value() * alpha[k];
                        let v = if c.is_pos_inf() {
                            ExtReal::NEG_INFINITY
                        } else {
                            ExtReal::new(ball_bound(h, center, r, s.spec.norm, true)?)
                        };
                        (v, Some(ExtReal::new(r)))
                    }
                    _ => {
                        let v = if c.is_pos_inf() {
                            ExtReal::NEG_INFINITY
                        } else {
                            ExtReal::new(h.eval(center) - c.value() * alpha[j])
                        };
                        (v, None)
                    }
                };
                map.insert((pi, tau, l), value);
                verdict.bounds.push(PredicateBound {
                    pred: pi,
                    tau,
                    agent: (!stl).then_some(l),
                    value,
                    center: radius.map(|_| center.to_vec()),
                    radius,
                });
            }
            if !c.is_pos_inf() {
                verdict.rho_star = bounded_robustness(s, xh, map)?;
            }
        }
    }
    verdict.satisfied = verdict.rho_star > ExtReal::ZERO;
    Ok(verdict)
}

/// Predicts from `x_obs` (times `0..=t`) and issues a verdict.
pub fn verify_with_predictor(
    a: &CalibrationArtifact,
    s: &MonitorSetup,
    x_obs: &Trajectory,
    predictor: &dyn Predictor,
) -> Result<VerificationVerdict, RprvError> {
    if x_obs.len() < s.spec.t + 1 {
        return Err(SemanticsError::TooShort { needed: s.spec.t + 1, len: x_obs.len() }.into());
    }
    verify(a, s, &s.predict(predictor, x_obs)?)
}
