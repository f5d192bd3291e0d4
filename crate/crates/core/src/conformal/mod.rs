//! Split conformal quantiles, plain and robust to an f-divergence ball.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ExtReal;

/// Slack absorbed by index arithmetic so that e.g. `5 · 0.8` lands on 4.
const CEIL_TOL: f64 = 1e-9;
const BISECT_TOL: f64 = 1e-9;
const BISECT_CAP: usize = 200;
/// Keeps `β` away from the poles of `β f(z/β)` in the generic path.
const BETA_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConformalError {
    #[error("empty score list")]
    EmptyScores,
    #[error("{name} = {value} outside {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },
    #[error("NaN score at index {0}")]
    NanScore(usize),
    #[error("bisection did not converge in {0}")]
    NoConvergence(&'static str),
    #[error("unknown divergence '{0}'")]
    UnknownDivergence(String),
}

/// Convex `f` with `f(1) = 0` defining `D_f`.
#[derive(Clone)]
pub enum FFunction {
    /// `|z − 1| / 2`.
    TotalVariation,
    /// `z ln z`.
    KullbackLeibler,
    /// `(z − 1)²`.
    ChiSquared,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl FFunction {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            FFunction::TotalVariation => 0.5 * (z - 1.0).abs(),
            FFunction::KullbackLeibler => {
                if z <= 0.0 {
                    0.0
                } else {
                    z * z.ln()
                }
            }
            FFunction::ChiSquared => (z - 1.0) * (z - 1.0),
            FFunction::Custom(f) => f(z),
        }
    }
}

impl fmt::Debug for FFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FFunction::TotalVariation => "TotalVariation",
            FFunction::KullbackLeibler => "KullbackLeibler",
            FFunction::ChiSquared => "ChiSquared",
            FFunction::Custom(_) => "Custom",
        })
    }
}

#[derive(Clone, Debug)]
pub enum DivergenceKind {
    /// Closed-form `g` for total variation.
    TotalVariation,
    /// Numeric `g` for an arbitrary convex `f`.
    Generic(FFunction),
}

/// An f-divergence ball of radius `epsilon`.
#[derive(Clone, Debug)]
pub struct DivergenceSpec {
    pub kind: DivergenceKind,
    pub epsilon: f64,
}

impl DivergenceSpec {
    pub fn tv(epsilon: f64) -> Self {
        DivergenceSpec { kind: DivergenceKind::TotalVariation, epsilon }
    }

    pub fn generic(f: FFunction, epsilon: f64) -> Self {
        DivergenceSpec { kind: DivergenceKind::Generic(f), epsilon }
    }

    /// Same divergence with `ε = 0`, the non-robust baseline.
    pub fn baseline(&self) -> Self {
        DivergenceSpec { kind: self.kind.clone(), epsilon: 0.0 }
    }

    /// Parses `tv`, `generic-tv`, `kl` or `chi2`.
    pub fn from_name(name: &str, epsilon: f64) -> Result<Self, ConformalError> {
        let kind = match name {
            "tv" => DivergenceKind::TotalVariation,
            "generic-tv" => DivergenceKind::Generic(FFunction::TotalVariation),
            "kl" => DivergenceKind::Generic(FFunction::KullbackLeibler),
            "chi2" => DivergenceKind::Generic(FFunction::ChiSquared),
            other => return Err(ConformalError::UnknownDivergence(other.into())),
        };
        Ok(DivergenceSpec { kind, epsilon })
    }

    pub fn name(&self) -> &'static str {
        match &self.kind {
            DivergenceKind::TotalVariation => "tv",
            DivergenceKind::Generic(FFunction::TotalVariation) => "generic-tv",
            DivergenceKind::Generic(FFunction::KullbackLeibler) => "kl",
            DivergenceKind::Generic(FFunction::ChiSquared) => "chi2",
            DivergenceKind::Generic(FFunction::Custom(_)) => "custom",
        }
    }

    fn validate(&self) -> Result<(), ConformalError> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(ConformalError::OutOfRange { name: "epsilon", value: self.epsilon, range: "[0, inf)" });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct DivergenceRepr {
    kind: String,
    epsilon: f64,
}

impl Serialize for DivergenceSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if matches!(self.kind, DivergenceKind::Generic(FFunction::Custom(_))) {
            return Err(serde::ser::Error::custom("custom f-divergence cannot be serialized"));
        }
        DivergenceRepr { kind: self.name().into(), epsilon: self.epsilon }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DivergenceSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = DivergenceRepr::deserialize(d)?;
        DivergenceSpec::from_name(&r.kind, r.epsilon).map_err(serde::de::Error::custom)
    }
}

/// An empirical quantile and how it was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileResult {
    pub value: ExtReal,
    /// 1-based rank in the sorted scores; `None` when the value is `+∞`.
    pub index: Option<usize>,
    /// Level `β` of the empirical quantile actually taken.
    pub level: f64,
    pub feasible: bool,
}

fn tolerant_ceil(x: f64) -> f64 {
    (x - CEIL_TOL).ceil()
}

fn check_unit(name: &'static str, v: f64) -> Result<(), ConformalError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(ConformalError::OutOfRange { name, value: v, range: "[0, 1]" });
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<(), ConformalError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ConformalError::OutOfRange { name: "delta", value: delta, range: "(0, 1)" });
    }
    Ok(())
}

fn sorted(scores: &[f64]) -> Result<Vec<f64>, ConformalError> {
    if scores.is_empty() {
        return Err(ConformalError::EmptyScores);
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(ConformalError::NanScore(i));
    }
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// The `p`-th smallest score, `+∞` beyond `K`.
fn pick(sorted: &[f64], p: f64, level: f64) -> QuantileResult {
    let p = p.max(1.0);
    if p > sorted.len() as f64 {
        return QuantileResult { value: ExtReal::INFINITY, index: None, level, feasible: false };
    }
    let p = p as usize;
    QuantileResult { value: ExtReal::new(sorted[p - 1]), index: Some(p), level, feasible: true }
}

/// `C = R^(p)` with `p = ⌈(K+1)(1−δ)⌉`.
pub fn vanilla_quantile(scores: &[f64], delta: f64) -> Result<QuantileResult, ConformalError> {
    check_delta(delta)?;
    let s = sorted(scores)?;
    let k = s.len() as f64;
    let b = 1.0 - delta;
    Ok(pick(&s, tolerant_ceil((k + 1.0) * b), (k + 1.0) * b / k))
}

/// Worst-case mass `g(β)` left on an event of mass `β` after an `ε`-shift.
pub fn g(div: &DivergenceSpec, beta: f64) -> Result<f64, ConformalError> {
    div.validate()?;
    check_unit("beta", beta)?;
    match &div.kind {
        DivergenceKind::TotalVariation => Ok((beta - div.epsilon).max(0.0)),
        DivergenceKind::Generic(f) => generic_g(f, div.epsilon, beta),
    }
}

/// `g⁻¹(τ) = sup{β ∈ [0,1] | g(β) ≤ τ}`.
pub fn g_inv(div: &DivergenceSpec, tau: f64) -> Result<f64, ConformalError> {
    div.validate()?;
    check_unit("tau", tau)?;
    match &div.kind {
        DivergenceKind::TotalVariation => Ok((tau + div.epsilon).min(1.0)),
        DivergenceKind::Generic(f) => {
            if generic_g(f, div.epsilon, 1.0)? <= tau {
                return Ok(1.0);
            }
            // g(lo) ≤ τ < g(hi)
            let (mut lo, mut hi) = (tau, 1.0);
            for _ in 0..BISECT_CAP {
                if hi - lo <= BISECT_TOL {
                    return Ok(lo);
                }
                let mid = 0.5 * (lo + hi);
                if generic_g(f, div.epsilon, mid)? <= tau {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Err(ConformalError::NoConvergence("g inverse"))
        }
    }
}

fn generic_g(f: &FFunction, eps: f64, beta: f64) -> Result<f64, ConformalError> {
    let b = beta.clamp(BETA_CLAMP, 1.0 - BETA_CLAMP);
    let phi = |z: f64| b * f.eval(z / b) + (1.0 - b) * f.eval((1.0 - z) / (1.0 - b));
    // phi is convex with phi(β) = 0, hence non-increasing on [0, β].
    if phi(0.0) <= eps {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, b);
    for _ in 0..BISECT_CAP {
        if hi - lo <= BISECT_TOL {
            return Ok(hi.min(beta));
        }
        let mid = 0.5 * (lo + hi);
        if phi(mid) <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(ConformalError::NoConvergence("g"))
}

/// `g⁻¹(1−δ)` with values within tolerance of 1 snapped to 1.
fn adjusted_level(div: &DivergenceSpec, delta: f64) -> Result<f64, ConformalError> {
    let b = g_inv(div, 1.0 - delta)?;
    Ok(if matches!(div.kind, DivergenceKind::Generic(_)) && b >= 1.0 - CEIL_TOL { 1.0 } else { b })
}

/// `(1 + 1/K) b ≤ 1`, evaluated as `(K+1) b ≤ K` with a small slack.
fn feasible(k: usize, b: f64) -> bool {
    (k as f64 + 1.0) * b <= k as f64 + CEIL_TOL
}

/// Quantile `C̃` valid for every test distribution within `ε` of the
/// calibration distribution.
pub fn robust_quantile(scores: &[f64], delta: f64, div: &DivergenceSpec) -> Result<QuantileResult, ConformalError> {
    check_delta(delta)?;
    div.validate()?;
    let s = sorted(scores)?;
    let k = s.len();
    let kf = k as f64;
    let b = adjusted_level(div, delta)?;
    let q = (kf + 1.0) * b / kf;
    if !feasible(k, b) {
        return Ok(QuantileResult { value: ExtReal::INFINITY, index: None, level: q, feasible: false });
    }
    let q = q.min(1.0);
    match &div.kind {
        DivergenceKind::TotalVariation => {
            // 1 − δ̃ = g⁻¹(g(q)) = max(ε, q); the q branch is written as in the
            // plain case so that ε = 0 reproduces it bit for bit.
            if q >= div.epsilon {
                Ok(pick(&s, tolerant_ceil((kf + 1.0) * b), q))
            } else {
                Ok(pick(&s, tolerant_ceil(kf * div.epsilon), div.epsilon))
            }
        }
        DivergenceKind::Generic(_) => {
            let level = g_inv(div, g(div, q)?)?;
            Ok(pick(&s, tolerant_ceil(kf * level), level))
        }
    }
}

/// Smallest `K` for which [`robust_quantile`] can be finite, `None` if no
/// `K` works (`g⁻¹(1−δ) = 1`).
pub fn min_calibration_size(delta: f64, div: &DivergenceSpec) -> Result<Option<usize>, ConformalError> {
    check_delta(delta)?;
    div.validate()?;
    let b = adjusted_level(div, delta)?;
    if b >= 1.0 {
        return Ok(None);
    }
    let mut k = (tolerant_ceil(b / (1.0 - b)) as usize).max(1);
    while !feasible(k, b) {
        k += 1;
    }
    while k > 1 && feasible(k - 1, b) {
        k -= 1;
    }
    Ok(Some(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanilla_examples() {
        let r = vanilla_quantile(&[3.0, 1.0, 4.0, 2.0], 0.2).unwrap();
        assert_eq!((r.index, r.value), (Some(4), ExtReal::new(4.0)));
        let r = vanilla_quantile(&[3.0, 1.0, 4.0, 2.0], 0.99).unwrap();
        assert_eq!((r.index, r.value), (Some(1), ExtReal::new(1.0)));
        let r = vanilla_quantile(&[1.0, 2.0, 3.0], 0.2).unwrap();
        assert!(r.value.is_pos_inf() && !r.feasible);
        assert!(vanilla_quantile(&[], 0.2).is_err());
        assert!(vanilla_quantile(&[1.0], 0.0).is_err());
    }

    #[test]
    fn tv_g_closed_form() {
        let d = DivergenceSpec::tv(0.05);
        assert!((g_inv(&d, 0.8).unwrap() - 0.85).abs() < 1e-15);
        assert_eq!(g(&d, 0.03).unwrap(), 0.0);
        let z = DivergenceSpec::tv(0.0);
        assert_eq!(g(&z, 0.37).unwrap(), 0.37);
        assert_eq!(g_inv(&z, 0.37).unwrap(), 0.37);
        assert!(g(&d, 1.5).is_err());
    }

    #[test]
    fn robust_example_k20() {
        let scores: Vec<f64> = (1..=20).map(f64::from).collect();
        let r = robust_quantile(&scores, 0.2, &DivergenceSpec::tv(0.05)).unwrap();
        assert_eq!(r.index, Some(18));
        assert_eq!(r.value, ExtReal::new(18.0));
        assert!((r.level - 0.8925).abs() < 1e-12);
        let gen = robust_quantile(&scores, 0.2, &DivergenceSpec::generic(FFunction::TotalVariation, 0.05)).unwrap();
        assert_eq!(gen.index, Some(18));
    }

    #[test]
    fn eps_at_least_delta_is_infeasible() {
        let scores = vec![0.0; 1000];
        for eps in [0.2, 0.3] {
            let r = robust_quantile(&scores, 0.2, &DivergenceSpec::tv(eps)).unwrap();
            assert!(r.value.is_pos_inf());
        }
    }

    #[test]
    fn min_k_examples() {
        assert_eq!(min_calibration_size(0.2, &DivergenceSpec::tv(0.1)).unwrap(), Some(9));
        assert_eq!(min_calibration_size(0.2, &DivergenceSpec::tv(0.0)).unwrap(), Some(4));
        assert_eq!(min_calibration_size(0.2, &DivergenceSpec::tv(0.25)).unwrap(), None);
    }

    #[test]
    fn generic_kl_is_monotone() {
        let d = DivergenceSpec::generic(FFunction::KullbackLeibler, 0.05);
        let mut prev = 0.0;
        for i in 0..=20 {
            let v = g(&d, i as f64 / 20.0).unwrap();
            assert!(v + 1e-9 >= prev && v <= i as f64 / 20.0 + 1e-9);
            prev = v;
        }
        assert!(g_inv(&d, 0.8).unwrap() > 0.8);
    }

    #[test]
    fn divergence_serde() {
        let d = DivergenceSpec::tv(0.142);
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"kind":"tv","epsilon":0.142}"#);
        let back: DivergenceSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back.name(), "tv");
        assert!(serde_json::to_string(&DivergenceSpec::generic(FFunction::Custom(Arc::new(|z| z)), 0.0)).is_err());
    }
}
