//! Estimating the total-variation shift between two score distributions
//! with Gaussian kernel density estimates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rprv::{compute_alpha, scores, Family, MonitorSetup, Pair, RprvError};

pub const DEFAULT_GRID_POINTS: usize = 4096;
pub const BANDWIDTH_FLOOR: f64 = 1e-6;
/// Kernels are truncated beyond this many bandwidths.
const KERNEL_REACH: f64 = 9.0;

#[derive(Debug, Error)]
pub enum ShiftError {
    #[error("empty sample set")]
    Empty,
    #[error("no finite scores among {0} samples")]
    NoFiniteScores(usize),
    #[error("grid needs at least 2 points")]
    Grid,
    #[error("bandwidth must be positive, got {0}")]
    Bandwidth(f64),
    #[error(transparent)]
    Rprv(#[from] RprvError),
}

/// Gaussian kernel density estimate.
#[derive(Clone, Debug)]
pub struct Kde {
    sorted: Vec<f64>,
    bandwidth: f64,
}

impl Kde {
    /// Uses Silverman's rule `1.06 σ̂ m^(−1/5)` when `bandwidth` is `None`.
    pub fn new(samples: &[f64], bandwidth: Option<f64>) -> Result<Self, ShiftError> {
        if samples.is_empty() {
            return Err(ShiftError::Empty);
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let bandwidth = match bandwidth {
            Some(b) if b > 0.0 && b.is_finite() => b,
            Some(b) => return Err(ShiftError::Bandwidth(b)),
            None => silverman(&sorted).max(BANDWIDTH_FLOOR),
        };
        Ok(Kde { sorted, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let lo = self.sorted.partition_point(|&s| s < x - KERNEL_REACH * h);
        let hi = self.sorted.partition_point(|&s| s <= x + KERNEL_REACH * h);
        let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h * self.sorted.len() as f64);
        self.sorted[lo..hi].iter().map(|s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum::<f64>() * norm
    }

    pub fn support(&self) -> (f64, f64) {
        (self.sorted[0], self.sorted[self.sorted.len() - 1])
    }
}

fn silverman(s: &[f64]) -> f64 {
    let m = s.len() as f64;
    if s.len() < 2 {
        return 0.0;
    }
    let mean = s.iter().sum::<f64>() / m;
    let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    1.06 * var.sqrt() * m.powf(-0.2)
}

/// Evaluation grid for two densities: the union of supports widened by
/// three times the larger bandwidth.
pub fn grid(a: &Kde, b: &Kde, points: usize) -> Result<Vec<f64>, ShiftError> {
    if points < 2 {
        return Err(ShiftError::Grid);
    }
    let pad = 3.0 * a.bandwidth.max(b.bandwidth);
    let lo = a.support().0.min(b.support().0) - pad;
    let hi = a.support().1.max(b.support().1) + pad;
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points).map(|i| lo + step * i as f64).collect())
}

/// Trapezoidal integral of `y` on the uniform grid `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

/// `½ ∫ |p − q|` between the KDEs of two samples, clamped to `[0, 1]`.
pub fn tv_between(a: &[f64], b: &[f64], grid_points: usize) -> Result<f64, ShiftError> {
    let (ka, kb) = (Kde::new(a, None)?, Kde::new(b, None)?);
    tv_kde(&ka, &kb, grid_points)
}

pub fn tv_kde(a: &Kde, b: &Kde, grid_points: usize) -> Result<f64, ShiftError> {
    let x = grid(a, b, grid_points)?;
    let y: Vec<f64> = x.iter().map(|&v| 0.5 * (a.pdf(v) - b.pdf(v)).abs()).collect();
    Ok(trapezoid(&x, &y).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftComponent {
    pub family: String,
    pub epsilon: f64,
    pub bandwidth_train: f64,
    pub bandwidth_test: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Scores dropped for being infinite.
    pub dropped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftEstimate {
    pub components: Vec<ShiftComponent>,
    /// Maximum over the components.
    pub epsilon: f64,
    pub grid_points: usize,
}

fn finite(v: &[f64]) -> (Vec<f64>, usize) {
    let f: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    let dropped = v.len() - f.len();
    (f, dropped)
}

/// TV shift between named pairs of score samples; `ε` is the largest.
pub fn estimate_from_scores(named: &[(String, Vec<f64>, Vec<f64>)], grid_points: usize) -> Result<ShiftEstimate, ShiftError> {
    let mut components = Vec::with_capacity(named.len());
    for (name, train, test) in named {
        let (a, da) = finite(train);
        let (b, db) = finite(test);
        if a.is_empty() {
            return Err(ShiftError::NoFiniteScores(train.len()));
        }
        if b.is_empty() {
            return Err(ShiftError::NoFiniteScores(test.len()));
        }
        let (ka, kb) = (Kde::new(&a, None)?, Kde::new(&b, None)?);
        components.push(ShiftComponent {
            family: name.clone(),
            epsilon: tv_kde(&ka, &kb, grid_points)?,
            bandwidth_train: ka.bandwidth(),
            bandwidth_test: kb.bandwidth(),
            n_train: a.len(),
            n_test: b.len(),
            dropped: da + db,
        });
    }
    let epsilon = components.iter().map(|c| c.epsilon).fold(0.0, f64::max);
    Ok(ShiftEstimate { components, epsilon, grid_points })
}

/// Scores of each family on a training pool (from the calibration
/// distribution) and a test pool, compared by TV. Interpretable families
/// normalise with α tables computed on `alpha_pairs`.
pub fn estimate_epsilon(
    s: &MonitorSetup,
    families: &[Family],
    alpha_pairs: &[Pair],
    train: &[Pair],
    test: &[Pair],
    grid_points: usize,
) -> Result<ShiftEstimate, ShiftError> {
    if train.is_empty() || test.is_empty() {
        return Err(ShiftError::Empty);
    }
    let mut named = Vec::with_capacity(families.len());
    for &f in families {
        let alpha = compute_alpha(f, s, alpha_pairs)?;
        let a = scores(f, s, alpha.as_ref(), train)?;
        let b = scores(f, s, alpha.as_ref(), test)?;
        named.push((f.name().to_string(), a, b));
    }
    estimate_from_scores(&named, grid_points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn normal(mu: f64, sd: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(mu, sd).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn degenerate_samples_use_the_floor() {
        let k = Kde::new(&[2.0; 10], None).unwrap();
        assert_eq!(k.bandwidth(), BANDWIDTH_FLOOR);
        assert!(k.pdf(2.0) > 1e5);
        assert!(Kde::new(&[], None).is_err());
    }

    #[test]
    fn kde_normalisation_and_mean() {
        let s = normal(0.0, 1.0, 10_000, 1);
        let k = Kde::new(&s, None).unwrap();
        let x = grid(&k, &k, DEFAULT_GRID_POINTS).unwrap();
        let p: Vec<f64> = x.iter().map(|&v| k.pdf(v)).collect();
        assert!((trapezoid(&x, &p) - 1.0).abs() < 1e-3);
        let xp: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a * b).collect();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((trapezoid(&x, &xp) - mean).abs() < 1e-2);
    }

    #[test]
    fn tv_examples() {
        let a = normal(0.0, 1.0, 10_000, 2);
        assert!(tv_between(&a, &a, DEFAULT_GRID_POINTS).unwrap() <= 1e-6);
        let b = normal(10.0, 1.0, 10_000, 3);
        assert!(tv_between(&a, &b, DEFAULT_GRID_POINTS).unwrap() >= 0.99);
        let c3 = normal(0.0, 3.0, 5_000, 4);
        let c35 = normal(0.0, 3.5, 5_000, 5);
        let c4 = normal(0.0, 4.0, 5_000, 6);
        let e1 = tv_between(&c3, &c35, DEFAULT_GRID_POINTS).unwrap();
        let e2 = tv_between(&c3, &c4, DEFAULT_GRID_POINTS).unwrap();
        assert!(e1 > 0.0 && e1 < 0.2 && e2 > e1, "{e1} {e2}");
        let sym = tv_between(&c35, &c3, DEFAULT_GRID_POINTS).unwrap();
        assert!((sym - e1).abs() <= 1e-9);
    }

    #[test]
    fn infinite_scores_are_dropped() {
        let est = estimate_from_scores(
            &[("x".into(), vec![1.0, 2.0, f64::INFINITY], vec![1.0, 2.0, 3.0])],
            DEFAULT_GRID_POINTS,
        )
        .unwrap();
        assert_eq!(est.components[0].dropped, 1);
        assert!(estimate_from_scores(&[("x".into(), vec![f64::NEG_INFINITY], vec![1.0])], 64).is_err());
    }
}
