//! Lower bounds on `inf_{ζ ∈ B} h(ζ)` over a norm ball `B = {ζ : ‖ζ_S − c_S‖ ≤ r}`.
//!
//! Affine pieces and distance atoms whose arguments are offset coordinates
//! are handled exactly; everything else falls back to `h(c) − Λ r` with a
//! Lipschitz constant `Λ`.

use crate::logic::{Expr, Norm};

use super::RprvError;

/// Infimum (`lower = true`) or supremum of `e` over the ball; the value is
/// always a sound under- resp. over-approximation.
pub fn bound(e: &Expr, center: &[f64], r: f64, norm: Norm, lower: bool) -> Result<f64, RprvError> {
    if r == 0.0 {
        return Ok(e.eval(center));
    }
    let sgn = if lower { -1.0 } else { 1.0 };
    if let Some(a) = e.affine() {
        return Ok(a.eval(center) + sgn * r * norm.dual_of(a.grad.values().copied()));
    }
    match e {
        Expr::Neg(a) => Ok(-bound(a, center, r, norm, !lower)?),
        Expr::Add(a, b) => Ok(bound(a, center, r, norm, lower)? + bound(b, center, r, norm, lower)?),
        Expr::Sub(a, b) => Ok(bound(a, center, r, norm, lower)? - bound(b, center, r, norm, !lower)?),
        Expr::Mul(a, b) if a.is_constant() || b.is_constant() => {
            let (k, x) = if a.is_constant() { (a.eval(&[]), b) } else { (b.eval(&[]), a) };
            // k·x attains its inf where x attains its sup when k < 0.
            Ok(k * bound(x, center, r, norm, lower == (k >= 0.0))?)
        }
        Expr::Min(v) | Expr::Max(v) => {
            let parts = v.iter().map(|x| bound(x, center, r, norm, lower)).collect::<Result<Vec<_>, _>>()?;
            let is_min = matches!(e, Expr::Min(_));
            // inf of a min and sup of a max are exact; the other two are sound.
            Ok(if is_min { parts.into_iter().fold(f64::INFINITY, f64::min) } else { parts.into_iter().fold(f64::NEG_INFINITY, f64::max) })
        }
        Expr::Norm2(v) | Expr::NormInf(v) => {
            let outer = if matches!(e, Expr::Norm2(_)) { Norm::Euclidean } else { Norm::Max };
            match offsets(v) {
                Some(gaps) => {
                    let gaps: Vec<f64> = gaps.iter().map(|&(i, s, c)| center[i] + s * c).collect();
                    distance_bound(&gaps, outer, r, norm, lower)
                }
                None => lipschitz_bound(e, center, r, norm, lower),
            }
        }
        Expr::MinDistInf { args, points } => match offsets(args) {
            Some(off) => {
                let mut best = f64::INFINITY;
                for p in points {
                    let gaps: Vec<f64> = off.iter().zip(p).map(|(&(i, s, c), q)| center[i] + s * (c - q)).collect();
                    best = best.min(distance_bound(&gaps, Norm::Max, r, norm, lower)?);
                }
                Ok(best)
            }
            None => lipschitz_bound(e, center, r, norm, lower),
        },
        _ => lipschitz_bound(e, center, r, norm, lower),
    }
}

fn lipschitz_bound(e: &Expr, center: &[f64], r: f64, norm: Norm, lower: bool) -> Result<f64, RprvError> {
    let l = e.lipschitz(norm).ok_or_else(|| RprvError::UnsupportedPredicate(format!("{e}")))?;
    let v = e.eval(center);
    Ok(if lower { v - l * r } else { v + l * r })
}

/// Arguments of the form `s·x[i] + c` with `s = ±1` on distinct coordinates,
/// returned as `(i, s, c)`; note `|s·x + c − q| = |x + s(c − q)|`.
fn offsets(v: &[Expr]) -> Option<Vec<(usize, f64, f64)>> {
    let mut out = Vec::with_capacity(v.len());
    for e in v {
        let (i, sign, c) = e.affine()?.as_offset_coordinate()?;
        if out.iter().any(|&(j, _, _)| j == i) {
            return None;
        }
        out.push((i, sign, c));
    }
    Some(out)
}

/// Bound on `‖g + δ‖_outer` over `‖δ‖_ball ≤ r` for the gap vector `g`.
fn distance_bound(gaps: &[f64], outer: Norm, r: f64, ball: Norm, lower: bool) -> Result<f64, RprvError> {
    let d = outer.of(gaps.iter().copied());
    if !lower {
        // Sup: the operator norm of the identity from ball to outer.
        let k = match (ball, outer) {
            (Norm::Max, Norm::Euclidean) => (gaps.len() as f64).sqrt(),
            _ => 1.0,
        };
        return Ok(d + k * r);
    }
    Ok(match (ball, outer) {
        (Norm::Euclidean, Norm::Euclidean) | (Norm::Max, Norm::Max) => (d - r).max(0.0),
        (Norm::Max, Norm::Euclidean) => Norm::Euclidean.of(gaps.iter().map(|g| (g.abs() - r).max(0.0))),
        (Norm::Euclidean, Norm::Max) => water_fill(gaps, r),
    })
}

/// `min ‖g + δ‖∞` subject to `‖δ‖₂ ≤ r`: the smallest `m ≥ 0` with
/// `Σ max(0, |g_k| − m)² ≤ r²`.
fn water_fill(gaps: &[f64], r: f64) -> f64 {
    let mut a: Vec<f64> = gaps.iter().map(|g| g.abs()).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    let r2 = r * r;
    // With the top j entries clipped to m: Σ_{k<j} (a_k − m)² = r².
    let (mut s1, mut s2) = (0.0, 0.0);
    for j in 0..a.len() {
        s1 += a[j];
        s2 += a[j] * a[j];
        let n = (j + 1) as f64;
        let disc = s1 * s1 - n * (s2 - r2);
        let m = if disc >= 0.0 { (s1 - disc.sqrt()) / n } else { f64::NAN };
        let next = a.get(j + 1).copied().unwrap_or(0.0);
        if m.is_finite() && m >= next && m <= a[j] {
            return m.max(0.0);
        }
    }
    0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{parse, Dialect, Formula};

    fn h(text: &str) -> Expr {
        let f = parse(text, Dialect::Stl).unwrap();
        let Formula::Pred(p) = f else { panic!() };
        p.h_expr()
    }

    #[test]
    fn affine_example() {
        let e = h("s[0] >= 60");
        assert_eq!(bound(&e, &[65.0, 1.0], 2.0, Norm::Euclidean, true).unwrap(), 3.0);
        let e = h("s[0] + s[1] >= 0");
        assert_eq!(bound(&e, &[0.0, 0.0], 1.0, Norm::Max, true).unwrap(), -2.0);
    }

    #[test]
    fn zero_radius_is_point_value() {
        let e = h("max(s[0], 2 * s[1]) - norm2(s[0] - 1, s[1]) >= 0.3");
        let c = [0.7, -0.4];
        assert_eq!(bound(&e, &c, 0.0, Norm::Euclidean, true).unwrap(), e.eval(&c));
    }

    #[test]
    fn distance_atoms() {
        let e = h("norm2(s[0] - 3, s[1] - 4) >= 1");
        assert!((bound(&e, &[0.0, 0.0], 2.0, Norm::Euclidean, true).unwrap() - 2.0).abs() < 1e-12);
        let e = h("mindist_inf((s[0], s[1]), {(3, 4), (10, 0)}) >= 0");
        // ℓ2 ball of radius 5 around the origin reaches (3, 4).
        assert!(bound(&e, &[0.0, 0.0], 5.0, Norm::Euclidean, true).unwrap().abs() < 1e-12);
        // Water filling: gaps (3, 4), r = 1 → m with (4 − m)² = 1 → 3, then check (3−3)=0.
        assert!((bound(&e, &[0.0, 0.0], 1.0, Norm::Euclidean, true).unwrap() - 3.0).abs() < 1e-12);
        // r = 2: both clipped: (3−m)² + (4−m)² = 4 → m = (7 − √7)/2.
        let m = (7.0 - 7f64.sqrt()) / 2.0;
        assert!((bound(&e, &[0.0, 0.0], 2.0, Norm::Euclidean, true).unwrap() - m).abs() < 1e-12);
    }

    /// Random points of the ball never go below the bound.
    #[test]
    fn sampled_points_respect_bounds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let exprs = [
            h("mindist_inf((s[0], s[1]), {(1, 1), (-2, 0.5)}) >= 0.5"),
            h("norm2(s[0] - 1, s[1] + 2) - norminf(s[1], s[0]) >= 0"),
            h("min(s[0] * -2, 3 - s[1]) >= max(s[0], s[1])"),
        ];
        for norm in [Norm::Euclidean, Norm::Max] {
            for e in &exprs {
                for _ in 0..200 {
                    let c = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                    let r = rng.random_range(0.0..2.0);
                    let lo = bound(e, &c, r, norm, true).unwrap();
                    let hi = bound(e, &c, r, norm, false).unwrap();
                    for _ in 0..50 {
                        let mut d = [rng.random_range(-1.0..1.0), rng.random_range(-1.0f64..1.0)];
                        let n = norm.of(d);
                        let s = rng.random_range(0.0..=1.0) * r / n.max(1e-12);
                        d.iter_mut().for_each(|x| *x *= s);
                        let v = e.eval(&[c[0] + d[0], c[1] + d[1]]);
                        assert!(lo <= v + 1e-9 && v <= hi + 1e-9, "{e} c={c:?} r={r} v={v} [{lo},{hi}]");
                    }
                }
            }
        }
    }

    #[test]
    fn unknown_lipschitz_is_an_error() {
        let e = h("s[0] * s[1] >= 0");
        assert!(bound(&e, &[1.0, 1.0], 0.5, Norm::Euclidean, true).is_err());
    }
}
