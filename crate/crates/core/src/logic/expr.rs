//! Predicate expressions over a state vector.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Norm used for state balls and Lipschitz constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    Euclidean,
    Max,
}

impl Norm {
    pub fn of(self, v: impl IntoIterator<Item = f64>) -> f64 {
        match self {
            Norm::Euclidean => v.into_iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Max => v.into_iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// Dual norm (ℓ2 ↔ ℓ2, ℓ∞ ↔ ℓ1).
    pub fn dual_of(self, v: impl IntoIterator<Item = f64>) -> f64 {
        match self {
            Norm::Euclidean => Norm::Euclidean.of(v),
            Norm::Max => v.into_iter().map(f64::abs).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Var(usize),
    Const(f64),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Min(Vec<Expr>),
    Max(Vec<Expr>),
    Norm2(Vec<Expr>),
    NormInf(Vec<Expr>),
    /// `min_j ‖args − points[j]‖∞`.
    MinDistInf { args: Vec<Expr>, points: Vec<Vec<f64>> },
}

/// `constant + Σ grad[i]·x[i]`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Affine {
    pub grad: BTreeMap<usize, f64>,
    pub constant: f64,
}

impl Affine {
    fn scale(mut self, k: f64) -> Self {
        for g in self.grad.values_mut() {
            *g *= k;
        }
        self.constant *= k;
        self
    }

    fn plus(mut self, other: Affine, sign: f64) -> Self {
        for (i, g) in other.grad {
            *self.grad.entry(i).or_insert(0.0) += sign * g;
        }
        self.constant += sign * other.constant;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.grad.iter().map(|(&i, g)| g * x[i]).sum::<f64>()
    }

    /// If this is `±x[i] + c`, returns `(i, sign, c)`.
    pub fn as_offset_coordinate(&self) -> Option<(usize, f64, f64)> {
        let nz: Vec<_> = self.grad.iter().filter(|(_, g)| **g != 0.0).collect();
        match nz.as_slice() {
            [(&i, &g)] if g.abs() == 1.0 => Some((i, g, self.constant)),
            _ => None,
        }
    }
}

impl Expr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Var(i) => x[*i],
            Expr::Const(c) => *c,
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Min(v) => v.iter().map(|e| e.eval(x)).fold(f64::INFINITY, f64::min),
            Expr::Max(v) => v.iter().map(|e| e.eval(x)).fold(f64::NEG_INFINITY, f64::max),
            Expr::Norm2(v) => Norm::Euclidean.of(v.iter().map(|e| e.eval(x))),
            Expr::NormInf(v) => Norm::Max.of(v.iter().map(|e| e.eval(x))),
            Expr::MinDistInf { args, points } => {
                let a: Vec<f64> = args.iter().map(|e| e.eval(x)).collect();
                points
                    .iter()
                    .map(|p| Norm::Max.of(a.iter().zip(p).map(|(u, v)| u - v)))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Var(_) | Expr::Const(_) => vec![],
            Expr::Neg(a) => vec![a],
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => vec![a, b],
            Expr::Min(v) | Expr::Max(v) | Expr::Norm2(v) | Expr::NormInf(v) => v.iter().collect(),
            Expr::MinDistInf { args, .. } => args.iter().collect(),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<usize>) {
        if let Expr::Var(i) = self {
            out.insert(*i);
        }
        for c in self.children() {
            c.collect_vars(out);
        }
    }

    pub fn vars(&self) -> BTreeSet<usize> {
        let mut s = BTreeSet::new();
        self.collect_vars(&mut s);
        s
    }

    pub fn is_constant(&self) -> bool {
        self.vars().is_empty()
    }

    /// Affine representation, if the expression is affine.
    pub fn affine(&self) -> Option<Affine> {
        if self.is_constant() {
            return Some(Affine { grad: BTreeMap::new(), constant: self.eval(&[]) });
        }
        match self {
            Expr::Var(i) => Some(Affine { grad: BTreeMap::from([(*i, 1.0)]), constant: 0.0 }),
            Expr::Neg(a) => Some(a.affine()?.scale(-1.0)),
            Expr::Add(a, b) => Some(a.affine()?.plus(b.affine()?, 1.0)),
            Expr::Sub(a, b) => Some(a.affine()?.plus(b.affine()?, -1.0)),
            Expr::Mul(a, b) => {
                if a.is_constant() {
                    Some(b.affine()?.scale(a.eval(&[])))
                } else if b.is_constant() {
                    Some(a.affine()?.scale(b.eval(&[])))
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    pub fn is_affine(&self) -> bool {
        self.affine().is_some()
    }

    /// Lipschitz constant with respect to `norm` on the state space, if derivable.
    pub fn lipschitz(&self, norm: Norm) -> Option<f64> {
        if let Some(a) = self.affine() {
            return Some(norm.dual_of(a.grad.values().copied()));
        }
        match self {
            Expr::Neg(a) => a.lipschitz(norm),
            Expr::Add(a, b) | Expr::Sub(a, b) => Some(a.lipschitz(norm)? + b.lipschitz(norm)?),
            Expr::Mul(a, b) => {
                if a.is_constant() {
                    Some(a.eval(&[]).abs() * b.lipschitz(norm)?)
                } else if b.is_constant() {
                    Some(b.eval(&[]).abs() * a.lipschitz(norm)?)
                } else {
                    None
                }
            }
            Expr::Min(v) | Expr::Max(v) => {
                v.iter().try_fold(0.0f64, |m, e| Some(m.max(e.lipschitz(norm)?)))
            }
            Expr::Norm2(v) => vector_lipschitz(v, Norm::Euclidean, norm),
            Expr::NormInf(v) => vector_lipschitz(v, Norm::Max, norm),
            Expr::MinDistInf { args, .. } => vector_lipschitz(args, Norm::Max, norm),
            Expr::Var(_) | Expr::Const(_) => unreachable!("affine"),
        }
    }
}

/// Lipschitz constant of `x ↦ ‖(e_1(x), …, e_k(x))‖_outer` under `inner` on the state.
fn vector_lipschitz(v: &[Expr], outer: Norm, inner: Norm) -> Option<f64> {
    let affine: Option<Vec<Affine>> = v.iter().map(Expr::affine).collect();
    match affine {
        Some(rows) => Some(operator_norm(&rows, inner, outer)),
        None => {
            let l: Option<Vec<f64>> = v.iter().map(|e| e.lipschitz(inner)).collect();
            let l = l?;
            Some(outer.of(l))
        }
    }
}

/// `‖A‖_{inner→outer}` for the linear part of the rows (upper bound for ℓ∞→ℓ2).
fn operator_norm(rows: &[Affine], inner: Norm, outer: Norm) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    match (inner, outer) {
        (_, Norm::Max) => rows
            .iter()
            .map(|r| inner.dual_of(r.grad.values().copied()))
            .fold(0.0, f64::max),
        (Norm::Max, Norm::Euclidean) => {
            Norm::Euclidean.of(rows.iter().map(|r| r.grad.values().map(|g| g.abs()).sum::<f64>()))
        }
        (Norm::Euclidean, Norm::Euclidean) => {
            let cols: BTreeSet<usize> = rows.iter().flat_map(|r| r.grad.keys().copied()).collect();
            if cols.is_empty() {
                return 0.0;
            }
            let idx: BTreeMap<usize, usize> = cols.iter().enumerate().map(|(j, &c)| (c, j)).collect();
            let mut m = DMatrix::<f64>::zeros(rows.len(), cols.len());
            for (i, r) in rows.iter().enumerate() {
                for (c, g) in &r.grad {
                    m[(i, idx[c])] = *g;
                }
            }
            m.singular_values().max()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(i: usize) -> Box<Expr> {
        Box::new(Expr::Var(i))
    }

    #[test]
    fn affine_detection() {
        let e = Expr::Sub(Box::new(Expr::Mul(Box::new(Expr::Const(2.0)), var(1))), var(0));
        let a = e.affine().unwrap();
        assert_eq!(a.grad, BTreeMap::from([(0, -1.0), (1, 2.0)]));
        assert_eq!(e.lipschitz(Norm::Euclidean).unwrap(), 5f64.sqrt());
        assert_eq!(e.lipschitz(Norm::Max).unwrap(), 3.0);
        assert!(!Expr::Mul(var(0), var(1)).is_affine());
        assert_eq!(Expr::Mul(var(0), var(1)).lipschitz(Norm::Euclidean), None);
    }

    #[test]
    fn norm_atoms_are_one_lipschitz() {
        let d = Expr::Norm2(vec![
            Expr::Sub(var(0), Box::new(Expr::Const(3.0))),
            Expr::Sub(var(1), Box::new(Expr::Const(4.0))),
        ]);
        assert!((d.lipschitz(Norm::Euclidean).unwrap() - 1.0).abs() < 1e-12);
        assert!((d.lipschitz(Norm::Max).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(d.eval(&[0.0, 0.0]), 5.0);
        let m = Expr::MinDistInf { args: vec![Expr::Var(0), Expr::Var(1)], points: vec![vec![1.0, 5.0], vec![4.0, 1.0]] };
        assert_eq!(m.eval(&[0.0, 0.0]), 4.0);
        assert_eq!(m.lipschitz(Norm::Euclidean), Some(1.0));
        assert_eq!(m.lipschitz(Norm::Max), Some(1.0));
    }

    #[test]
    fn min_max_take_largest_constant() {
        let e = Expr::Min(vec![
            Expr::Mul(Box::new(Expr::Const(-3.0)), var(0)),
            Expr::Norm2(vec![Expr::Var(1)]),
        ]);
        assert_eq!(e.lipschitz(Norm::Euclidean), Some(3.0));
    }
}
