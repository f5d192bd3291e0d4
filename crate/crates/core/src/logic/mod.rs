//! Formula AST for STL and STREL, the text DSL, formula length and
//! positive normal form.

mod expr;
mod parser;
mod pnf;
mod print;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expr::{Affine, Expr, Norm};
pub use parser::parse;
pub use pnf::to_pnf;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogicError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("spatial operator `{op}` at {line}:{col} is not allowed in the stl dialect")]
    SpatialInStl { op: String, line: usize, col: usize },
    #[error("unbounded time interval at {line}:{col}")]
    UnboundedTime { line: usize, col: usize },
    #[error("negation cannot be pushed through `{0}`")]
    NegationNotEliminable(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    Stl,
    Strel,
}

impl std::str::FromStr for Dialect {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "stl" => Ok(Dialect::Stl),
            "strel" => Ok(Dialect::Strel),
            o => Err(format!("unknown dialect {o:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cmp {
    Ge,
    Le,
}

/// Atomic predicate `lhs ⋈ rhs`, read as `h(x) ≥ 0` with
/// `h = lhs − rhs` for `≥` and `h = rhs − lhs` for `≤`.
#[derive(Clone, Debug, PartialEq)]
pub struct Predicate {
    pub id: usize,
    pub lhs: Expr,
    pub cmp: Cmp,
    pub rhs: Expr,
}

impl Predicate {
    #[inline]
    pub fn h(&self, x: &[f64]) -> f64 {
        match self.cmp {
            Cmp::Ge => self.lhs.eval(x) - self.rhs.eval(x),
            Cmp::Le => self.rhs.eval(x) - self.lhs.eval(x),
        }
    }

    /// `h` as a single expression.
    pub fn h_expr(&self) -> Expr {
        let (a, b) = match self.cmp {
            Cmp::Ge => (&self.lhs, &self.rhs),
            Cmp::Le => (&self.rhs, &self.lhs),
        };
        Expr::Sub(Box::new(a.clone()), Box::new(b.clone()))
    }

    pub fn max_var(&self) -> Option<usize> {
        let mut s = self.lhs.vars();
        self.rhs.collect_vars(&mut s);
        s.last().copied()
    }

    /// The predicate with `h ↦ −h`.
    pub fn negated(&self, id: usize) -> Predicate {
        let cmp = match self.cmp {
            Cmp::Ge => Cmp::Le,
            Cmp::Le => Cmp::Ge,
        };
        Predicate { id, lhs: self.lhs.clone(), cmp, rhs: self.rhs.clone() }
    }
}

/// Discrete time interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TimeInterval {
    pub lo: usize,
    pub hi: usize,
}

impl TimeInterval {
    pub fn new(lo: usize, hi: usize) -> Self {
        assert!(lo <= hi, "time interval lower bound exceeds upper bound");
        TimeInterval { lo, hi }
    }
}

/// Distance interval `[lo, hi]`; `hi` may be `+∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistInterval {
    pub lo: f64,
    pub hi: f64,
}

impl DistInterval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo >= 0.0 && lo <= hi && lo.is_finite(), "invalid distance interval");
        DistInterval { lo, hi }
    }

    #[inline]
    pub fn contains(&self, d: f64) -> bool {
        self.lo <= d && d <= self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.hi.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Formula {
    True,
    False,
    Pred(Predicate),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Until(TimeInterval, Box<Formula>, Box<Formula>),
    Eventually(TimeInterval, Box<Formula>),
    Always(TimeInterval, Box<Formula>),
    Reach(DistInterval, Box<Formula>, Box<Formula>),
    Escape(DistInterval, Box<Formula>),
    Somewhere(DistInterval, Box<Formula>),
    Everywhere(DistInterval, Box<Formula>),
    /// `ψ' surround[≤d] ψ''`.
    Surround(f64, Box<Formula>, Box<Formula>),
}

fn b(f: Formula) -> Box<Formula> {
    Box::new(f)
}

impl Formula {
    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(b(f))
    }
    pub fn and(l: Formula, r: Formula) -> Formula {
        Formula::And(b(l), b(r))
    }
    pub fn or(l: Formula, r: Formula) -> Formula {
        Formula::Or(b(l), b(r))
    }

    pub fn children(&self) -> Vec<&Formula> {
        use Formula::*;
        match self {
            True | False | Pred(_) => vec![],
            Not(a) | Eventually(_, a) | Always(_, a) | Escape(_, a) | Somewhere(_, a)
            | Everywhere(_, a) => vec![a],
            And(l, r) | Or(l, r) | Until(_, l, r) | Reach(_, l, r) | Surround(_, l, r) => {
                vec![l, r]
            }
        }
    }

    fn children_mut(&mut self) -> Vec<&mut Formula> {
        use Formula::*;
        match self {
            True | False | Pred(_) => vec![],
            Not(a) | Eventually(_, a) | Always(_, a) | Escape(_, a) | Somewhere(_, a)
            | Everywhere(_, a) => vec![a],
            And(l, r) | Or(l, r) | Until(_, l, r) | Reach(_, l, r) | Surround(_, l, r) => {
                vec![l, r]
            }
        }
    }

    /// Predicates in left-to-right order.
    pub fn predicates(&self) -> Vec<&Predicate> {
        let mut out = Vec::new();
        fn walk<'a>(f: &'a Formula, out: &mut Vec<&'a Predicate>) {
            if let Formula::Pred(p) = f {
                out.push(p);
            }
            for c in f.children() {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }

    /// Reassigns predicate ids `0, 1, …` in left-to-right order.
    pub fn renumber(&mut self) {
        fn walk(f: &mut Formula, next: &mut usize) {
            if let Formula::Pred(p) = f {
                p.id = *next;
                *next += 1;
            }
            for c in f.children_mut() {
                walk(c, next);
            }
        }
        walk(self, &mut 0);
    }

    pub fn max_predicate_id(&self) -> Option<usize> {
        self.predicates().iter().map(|p| p.id).max()
    }

    pub fn has_spatial(&self) -> bool {
        matches!(
            self,
            Formula::Reach(..)
                | Formula::Escape(..)
                | Formula::Somewhere(..)
                | Formula::Everywhere(..)
                | Formula::Surround(..)
        ) || self.children().iter().any(|c| c.has_spatial())
    }

    pub fn has_negation(&self) -> bool {
        matches!(self, Formula::Not(_)) || self.children().iter().any(|c| c.has_negation())
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    /// Expands derived operators into the core syntax
    /// `True | π | ¬ | ∧ | U | R | E` (plus `False`).
    pub fn desugar(&self) -> Formula {
        use Formula::*;
        match self {
            True => True,
            False => False,
            Pred(p) => Pred(p.clone()),
            Not(a) => Formula::not(a.desugar()),
            And(l, r) => Formula::and(l.desugar(), r.desugar()),
            Or(l, r) => Formula::not(Formula::and(Formula::not(l.desugar()), Formula::not(r.desugar()))),
            Until(i, l, r) => Until(*i, b(l.desugar()), b(r.desugar())),
            Eventually(i, a) => Until(*i, b(True), b(a.desugar())),
            Always(i, a) => Formula::not(Until(*i, b(True), b(Formula::not(a.desugar())))),
            Reach(d, l, r) => Reach(*d, b(l.desugar()), b(r.desugar())),
            Escape(d, a) => Escape(*d, b(a.desugar())),
            Somewhere(d, a) => Reach(*d, b(True), b(a.desugar())),
            Everywhere(d, a) => Formula::not(Reach(*d, b(True), b(Formula::not(a.desugar())))),
            Surround(d, l, r) => surround_expansion(*d, l, r).desugar(),
        }
    }
}

/// `ψ' ∧ ¬(ψ' R[0,d] ¬(ψ' ∨ ψ'')) ∧ ¬(E[d,∞] ψ')`.
pub(crate) fn surround_expansion(d: f64, l: &Formula, r: &Formula) -> Formula {
    let reach = Formula::Reach(
        DistInterval::new(0.0, d),
        b(l.clone()),
        b(Formula::not(Formula::or(l.clone(), r.clone()))),
    );
    let escape = Formula::Escape(DistInterval::new(d, f64::INFINITY), b(l.clone()));
    Formula::and(
        Formula::and(l.clone(), Formula::not(reach)),
        Formula::not(escape),
    )
}

/// Formula length `L^φ`: the number of future steps needed to evaluate `φ`.
///
/// Spatial operators do not add time but do propagate the length of their
/// operands, so `somewhere(F[0,3] π)` has length 3.
pub fn formula_length(f: &Formula) -> usize {
    use Formula::*;
    let kids = || f.children().into_iter().map(formula_length).max().unwrap_or(0);
    match f {
        True | False | Pred(_) => 0,
        Until(i, ..) | Eventually(i, _) | Always(i, _) => i.hi + kids(),
        _ => kids(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_examples() {
        let p = parse("s[0] >= 0", Dialect::Stl).unwrap();
        assert_eq!(formula_length(&p), 0);
        let g = parse("G[0,5] (F[0,3] (s[0] >= 0))", Dialect::Stl).unwrap();
        assert_eq!(formula_length(&g), 8);
        let r = parse("(s[0] >= 0) R[0,6] (s[1] <= 2)", Dialect::Strel).unwrap();
        assert_eq!(formula_length(&r), 0);
        let u = parse("(s[0] >= 0) U[2,4] (F[1,3] s[0] >= 1)", Dialect::Stl).unwrap();
        assert_eq!(formula_length(&u), 7);
        let sw = parse("somewhere[0,6] (F[0,3] s[0] >= 1)", Dialect::Strel).unwrap();
        assert_eq!(formula_length(&sw), 3);
    }

    #[test]
    fn desugar_shapes() {
        let f = parse("F[1,2] s[0] >= 0", Dialect::Stl).unwrap();
        assert!(matches!(f.desugar(), Formula::Until(_, ref l, _) if **l == Formula::True));
        let s = parse("somewhere[0,6] (s[2] <= 50)", Dialect::Strel).unwrap();
        match s.desugar() {
            Formula::Reach(d, l, r) => {
                assert_eq!((d.lo, d.hi), (0.0, 6.0));
                assert_eq!(*l, Formula::True);
                let Formula::Pred(p) = *r else { panic!() };
                assert_eq!(p.h(&[0.0, 0.0, 20.0]), 30.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        let sur = parse("(s[0] >= 0) surround[2] (s[1] >= 0)", Dialect::Strel).unwrap();
        let d = sur.desugar();
        assert!(d.has_spatial() && d.has_negation());
    }
}
