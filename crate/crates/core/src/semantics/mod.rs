//! Boolean and robust semantics of STL and STREL over discrete-time
//! trajectories.
//!
//! STL formulas are evaluated on the flattened state with a single
//! location. STREL formulas are evaluated per agent on the graph induced by
//! a [`WeightSpec`]. Agents are 0-based throughout the library.

mod boolean;
mod graph;
mod robust;
pub mod spatial;
mod trajectory;

use thiserror::Error;

use crate::logic::{formula_length, Formula, Predicate};
use crate::ExtReal;

pub use boolean::BoolEvaluator;
pub use graph::{graph_at, GraphSnapshot, WeightRule, WeightSpec};
pub use robust::{Evaluator, Signal};
pub use trajectory::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemanticsError {
    #[error("trajectory too short: need {needed} time steps, have {len}")]
    TooShort { needed: usize, len: usize },
    #[error("agent {agent} out of range for {agents} agents")]
    AgentOutOfRange { agent: usize, agents: usize },
    #[error("state index s[{var}] out of range for state dimension {dim}")]
    VarOutOfRange { var: usize, dim: usize },
    #[error("negative weight {w} between agents {a} and {b} at time {tau}")]
    NegativeWeight { tau: usize, a: usize, b: usize, w: f64 },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("spatial operator evaluated without a weight specification")]
    MissingWeights,
    #[error("no value for predicate {pred} at time {tau}, location {loc}")]
    MissingValue { pred: usize, tau: usize, loc: usize },
    #[error("iteration cap exceeded in {0}")]
    IterationCap(&'static str),
    #[error("predicate value is NaN")]
    NaN,
}

/// Source of predicate robustness values `ρ^π(·, τ, l)`.
pub trait Valuation {
    fn predicate(&self, p: &Predicate, tau: usize, loc: usize) -> Result<ExtReal, SemanticsError>;
}

/// Whether predicates are read from the flattened state (STL) or per agent (STREL).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum View {
    Flat,
    PerAgent,
}

/// `h` evaluated on the states of a trajectory.
pub struct StateValuation<'a> {
    pub traj: &'a Trajectory,
    pub view: View,
}

impl<'a> StateValuation<'a> {
    pub fn new(traj: &'a Trajectory, view: View) -> Self {
        StateValuation { traj, view }
    }

    #[inline]
    pub fn state(&self, tau: usize, loc: usize) -> &[f64] {
        match self.view {
            View::Flat => self.traj.flat(tau),
            View::PerAgent => self.traj.state(tau, loc),
        }
    }
}

impl Valuation for StateValuation<'_> {
    #[inline]
    fn predicate(&self, p: &Predicate, tau: usize, loc: usize) -> Result<ExtReal, SemanticsError> {
        if tau >= self.traj.len() {
            return Err(SemanticsError::TooShort { needed: tau + 1, len: self.traj.len() });
        }
        ExtReal::try_new(p.h(self.state(tau, loc))).ok_or(SemanticsError::NaN)
    }
}

/// Locations requested from a sub-formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Locs {
    All,
    One(usize),
}

impl Locs {
    pub fn iter(self, n: usize) -> impl Iterator<Item = usize> {
        let (a, b) = match self {
            Locs::All => (0, n),
            Locs::One(l) => (l, l + 1),
        };
        a..b
    }

    pub fn union(self, other: Locs) -> Locs {
        if self == other {
            self
        } else {
            Locs::All
        }
    }
}

/// Time window and locations needed from each child of `f` to evaluate `f`
/// on `[lo, hi] × locs`. `None` means the child is not needed.
pub fn child_requests(f: &Formula, lo: usize, hi: usize, locs: Locs) -> Vec<Option<(usize, usize, Locs)>> {
    use Formula::*;
    match f {
        True | False | Pred(_) => vec![],
        Not(_) => vec![Some((lo, hi, locs))],
        And(..) | Or(..) => vec![Some((lo, hi, locs)); 2],
        Until(i, ..) => {
            let left = (i.hi >= 2).then(|| (lo + 1, hi + i.hi - 1, locs));
            vec![left, Some((lo + i.lo, hi + i.hi, locs))]
        }
        Eventually(i, _) | Always(i, _) => vec![Some((lo + i.lo, hi + i.hi, locs))],
        Reach(..) | Surround(..) => vec![Some((lo, hi, Locs::All)); 2],
        Escape(..) | Somewhere(..) | Everywhere(..) => vec![Some((lo, hi, Locs::All))],
    }
}

/// Where each predicate is needed when `f` is evaluated at `τ0` on `locs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Demand {
    pub pred: usize,
    pub lo: usize,
    pub hi: usize,
    pub locs: Locs,
}

/// Predicate demands in left-to-right order, merged per predicate id.
pub fn predicate_demands(f: &Formula, tau0: usize, locs: Locs) -> Vec<Demand> {
    fn walk(f: &Formula, lo: usize, hi: usize, locs: Locs, out: &mut Vec<Demand>) {
        if let Formula::Pred(p) = f {
            if let Some(d) = out.iter_mut().find(|d| d.pred == p.id) {
                d.lo = d.lo.min(lo);
                d.hi = d.hi.max(hi);
                d.locs = d.locs.union(locs);
            } else {
                out.push(Demand { pred: p.id, lo, hi, locs });
            }
            return;
        }
        for (c, req) in f.children().into_iter().zip(child_requests(f, lo, hi, locs)) {
            if let Some((a, b, l)) = req {
                walk(c, a, b, l, out);
            }
        }
    }
    let mut out = Vec::new();
    walk(f, tau0, tau0, locs, &mut out);
    out
}

fn check_length(f: &Formula, len: usize, tau0: usize) -> Result<(), SemanticsError> {
    let needed = tau0 + formula_length(f) + 1;
    if needed > len {
        return Err(SemanticsError::TooShort { needed, len });
    }
    Ok(())
}

/// Ensures every `s[i]` in `f` indexes into a state of dimension `dim`.
pub fn check_vars(f: &Formula, dim: usize) -> Result<(), SemanticsError> {
    for p in f.predicates() {
        if let Some(v) = p.max_var() {
            if v >= dim {
                return Err(SemanticsError::VarOutOfRange { var: v, dim });
            }
        }
    }
    Ok(())
}

fn check_stl(f: &Formula, x: &Trajectory, tau0: usize) -> Result<(), SemanticsError> {
    if f.has_spatial() {
        return Err(SemanticsError::MissingWeights);
    }
    check_length(f, x.len(), tau0)?;
    check_vars(f, x.flat_dim())
}

fn check_strel(f: &Formula, x: &Trajectory, tau0: usize, agent: usize) -> Result<(), SemanticsError> {
    if agent >= x.agents() {
        return Err(SemanticsError::AgentOutOfRange { agent, agents: x.agents() });
    }
    check_length(f, x.len(), tau0)?;
    check_vars(f, x.dims())
}

/// `ρ^φ(x, τ0)` on the flattened state.
pub fn eval_robust_stl(f: &Formula, x: &Trajectory, tau0: usize) -> Result<ExtReal, SemanticsError> {
    check_stl(f, x, tau0)?;
    let v = StateValuation::new(x, View::Flat);
    Evaluator::stl(&v).eval(f, tau0, 0)
}

/// `(x, τ0) ⊨ φ` on the flattened state.
pub fn eval_bool_stl(f: &Formula, x: &Trajectory, tau0: usize) -> Result<bool, SemanticsError> {
    check_stl(f, x, tau0)?;
    BoolEvaluator::stl(x).eval(f, tau0, 0)
}

/// `ρ^ψ(x, τ0, l)`.
pub fn eval_robust_strel(f: &Formula, x: &Trajectory, w: &WeightSpec, tau0: usize, agent: usize) -> Result<ExtReal, SemanticsError> {
    check_strel(f, x, tau0, agent)?;
    let v = StateValuation::new(x, View::PerAgent);
    Evaluator::strel(&v, w, x).eval(f, tau0, agent)
}

/// `(x, τ0, l) ⊨ ψ`.
pub fn eval_bool_strel(f: &Formula, x: &Trajectory, w: &WeightSpec, tau0: usize, agent: usize) -> Result<bool, SemanticsError> {
    check_strel(f, x, tau0, agent)?;
    BoolEvaluator::strel(x, w).eval(f, tau0, agent)
}
