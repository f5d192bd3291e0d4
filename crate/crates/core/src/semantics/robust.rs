//! Window-based robust semantics.
//!
//! Sub-formulas are evaluated on whole time windows at once, so each node of
//! the syntax tree is visited once per top-level call.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use super::{child_requests, graph_at, spatial, GraphSnapshot, Locs, SemanticsError, Trajectory, Valuation, WeightSpec};
use crate::logic::{surround_expansion, DistInterval, Formula};
use crate::ExtReal;

/// Robustness values on `[lo, hi] × locs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    lo: usize,
    hi: usize,
    base: usize,
    width: usize,
    data: Vec<ExtReal>,
}

impl Signal {
    fn filled(lo: usize, hi: usize, locs: Locs, n: usize, v: ExtReal) -> Self {
        let (base, width) = match locs {
            Locs::All => (0, n),
            Locs::One(l) => (l, 1),
        };
        Signal { lo, hi, base, width, data: vec![v; (hi - lo + 1) * width] }
    }

    #[inline]
    pub fn get(&self, tau: usize, loc: usize) -> ExtReal {
        debug_assert!(self.lo <= tau && tau <= self.hi);
        self.data[(tau - self.lo) * self.width + (loc - self.base)]
    }

    #[inline]
    fn set(&mut self, tau: usize, loc: usize, v: ExtReal) {
        self.data[(tau - self.lo) * self.width + (loc - self.base)] = v;
    }

    fn locs(&self) -> std::ops::Range<usize> {
        self.base..self.base + self.width
    }

    pub fn window(&self) -> (usize, usize) {
        (self.lo, self.hi)
    }

    fn map(mut self, f: impl Fn(ExtReal) -> ExtReal) -> Self {
        self.data.iter_mut().for_each(|v| *v = f(*v));
        self
    }

    fn zip(mut self, other: &Signal, f: impl Fn(ExtReal, ExtReal) -> ExtReal) -> Self {
        for t in self.lo..=self.hi {
            for l in self.locs() {
                let v = f(self.get(t, l), other.get(t, l));
                self.set(t, l, v);
            }
        }
        self
    }
}

struct Graphs<'a> {
    spec: &'a WeightSpec,
    traj: &'a Trajectory,
    cache: RefCell<HashMap<usize, Rc<GraphSnapshot>>>,
}

/// Robust evaluator over an arbitrary predicate valuation.
///
/// Graphs for spatial operators are built from `traj` and cached per time.
pub struct Evaluator<'a> {
    val: &'a dyn Valuation,
    graphs: Option<Graphs<'a>>,
    n: usize,
}

impl<'a> Evaluator<'a> {
    /// Single-location evaluator; spatial operators are rejected.
    pub fn stl(val: &'a dyn Valuation) -> Self {
        Evaluator { val, graphs: None, n: 1 }
    }

    pub fn strel(val: &'a dyn Valuation, spec: &'a WeightSpec, traj: &'a Trajectory) -> Self {
        let graphs = Graphs { spec, traj, cache: RefCell::new(HashMap::new()) };
        Evaluator { val, graphs: Some(graphs), n: traj.agents() }
    }

    pub fn eval(&self, f: &Formula, tau0: usize, loc: usize) -> Result<ExtReal, SemanticsError> {
        Ok(self.signal(f, tau0, tau0, Locs::One(loc))?.get(tau0, loc))
    }

    /// The graph at `tau`, built on first use.
    pub fn graph(&self, tau: usize) -> Result<Rc<GraphSnapshot>, SemanticsError> {
        let g = self.graphs.as_ref().ok_or(SemanticsError::MissingWeights)?;
        if let Some(s) = g.cache.borrow().get(&tau) {
            return Ok(s.clone());
        }
        let s = Rc::new(graph_at(g.spec, g.traj, tau)?);
        g.cache.borrow_mut().insert(tau, s.clone());
        Ok(s)
    }

    pub fn signal(&self, f: &Formula, lo: usize, hi: usize, locs: Locs) -> Result<Signal, SemanticsError> {
        use Formula::*;
        let req = child_requests(f, lo, hi, locs);
        let child = |i: usize, c: &Formula| -> Result<Signal, SemanticsError> {
            let (a, b, l) = req[i].expect("child window");
            self.signal(c, a, b, l)
        };
        let n = self.n;
        Ok(match f {
            True => Signal::filled(lo, hi, locs, n, ExtReal::INFINITY),
            False => Signal::filled(lo, hi, locs, n, ExtReal::NEG_INFINITY),
            Pred(p) => {
                let mut s = Signal::filled(lo, hi, locs, n, ExtReal::ZERO);
                for t in lo..=hi {
                    for l in locs.iter(n) {
                        s.set(t, l, self.val.predicate(p, t, l)?);
                    }
                }
                s
            }
            Not(a) => child(0, a)?.map(|v| -v),
            And(a, b) => child(0, a)?.zip(&child(1, b)?, ExtReal::min),
            Or(a, b) => child(0, a)?.zip(&child(1, b)?, ExtReal::max),
            Eventually(i, a) | Always(i, a) => {
                let is_f = matches!(f, Eventually(..));
                let c = child(0, a)?;
                let mut s = Signal::filled(lo, hi, locs, n, ExtReal::ZERO);
                for t in lo..=hi {
                    for l in locs.iter(n) {
                        let w = (t + i.lo..=t + i.hi).map(|u| c.get(u, l));
                        s.set(t, l, if is_f { ExtReal::sup(w) } else { ExtReal::inf(w) });
                    }
                }
                s
            }
            Until(i, a, b) => {
                let left = match req[0] {
                    Some((x, y, l)) => Some(self.signal(a, x, y, l)?),
                    None => None,
                };
                let right = child(1, b)?;
                let mut s = Signal::filled(lo, hi, locs, n, ExtReal::ZERO);
                for t in lo..=hi {
                    for l in locs.iter(n) {
                        // guard = inf of the left side over the open interval (t, u).
                        let mut guard = ExtReal::INFINITY;
                        let mut best = ExtReal::NEG_INFINITY;
                        for u in t..=t + i.hi {
                            if u >= t + i.lo {
                                best = best.max(right.get(u, l).min(guard));
                            }
                            if u > t && u < t + i.hi {
                                guard = guard.min(left.as_ref().expect("left window").get(u, l));
                            }
                        }
                        s.set(t, l, best);
                    }
                }
                s
            }
            Reach(d, a, b) => {
                let (ca, cb) = (child(0, a)?, child(1, b)?);
                self.spatial(lo, hi, locs, |g, t| {
                    let s1 = self.column(&ca, t);
                    let s2 = self.column(&cb, t);
                    spatial::reach(g, *d, &s1, &s2)
                })?
            }
            Escape(d, a) => {
                let c = child(0, a)?;
                self.spatial(lo, hi, locs, |g, t| spatial::escape(g, *d, &self.column(&c, t)))?
            }
            Somewhere(d, a) => {
                let c = child(0, a)?;
                self.spatial(lo, hi, locs, |g, t| somewhere(g, *d, &self.column(&c, t)))?
            }
            Everywhere(d, a) => {
                let c = child(0, a)?;
                self.spatial(lo, hi, locs, |g, t| {
                    let neg: Vec<ExtReal> = self.column(&c, t).into_iter().map(|v| -v).collect();
                    Ok(somewhere(g, *d, &neg)?.into_iter().map(|v| -v).collect())
                })?
            }
            Surround(d, a, b) => {
                if self.graphs.is_none() {
                    return Err(SemanticsError::MissingWeights);
                }
                self.signal(&surround_expansion(*d, a, b), lo, hi, locs)?
            }
        })
    }

    fn column(&self, s: &Signal, t: usize) -> Vec<ExtReal> {
        (0..self.n).map(|l| s.get(t, l)).collect()
    }

    fn spatial(
        &self,
        lo: usize,
        hi: usize,
        locs: Locs,
        op: impl Fn(&GraphSnapshot, usize) -> Result<Vec<ExtReal>, SemanticsError>,
    ) -> Result<Signal, SemanticsError> {
        let mut s = Signal::filled(lo, hi, locs, self.n, ExtReal::ZERO);
        for t in lo..=hi {
            let g = self.graph(t)?;
            let v = op(&g, t)?;
            for l in locs.iter(self.n) {
                s.set(t, l, v[l]);
            }
        }
        Ok(s)
    }
}

fn somewhere(g: &GraphSnapshot, d: DistInterval, s: &[ExtReal]) -> Result<Vec<ExtReal>, SemanticsError> {
    let top = vec![ExtReal::INFINITY; s.len()];
    spatial::reach(g, d, &top, s)
}
