//! Boolean semantics, evaluated point-wise by direct search.
//!
//! Reach explores `(agent, accumulated distance)` states and escape explores
//! the sub-graph of agents satisfying the operand. Neither shares code with
//! the robust fixpoints, so the two can be cross-checked.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet, VecDeque};
use std::rc::Rc;

use super::{graph_at, GraphSnapshot, SemanticsError, StateValuation, Trajectory, Valuation, View, WeightSpec};
use crate::logic::{surround_expansion, DistInterval, Formula};
use crate::ExtReal;

const STATE_CAP: usize = 10_000_000;

pub struct BoolEvaluator<'a> {
    val: StateValuation<'a>,
    spec: Option<&'a WeightSpec>,
    cache: RefCell<HashMap<usize, Rc<GraphSnapshot>>>,
}

impl<'a> BoolEvaluator<'a> {
    pub fn stl(x: &'a Trajectory) -> Self {
        BoolEvaluator { val: StateValuation::new(x, View::Flat), spec: None, cache: RefCell::default() }
    }

    pub fn strel(x: &'a Trajectory, w: &'a WeightSpec) -> Self {
        BoolEvaluator { val: StateValuation::new(x, View::PerAgent), spec: Some(w), cache: RefCell::default() }
    }

    fn graph(&self, tau: usize) -> Result<Rc<GraphSnapshot>, SemanticsError> {
        let spec = self.spec.ok_or(SemanticsError::MissingWeights)?;
        if let Some(g) = self.cache.borrow().get(&tau) {
            return Ok(g.clone());
        }
        let g = Rc::new(graph_at(spec, self.val.traj, tau)?);
        self.cache.borrow_mut().insert(tau, g.clone());
        Ok(g)
    }

    pub fn eval(&self, f: &Formula, tau: usize, l: usize) -> Result<bool, SemanticsError> {
        use Formula::*;
        Ok(match f {
            True => true,
            False => false,
            Pred(p) => self.val.predicate(p, tau, l)? >= ExtReal::ZERO,
            Not(a) => !self.eval(a, tau, l)?,
            And(a, b) => self.eval(a, tau, l)? && self.eval(b, tau, l)?,
            Or(a, b) => self.eval(a, tau, l)? || self.eval(b, tau, l)?,
            Eventually(i, a) => {
                for u in tau + i.lo..=tau + i.hi {
                    if self.eval(a, u, l)? {
                        return Ok(true);
                    }
                }
                false
            }
            Always(i, a) => {
                for u in tau + i.lo..=tau + i.hi {
                    if !self.eval(a, u, l)? {
                        return Ok(false);
                    }
                }
                true
            }
            Until(i, a, b) => {
                for u in tau + i.lo..=tau + i.hi {
                    if self.eval(b, u, l)? {
                        let mut ok = true;
                        for v in tau + 1..u {
                            if !self.eval(a, v, l)? {
                                ok = false;
                                break;
                            }
                        }
                        if ok {
                            return Ok(true);
                        }
                    }
                }
                false
            }
            Reach(d, a, b) => {
                let g = self.graph(tau)?;
                let s1 = self.column(a, tau, g.n)?;
                let s2 = self.column(b, tau, g.n)?;
                reach_holds(&g, *d, &s1, &s2, l)?
            }
            Somewhere(d, a) => {
                let g = self.graph(tau)?;
                let s2 = self.column(a, tau, g.n)?;
                reach_holds(&g, *d, &vec![true; g.n], &s2, l)?
            }
            Everywhere(d, a) => {
                let g = self.graph(tau)?;
                let s2: Vec<bool> = self.column(a, tau, g.n)?.into_iter().map(|b| !b).collect();
                !reach_holds(&g, *d, &vec![true; g.n], &s2, l)?
            }
            Escape(d, a) => {
                let g = self.graph(tau)?;
                let s1 = self.column(a, tau, g.n)?;
                escape_holds(&g, *d, &s1, l)
            }
            Surround(d, a, b) => {
                self.graph(tau)?;
                self.eval(&surround_expansion(*d, a, b), tau, l)?
            }
        })
    }

    fn column(&self, f: &Formula, tau: usize, n: usize) -> Result<Vec<bool>, SemanticsError> {
        (0..n).map(|l| self.eval(f, tau, l)).collect()
    }
}

/// Is there a route from `l` whose last agent satisfies `s2`, every earlier
/// agent satisfies `s1`, and whose length lies in `d`?
fn reach_holds(g: &GraphSnapshot, d: DistInterval, s1: &[bool], s2: &[bool], l: usize) -> Result<bool, SemanticsError> {
    // Past d.lo only reachability matters, so distances are clipped there
    // when the upper bound is infinite.
    let clip = |x: f64| if d.is_bounded() { x } else { x.min(d.lo) };
    let mut seen: HashSet<(usize, u64)> = HashSet::new();
    let mut queue = VecDeque::from([(l, 0.0f64)]);
    seen.insert((l, 0f64.to_bits()));
    while let Some((v, dist)) = queue.pop_front() {
        if d.contains(dist) && s2[v] {
            return Ok(true);
        }
        if !s1[v] {
            continue;
        }
        for &(u, w) in g.neighbors(v) {
            let nd = clip(dist + w);
            if nd <= d.hi && seen.insert((u, nd.to_bits())) {
                if seen.len() > STATE_CAP {
                    return Err(SemanticsError::IterationCap("boolean reach"));
                }
                queue.push_back((u, nd));
            }
        }
    }
    Ok(false)
}

/// Is there an agent at min distance in `d` reachable from `l` through
/// agents that all satisfy `s1`?
fn escape_holds(g: &GraphSnapshot, d: DistInterval, s1: &[bool], l: usize) -> bool {
    if !s1[l] {
        return false;
    }
    let mut seen = vec![false; g.n];
    seen[l] = true;
    let mut stack = vec![l];
    while let Some(v) = stack.pop() {
        let dist = g.min_distance(l, v);
        if dist.is_finite() && d.contains(dist.value()) {
            return true;
        }
        for &(u, _) in g.neighbors(v) {
            if s1[u] && !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    false
}
