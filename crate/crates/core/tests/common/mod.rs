//! Random instances and brute-force oracles shared by the integration tests.
//!
//! The oracles follow the recursive definitions directly: temporal operators
//! scan their whole window, reach is a walk recursion over
//! `(agent, accumulated distance)`, escape enumerates simple paths and min
//! distances come from Floyd-Warshall.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rprv::logic::{formula_length, parse, Dialect, DistInterval, Formula};
use rprv::semantics::{Trajectory, WeightSpec};
use rprv::ExtReal;

pub const NEG: ExtReal = ExtReal::NEG_INFINITY;
pub const POS: ExtReal = ExtReal::INFINITY;

/// A value on the half-integer grid of `[-3, 3]`, so ties are common.
pub fn grid_value(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-6..=6) as f64 * 0.5
}

fn predicate_text(rng: &mut ChaCha8Rng, dims: usize) -> String {
    let i = rng.random_range(0..dims);
    let j = rng.random_range(0..dims);
    let c = grid_value(rng);
    let op = if rng.random_bool(0.5) { ">=" } else { "<=" };
    match rng.random_range(0..4) {
        0 | 1 => format!("s[{i}] {op} {c}"),
        2 => format!("s[{i}] + s[{j}] {op} {c}"),
        _ => format!("2 * s[{i}] - s[{j}] {op} {c}"),
    }
}

fn dist_text(rng: &mut ChaCha8Rng, max: u32, allow_inf: bool) -> String {
    let lo = rng.random_range(0..=max / 2);
    if allow_inf && rng.random_bool(0.2) {
        format!("[{lo},inf]")
    } else {
        format!("[{lo},{}]", rng.random_range(lo..=max))
    }
}

/// Random formula text of nesting depth at most `depth` whose formula
/// length fits in `budget`. Spatial operators appear when `spatial`.
pub fn formula_text(rng: &mut ChaCha8Rng, depth: usize, budget: usize, dims: usize, spatial: bool, max_dist: u32) -> String {
    if depth == 0 || rng.random_bool(0.15) {
        return match rng.random_range(0..20) {
            0 => "true".into(),
            1 => "false".into(),
            _ => format!("({})", predicate_text(rng, dims)),
        };
    }
    let ops = if spatial { 11 } else { 6 };
    let sub = |rng: &mut ChaCha8Rng, b: usize| formula_text(rng, depth - 1, b, dims, spatial, max_dist);
    let interval = |rng: &mut ChaCha8Rng| {
        let hi = rng.random_range(0..=budget.min(10));
        let lo = rng.random_range(0..=hi);
        (lo, hi)
    };
    match rng.random_range(0..ops) {
        0 => format!("(not {})", sub(rng, budget)),
        1 => format!("({} and {})", sub(rng, budget), sub(rng, budget)),
        2 => format!("({} or {})", sub(rng, budget), sub(rng, budget)),
        3 => {
            let (lo, hi) = interval(rng);
            format!("(F[{lo},{hi}] {})", sub(rng, budget - hi))
        }
        4 => {
            let (lo, hi) = interval(rng);
            format!("(G[{lo},{hi}] {})", sub(rng, budget - hi))
        }
        5 => {
            let (lo, hi) = interval(rng);
            format!("({} U[{lo},{hi}] {})", sub(rng, budget - hi), sub(rng, budget - hi))
        }
        6 => format!("({} R{} {})", sub(rng, budget), dist_text(rng, max_dist, true), sub(rng, budget)),
        7 => format!("(E{} {})", dist_text(rng, max_dist, true), sub(rng, budget)),
        8 => format!("(somewhere{} {})", dist_text(rng, max_dist, true), sub(rng, budget)),
        9 => format!("(everywhere{} {})", dist_text(rng, max_dist, true), sub(rng, budget)),
        _ => format!("({} surround[{}] {})", sub(rng, budget), rng.random_range(0..=max_dist / 2), sub(rng, budget)),
    }
}

pub fn random_formula(rng: &mut ChaCha8Rng, depth: usize, budget: usize, dims: usize, dialect: Dialect) -> Formula {
    let spatial = dialect == Dialect::Strel;
    let text = formula_text(rng, depth, budget, dims, spatial, 8);
    parse(&text, dialect).unwrap_or_else(|e| panic!("generated formula {text:?} failed to parse: {e}"))
}

pub fn random_trajectory(rng: &mut ChaCha8Rng, len: usize, agents: usize, dims: usize) -> Trajectory {
    Trajectory::from_fn(0, len, agents, dims, |_, _, _| grid_value(rng)).unwrap()
}

/// Explicit per-time graphs with integer weights in `1..=max_w`; each pair
/// is connected with probability `p`.
pub fn random_weights(rng: &mut ChaCha8Rng, len: usize, agents: usize, p: f64, max_w: u32) -> WeightSpec {
    let matrices = (0..len)
        .map(|_| {
            let mut m = vec![POS; agents * agents];
            for a in 0..agents {
                for b in a + 1..agents {
                    if rng.random_bool(p) {
                        let w = ExtReal::new(rng.random_range(1..=max_w) as f64);
                        m[a * agents + b] = w;
                        m[b * agents + a] = w;
                    }
                }
            }
            m
        })
        .collect();
    WeightSpec::Explicit { matrices }
}

/// A random STL instance: formula, trajectory long enough for `τ0 = 0`.
pub fn stl_instance(rng: &mut ChaCha8Rng, max_len: usize, max_dims: usize) -> (Formula, Trajectory) {
    let dims = rng.random_range(1..=max_dims);
    let f = random_formula(rng, 3, max_len - 1, dims, Dialect::Stl);
    let len = formula_length(&f) + 1;
    (f, random_trajectory(rng, len, 1, dims))
}

pub struct StrelInstance {
    pub f: Formula,
    pub x: Trajectory,
    pub w: WeightSpec,
    pub agent: usize,
}

pub fn strel_instance(rng: &mut ChaCha8Rng, max_len: usize, max_agents: usize, depth: usize) -> StrelInstance {
    let agents = rng.random_range(1..=max_agents);
    let dims = rng.random_range(1..=2);
    let f = random_formula(rng, depth, max_len - 1, dims, Dialect::Strel);
    let len = formula_length(&f) + 1;
    let x = random_trajectory(rng, len, agents, dims);
    let p = rng.random_range(0.2..0.9);
    let w = random_weights(rng, len, agents, p, 3);
    StrelInstance { f, x, w, agent: rng.random_range(0..agents) }
}

/// Direct robust semantics of an STL formula at time `tau`.
pub fn stl_oracle(f: &Formula, x: &Trajectory, tau: usize) -> ExtReal {
    use Formula::*;
    match f {
        True => POS,
        False => NEG,
        Pred(p) => ExtReal::new(p.h(x.flat(tau))),
        Not(a) => -stl_oracle(a, x, tau),
        And(a, b) => stl_oracle(a, x, tau).min(stl_oracle(b, x, tau)),
        Or(a, b) => stl_oracle(a, x, tau).max(stl_oracle(b, x, tau)),
        Eventually(i, a) => ExtReal::sup((tau + i.lo..=tau + i.hi).map(|u| stl_oracle(a, x, u))),
        Always(i, a) => ExtReal::inf((tau + i.lo..=tau + i.hi).map(|u| stl_oracle(a, x, u))),
        Until(i, a, b) => ExtReal::sup((tau + i.lo..=tau + i.hi).map(|u| {
            let guard = ExtReal::inf((tau + 1..u).map(|v| stl_oracle(a, x, v)));
            stl_oracle(b, x, u).min(guard)
        })),
        _ => panic!("spatial operator in an STL formula"),
    }
}

/// Weights and all-pairs min distances at one time.
pub struct Snapshot {
    pub n: usize,
    pub w: Vec<Option<f64>>,
    pub dist: Vec<f64>,
}

impl Snapshot {
    pub fn new(spec: &WeightSpec, tau: usize, n: usize) -> Snapshot {
        let WeightSpec::Explicit { matrices } = spec else { panic!("oracle needs explicit weights") };
        let m = &matrices[tau];
        let w: Vec<Option<f64>> = (0..n * n).map(|k| if k / n != k % n && m[k].is_finite() { Some(m[k].value()) } else { None }).collect();
        let mut dist: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { w[k].unwrap_or(f64::INFINITY) }).collect();
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = dist[i * n + k] + dist[k * n + j];
                    if via < dist[i * n + j] {
                        dist[i * n + j] = via;
                    }
                }
            }
        }
        Snapshot { n, w, dist }
    }

    fn neighbors(&self, l: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n).filter_map(move |m| self.w[l * self.n + m].map(|w| (m, w)))
    }
}

/// Best value over walks from `l`: `min(s2(target), s1 of every earlier
/// agent)` with the target's accumulated distance in `d`. Walks with
/// distance beyond `cap` are not explored.
fn reach_walks(g: &Snapshot, d: DistInterval, s1: &[ExtReal], s2: &[ExtReal], l: usize, cap: f64) -> ExtReal {
    #[allow(clippy::too_many_arguments)]
    fn go(
        g: &Snapshot,
        d: DistInterval,
        s1: &[ExtReal],
        s2: &[ExtReal],
        node: usize,
        dist: f64,
        cap: f64,
        memo: &mut HashMap<(usize, u64), ExtReal>,
    ) -> ExtReal {
        if let Some(v) = memo.get(&(node, dist.to_bits())) {
            return *v;
        }
        let here = if d.contains(dist) { s2[node] } else { NEG };
        let mut onward = NEG;
        for (m, w) in g.neighbors(node) {
            if dist + w <= cap {
                onward = onward.max(go(g, d, s1, s2, m, dist + w, cap, memo));
            }
        }
        let v = here.max(s1[node].min(onward));
        memo.insert((node, dist.to_bits()), v);
        v
    }
    go(g, d, s1, s2, l, 0.0, cap, &mut HashMap::new())
}

/// Largest bottleneck `min s1` over simple paths from `from` to each agent.
fn widest_paths(g: &Snapshot, s1: &[ExtReal], from: usize) -> Vec<ExtReal> {
    fn dfs(g: &Snapshot, s1: &[ExtReal], node: usize, bottleneck: ExtReal, seen: &mut Vec<bool>, best: &mut Vec<ExtReal>) {
        best[node] = best[node].max(bottleneck);
        for (m, _) in g.neighbors(node) {
            if !seen[m] {
                seen[m] = true;
                dfs(g, s1, m, bottleneck.min(s1[m]), seen, best);
                seen[m] = false;
            }
        }
    }
    let mut best = vec![NEG; g.n];
    let mut seen = vec![false; g.n];
    seen[from] = true;
    dfs(g, s1, from, s1[from], &mut seen, &mut best);
    best
}

/// Direct robust semantics of a STREL formula at `(tau, l)`.
pub fn strel_oracle(f: &Formula, x: &Trajectory, w: &WeightSpec, tau: usize, l: usize) -> ExtReal {
    use Formula::*;
    let n = x.agents();
    let all = |g: &Formula, t: usize| -> Vec<ExtReal> { (0..n).map(|m| strel_oracle(g, x, w, t, m)).collect() };
    match f {
        True => POS,
        False => NEG,
        Pred(p) => ExtReal::new(p.h(x.state(tau, l))),
        Not(a) => -strel_oracle(a, x, w, tau, l),
        And(a, b) => strel_oracle(a, x, w, tau, l).min(strel_oracle(b, x, w, tau, l)),
        Or(a, b) => strel_oracle(a, x, w, tau, l).max(strel_oracle(b, x, w, tau, l)),
        Eventually(i, a) => ExtReal::sup((tau + i.lo..=tau + i.hi).map(|u| strel_oracle(a, x, w, u, l))),
        Always(i, a) => ExtReal::inf((tau + i.lo..=tau + i.hi).map(|u| strel_oracle(a, x, w, u, l))),
        Until(i, a, b) => ExtReal::sup((tau + i.lo..=tau + i.hi).map(|u| {
            let guard = ExtReal::inf((tau + 1..u).map(|v| strel_oracle(a, x, w, v, l)));
            strel_oracle(b, x, w, u, l).min(guard)
        })),
        Reach(d, a, b) => reach_value(&Snapshot::new(w, tau, n), *d, &all(a, tau), &all(b, tau), l),
        Somewhere(d, a) => reach_value(&Snapshot::new(w, tau, n), *d, &vec![POS; n], &all(a, tau), l),
        Everywhere(d, a) => {
            let neg: Vec<ExtReal> = all(a, tau).into_iter().map(|v| -v).collect();
            -reach_value(&Snapshot::new(w, tau, n), *d, &vec![POS; n], &neg, l)
        }
        Escape(d, a) => escape_value(&Snapshot::new(w, tau, n), *d, &all(a, tau), l),
        Surround(d, a, b) => {
            // ψ1 ∧ ¬(ψ1 R[0,d] ¬(ψ1 ∨ ψ2)) ∧ ¬(E[d,∞] ψ1)
            let g = Snapshot::new(w, tau, n);
            let s1 = all(a, tau);
            let s2 = all(b, tau);
            let outside: Vec<ExtReal> = s1.iter().zip(&s2).map(|(p, q)| -((*p).max(*q))).collect();
            let leak = reach_value(&g, DistInterval::new(0.0, *d), &s1, &outside, l);
            let far = escape_value(&g, DistInterval::new(*d, f64::INFINITY), &s1, l);
            s1[l].min(-leak).min(-far)
        }
    }
}

fn reach_value(g: &Snapshot, d: DistInterval, s1: &[ExtReal], s2: &[ExtReal], l: usize) -> ExtReal {
    // Integer weights ≥ 1: once past d1 a simple path suffices, so walks
    // longer than d1 + n·w_max never help.
    let wmax = g.w.iter().flatten().copied().fold(0.0, f64::max);
    let cap = if d.hi.is_finite() { d.hi } else { d.lo + g.n as f64 * wmax };
    reach_walks(g, d, s1, s2, l, cap)
}

fn escape_value(g: &Snapshot, d: DistInterval, s1: &[ExtReal], l: usize) -> ExtReal {
    let best = widest_paths(g, s1, l);
    ExtReal::sup((0..g.n).filter(|&m| {
        let dist = g.dist[l * g.n + m];
        dist.is_finite() && d.contains(dist)
    })
    .map(|m| best[m]))
}
