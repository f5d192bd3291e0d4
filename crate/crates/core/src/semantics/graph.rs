//! State-dependent agent graphs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{SemanticsError, Trajectory};
use crate::ExtReal;

/// How a connected pair is weighted, as a function of the Euclidean
/// distance between the two agents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightRule {
    Unit,
    Scaled { factor: f64 },
}

impl WeightRule {
    fn weight(self, dist: f64) -> f64 {
        match self {
            WeightRule::Unit => 1.0,
            WeightRule::Scaled { factor } => factor * dist,
        }
    }
}

/// Weight function `w(l1, l2, τ, X)`. Agents are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum WeightSpec {
    /// Connected when the Euclidean distance is at most `threshold`.
    Proximity {
        threshold: f64,
        rule: WeightRule,
        /// State components used as the position; all when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coords: Option<Vec<usize>>,
    },
    /// A fixed set of undirected edges.
    FixedAdjacency {
        edges: Vec<(usize, usize)>,
        rule: WeightRule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coords: Option<Vec<usize>>,
    },
    /// Row-major `L×L` weight matrices, one per time step.
    Explicit { matrices: Vec<Vec<ExtReal>> },
}

impl WeightSpec {
    /// Star topology around `hub`.
    pub fn star(hub: usize, agents: usize, rule: WeightRule) -> Self {
        let edges = (0..agents).filter(|&l| l != hub).map(|l| (hub, l)).collect();
        WeightSpec::FixedAdjacency { edges, rule, coords: None }
    }
}

/// The graph at one time step with its min-distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSnapshot {
    pub tau: usize,
    pub n: usize,
    weights: Vec<ExtReal>,
    dist: Vec<ExtReal>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl GraphSnapshot {
    /// Builds a snapshot from a row-major weight matrix; the diagonal is ignored.
    pub fn from_matrix(tau: usize, n: usize, matrix: &[ExtReal]) -> Result<Self, SemanticsError> {
        if matrix.len() != n * n {
            return Err(SemanticsError::InvalidWeights(format!(
                "expected {}x{} matrix at time {tau}, got {} entries",
                n,
                n,
                matrix.len()
            )));
        }
        let mut weights = vec![ExtReal::INFINITY; n * n];
        let mut adj = vec![Vec::new(); n];
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let w = matrix[a * n + b];
                if w < ExtReal::ZERO {
                    return Err(SemanticsError::NegativeWeight { tau, a, b, w: w.value() });
                }
                if w != matrix[b * n + a] {
                    return Err(SemanticsError::InvalidWeights(format!(
                        "asymmetric weight between agents {a} and {b} at time {tau}"
                    )));
                }
                weights[a * n + b] = w;
                if w.is_finite() {
                    adj[a].push((b, w.value()));
                }
            }
        }
        let dist = all_pairs_dijkstra(n, &adj);
        Ok(GraphSnapshot { tau, n, weights, dist, adj })
    }

    #[inline]
    pub fn weight(&self, a: usize, b: usize) -> ExtReal {
        self.weights[a * self.n + b]
    }

    /// Minimum route distance; `D[l,l] = 0` via the zero-hop route.
    #[inline]
    pub fn min_distance(&self, a: usize, b: usize) -> ExtReal {
        self.dist[a * self.n + b]
    }

    /// Finite-weight neighbours of `l` in increasing agent order.
    #[inline]
    pub fn neighbors(&self, l: usize) -> &[(usize, f64)] {
        &self.adj[l]
    }

    pub fn max_weight(&self) -> Option<f64> {
        self.adj.iter().flatten().map(|&(_, w)| w).reduce(f64::max)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }
}

fn all_pairs_dijkstra(n: usize, adj: &[Vec<(usize, f64)>]) -> Vec<ExtReal> {
    let mut dist = vec![ExtReal::INFINITY; n * n];
    for src in 0..n {
        let row = &mut dist[src * n..(src + 1) * n];
        row[src] = ExtReal::ZERO;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((ExtReal::ZERO, src)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if d > row[u] {
                continue;
            }
            for &(v, w) in &adj[u] {
                let nd = ExtReal::new(d.value() + w);
                if nd < row[v] {
                    row[v] = nd;
                    heap.push(Reverse((nd, v)));
                }
            }
        }
    }
    dist
}

fn position<'a>(x: &'a Trajectory, tau: usize, l: usize, coords: &Option<Vec<usize>>, buf: &'a mut Vec<f64>) -> &'a [f64] {
    let s = x.state(tau, l);
    match coords {
        None => s,
        Some(c) => {
            buf.clear();
            buf.extend(c.iter().map(|&i| s[i]));
            buf
        }
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Materialises `w(·,·,τ,X)` and its min-distance matrix.
pub fn graph_at(spec: &WeightSpec, x: &Trajectory, tau: usize) -> Result<GraphSnapshot, SemanticsError> {
    if tau >= x.len() {
        return Err(SemanticsError::TooShort { needed: tau + 1, len: x.len() });
    }
    let n = x.agents();
    let check_coords = |coords: &Option<Vec<usize>>| -> Result<(), SemanticsError> {
        if let Some(&bad) = coords.iter().flatten().find(|&&c| c >= x.dims()) {
            return Err(SemanticsError::VarOutOfRange { var: bad, dim: x.dims() });
        }
        Ok(())
    };
    let pair_dist = |a: usize, b: usize, coords: &Option<Vec<usize>>| {
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        euclid(position(x, tau, a, coords, &mut ba), position(x, tau, b, coords, &mut bb))
    };
    let mut m = vec![ExtReal::INFINITY; n * n];
    match spec {
        WeightSpec::Proximity { threshold, rule, coords } => {
            check_coords(coords)?;
            for a in 0..n {
                for b in a + 1..n {
                    let d = pair_dist(a, b, coords);
                    if d <= *threshold {
                        let w = ExtReal::new(rule.weight(d));
                        m[a * n + b] = w;
                        m[b * n + a] = w;
                    }
                }
            }
        }
        WeightSpec::FixedAdjacency { edges, rule, coords } => {
            check_coords(coords)?;
            for &(a, b) in edges {
                if a >= n || b >= n {
                    return Err(SemanticsError::AgentOutOfRange { agent: a.max(b), agents: n });
                }
                if a == b {
                    continue;
                }
                let w = ExtReal::new(rule.weight(pair_dist(a, b, coords)));
                m[a * n + b] = w;
                m[b * n + a] = w;
            }
        }
        WeightSpec::Explicit { matrices } => {
            let mat = matrices.get(tau).ok_or_else(|| {
                SemanticsError::InvalidWeights(format!("no weight matrix for time {tau}"))
            })?;
            return GraphSnapshot::from_matrix(tau, n, mat);
        }
    }
    GraphSnapshot::from_matrix(tau, n, &m)
}
