//! Robust reach and escape over one graph snapshot.
//!
//! Each function takes per-agent robustness vectors of the operands and
//! returns the per-agent robustness of the operator.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{GraphSnapshot, SemanticsError};
use crate::logic::DistInterval;
use crate::ExtReal;

/// Work budget for a single fixpoint; exceeding it is an internal error.
const WORK_CAP: usize = 50_000_000;

fn cap_error(op: &'static str) -> SemanticsError {
    SemanticsError::IterationCap(op)
}

/// `ψ' R[d1,d2] ψ''`.
pub fn reach(g: &GraphSnapshot, d: DistInterval, s1: &[ExtReal], s2: &[ExtReal]) -> Result<Vec<ExtReal>, SemanticsError> {
    if d.is_bounded() {
        bounded_reach(g, d.lo, d.hi, s1, s2)
    } else {
        unbounded_reach(g, d.lo, s1, s2)
    }
}

/// Layered propagation from targets back to route starts.
///
/// Entries at the same `(agent, distance)` are merged keeping the larger
/// value, and an entry is only re-expanded when it improves on every earlier
/// entry at that key. Propagation continues while the distance is `≤ d2`,
/// which only differs from stopping at `< d2` in the presence of zero-weight
/// edges.
pub fn bounded_reach(g: &GraphSnapshot, d1: f64, d2: f64, s1: &[ExtReal], s2: &[ExtReal]) -> Result<Vec<ExtReal>, SemanticsError> {
    let n = g.n;
    let mut s = if d1 == 0.0 { s2.to_vec() } else { vec![ExtReal::NEG_INFINITY; n] };
    let mut best: HashMap<(usize, u64), ExtReal> = HashMap::new();
    let mut q: Vec<(usize, ExtReal, f64)> = Vec::with_capacity(n);
    for (l, &v) in s2.iter().enumerate() {
        if v > ExtReal::NEG_INFINITY {
            best.insert((l, 0f64.to_bits()), v);
            q.push((l, v, 0.0));
        }
    }
    let mut work = 0usize;
    while !q.is_empty() {
        let mut next: BTreeMap<(usize, u64), ExtReal> = BTreeMap::new();
        for &(l, v, dist) in &q {
            for &(lp, w) in g.neighbors(l) {
                work += 1;
                if work > WORK_CAP {
                    return Err(cap_error("bounded reach"));
                }
                let vp = v.min(s1[lp]);
                let dp = dist + w;
                if d1 <= dp && dp <= d2 {
                    s[lp] = s[lp].max(vp);
                }
                if dp <= d2 && vp > ExtReal::NEG_INFINITY {
                    let key = (lp, dp.to_bits());
                    if best.get(&key).is_none_or(|b| vp > *b) {
                        best.insert(key, vp);
                        let e = next.entry(key).or_insert(vp);
                        *e = (*e).max(vp);
                    }
                }
            }
        }
        q = next.into_iter().map(|((l, bits), v)| (l, v, f64::from_bits(bits))).collect();
    }
    Ok(s)
}

/// Reach with `d2 = ∞`: a bounded pass to cross `d1`, then a fixpoint that
/// prepends arbitrary route prefixes.
pub fn unbounded_reach(g: &GraphSnapshot, d1: f64, s1: &[ExtReal], s2: &[ExtReal]) -> Result<Vec<ExtReal>, SemanticsError> {
    let n = g.n;
    let mut s = if d1 == 0.0 {
        s2.to_vec()
    } else {
        match g.max_weight() {
            Some(wmax) => bounded_reach(g, d1, d1 + wmax, s1, s2)?,
            None => return Ok(vec![ExtReal::NEG_INFINITY; n]),
        }
    };
    let mut t: BTreeSet<usize> = (0..n).collect();
    let mut work = 0usize;
    while !t.is_empty() {
        let mut tn = BTreeSet::new();
        for &l in &t {
            for &(lp, _) in g.neighbors(l) {
                work += 1;
                if work > WORK_CAP {
                    return Err(cap_error("unbounded reach"));
                }
                let v = s[l].min(s1[lp]).max(s[lp]);
                if v != s[lp] {
                    s[lp] = v;
                    tn.insert(lp);
                }
            }
        }
        t = tn;
    }
    Ok(s)
}

/// `E[d1,d2] ψ'`: best bottleneck walk to an agent whose min distance lies
/// in `[d1, d2]`.
pub fn escape(g: &GraphSnapshot, d: DistInterval, s1: &[ExtReal]) -> Result<Vec<ExtReal>, SemanticsError> {
    let n = g.n;
    let mut e = vec![ExtReal::NEG_INFINITY; n * n];
    let mut t: BTreeSet<(usize, usize)> = BTreeSet::new();
    for l in 0..n {
        e[l * n + l] = s1[l];
        t.insert((l, l));
    }
    let mut work = 0usize;
    while !t.is_empty() {
        let mut tn = BTreeSet::new();
        for &(l1, l2) in &t {
            for &(l1p, _) in g.neighbors(l1) {
                work += 1;
                if work > WORK_CAP {
                    return Err(cap_error("escape"));
                }
                let cur = e[l1p * n + l2];
                let v = cur.max(s1[l1p].min(e[l1 * n + l2]));
                if v != cur {
                    e[l1p * n + l2] = v;
                    tn.insert((l1p, l2));
                }
            }
        }
        t = tn;
    }
    Ok((0..n)
        .map(|l| {
            ExtReal::sup((0..n).filter(|&lp| {
                let dist = g.min_distance(l, lp);
                dist.is_finite() && d.contains(dist.value())
            })
            .map(|lp| e[l * n + lp]))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(v: f64) -> ExtReal {
        ExtReal::new(v)
    }

    /// Path 0 - 1 - 2 with unit weights.
    fn path3() -> GraphSnapshot {
        let i = ExtReal::INFINITY;
        let one = x(1.0);
        GraphSnapshot::from_matrix(0, 3, &[i, one, i, one, i, one, i, one, i]).unwrap()
    }

    #[test]
    fn somewhere_includes_self_at_zero() {
        let g = path3();
        let top = [ExtReal::INFINITY; 3];
        let s2 = [x(1.0), x(-5.0), x(-2.0)];
        let r = bounded_reach(&g, 0.0, 0.0, &top, &s2).unwrap();
        assert_eq!(r, s2.to_vec());
        let r = bounded_reach(&g, 0.0, 2.0, &top, &s2).unwrap();
        assert_eq!(r, vec![x(1.0), x(1.0), x(1.0)]);
    }

    #[test]
    fn bounded_reach_respects_path_guard() {
        let g = path3();
        let s1 = [x(3.0), x(0.5), x(4.0)];
        let s2 = [x(-1.0), x(-1.0), x(2.0)];
        // From 0: route 0,1,2 has d = 2, value min(s2[2], s1[0], s1[1]) = 0.5.
        let r = bounded_reach(&g, 2.0, 2.0, &s1, &s2).unwrap();
        assert_eq!(r[0], x(0.5));
        // From 2 with d in [2,2]: 2,1,0 (-1) or 2,1,2 (min(2, 4, 0.5)).
        assert_eq!(r[2], x(0.5));
        assert_eq!(r[1], ExtReal::NEG_INFINITY.max(x(-1.0).min(x(0.5))));
    }

    #[test]
    fn unbounded_matches_long_bounded() {
        let g = path3();
        let s1 = [x(3.0), x(0.5), x(4.0)];
        let s2 = [x(-1.0), x(-3.0), x(2.0)];
        for d1 in [0.0, 1.0, 2.0, 3.0] {
            let u = unbounded_reach(&g, d1, &s1, &s2).unwrap();
            let b = bounded_reach(&g, d1, 40.0, &s1, &s2).unwrap();
            assert_eq!(u, b, "d1 = {d1}");
        }
    }

    #[test]
    fn escape_with_true_is_infinite_on_connected_graph() {
        let g = path3();
        let top = [ExtReal::INFINITY; 3];
        let r = escape(&g, DistInterval::new(0.0, f64::INFINITY), &top).unwrap();
        assert!(r.iter().all(|v| v.is_pos_inf()));
        let r = escape(&g, DistInterval::new(2.0, 2.0), &[x(1.0), x(-1.0), x(2.0)]).unwrap();
        assert_eq!(r, vec![x(-1.0), ExtReal::NEG_INFINITY, x(-1.0)]);
    }

    #[test]
    fn isolated_agents() {
        let i = ExtReal::INFINITY;
        let g = GraphSnapshot::from_matrix(0, 2, &[i, i, i, i]).unwrap();
        let s = [x(1.0), x(2.0)];
        assert_eq!(unbounded_reach(&g, 1.0, &s, &s).unwrap(), vec![ExtReal::NEG_INFINITY; 2]);
        assert_eq!(unbounded_reach(&g, 0.0, &s, &s).unwrap(), s.to_vec());
        assert_eq!(escape(&g, DistInterval::new(0.0, 0.0), &s).unwrap(), s.to_vec());
    }

    #[test]
    fn zero_weight_cycle_terminates() {
        let i = ExtReal::INFINITY;
        let z = ExtReal::ZERO;
        let g = GraphSnapshot::from_matrix(0, 2, &[i, z, z, i]).unwrap();
        let r = bounded_reach(&g, 0.0, 1.0, &[x(1.0), x(2.0)], &[x(-1.0), x(5.0)]).unwrap();
        assert_eq!(r, vec![x(1.0), x(5.0)]);
    }
}
