//! Synthetic systems: a noisy reference signal and a small point-mass swarm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::semantics::Trajectory;

/// `x_c(τ) = offset + amplitude · cos(π τ / period)` for `τ = 0..len`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCurve {
    pub offset: f64,
    pub amplitude: f64,
    pub period: f64,
    pub len: usize,
}

impl Default for ReferenceCurve {
    fn default() -> Self {
        ReferenceCurve { offset: 75.0, amplitude: 25.0, period: 210.0, len: 106 }
    }
}

impl ReferenceCurve {
    pub fn values(&self) -> Vec<f64> {
        (0..self.len).map(|t| self.offset + self.amplitude * (std::f64::consts::PI * t as f64 / self.period).cos()).collect()
    }
}

/// `count` trajectories with independent `N(base(τ), σ²)` values at every
/// time. Trial ids run from `first_id`.
pub fn generate_noisy_reference(base: &[f64], sigma: f64, count: usize, seed: u64, first_id: usize) -> Result<Vec<Trajectory>, HarnessError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(HarnessError::Config(format!("sigma must be positive, got {sigma}")));
    }
    if base.is_empty() {
        return Err(HarnessError::Config("empty base curve".into()));
    }
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let v: Vec<f64> = base.iter().map(|b| b + noise.sample(&mut rng)).collect();
            Ok(Trajectory::from_scalar(first_id + i, &v)?)
        })
        .collect()
}

/// Parameters of the point-mass swarm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwarmParams {
    pub agents: usize,
    /// Speed cap, reached when flying straight at the goal.
    pub speed: f64,
    pub start: [f64; 3],
    /// Side of the cube the start positions are drawn from.
    pub start_spread: f64,
    pub goal: [f64; 3],
    /// Obstacle centres in the horizontal plane.
    pub obstacles: Vec<[f64; 2]>,
    /// Obstacles repel within this horizontal distance.
    pub obstacle_range: f64,
    pub obstacle_gain: f64,
    /// Agents closer than this push each other apart.
    pub separation: f64,
    pub separation_gain: f64,
    pub cohesion_gain: f64,
    /// Weight of the previous velocity in the velocity update.
    pub inertia: f64,
    /// Standard deviation of the per-axis actuation noise.
    pub noise: f64,
    /// Number of time steps, so trajectories have `steps + 1` states.
    pub steps: usize,
}

impl Default for SwarmParams {
    fn default() -> Self {
        SwarmParams {
            agents: 5,
            speed: 6.0,
            start: [-10.0, 150.0, 25.0],
            start_spread: 20.0,
            goal: [700.0, 160.0, 30.0],
            obstacles: vec![[150.0, 110.0], [250.0, 210.0], [350.0, 112.0], [450.0, 208.0]],
            obstacle_range: 40.0,
            obstacle_gain: 0.35,
            separation: 12.0,
            separation_gain: 0.5,
            cohesion_gain: 0.02,
            inertia: 0.5,
            noise: 1.5,
            steps: 120,
        }
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn scale(a: [f64; 3], k: f64) -> [f64; 3] {
    [a[0] * k, a[1] * k, a[2] * k]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn cap(v: [f64; 3], max: f64) -> [f64; 3] {
    let n = norm(v);
    if n > max {
        scale(v, max / n)
    } else {
        v
    }
}

/// Simulates `count` swarms. Each step every agent blends its velocity with
/// a desired one made of goal attraction at the speed cap, separation,
/// cohesion, horizontal obstacle repulsion and Gaussian noise.
pub fn generate_swarm_lite(p: &SwarmParams, count: usize, seed: u64, first_id: usize) -> Result<Vec<Trajectory>, HarnessError> {
    if p.agents == 0 {
        return Err(HarnessError::Config("swarm needs at least one agent".into()));
    }
    if p.speed.is_nan() || p.speed <= 0.0 || p.noise.is_nan() || p.noise < 0.0 || !(0.0..1.0).contains(&p.inertia) {
        return Err(HarnessError::Config("invalid swarm parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, p.noise).expect("valid noise");
    let l = p.agents;
    let mut out = Vec::with_capacity(count);
    for trial in 0..count {
        let mut pos: Vec<[f64; 3]> = (0..l)
            .map(|_| {
                let u: [f64; 3] = [rng.random(), rng.random(), rng.random()];
                add(p.start, scale(u, p.start_spread))
            })
            .collect();
        let mut vel: Vec<[f64; 3]> = pos
            .iter()
            .map(|&x| {
                let g = sub(p.goal, x);
                scale(g, p.speed / norm(g).max(1e-9))
            })
            .collect();
        let mut data = Vec::with_capacity((p.steps + 1) * l * 3);
        for x in &pos {
            data.extend_from_slice(x);
        }
        for _ in 0..p.steps {
            let centroid = scale(pos.iter().fold([0.0; 3], |a, &b| add(a, b)), 1.0 / l as f64);
            let mut next = vel.clone();
            for i in 0..l {
                let x = pos[i];
                let g = sub(p.goal, x);
                let gd = norm(g);
                let mut want = scale(g, p.speed.min(gd) / gd.max(1e-9));
                for (j, &y) in pos.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let d = sub(x, y);
                    let n = norm(d);
                    if n < p.separation {
                        want = add(want, scale(d, p.separation_gain * (p.separation - n) / n.max(1e-9)));
                    }
                }
                want = add(want, scale(sub(centroid, x), p.cohesion_gain));
                for o in &p.obstacles {
                    let d = [x[0] - o[0], x[1] - o[1], 0.0];
                    let n = norm(d);
                    if n < p.obstacle_range {
                        want = add(want, scale(d, p.obstacle_gain * (p.obstacle_range - n) / n.max(1e-9)));
                    }
                }
                if p.noise > 0.0 {
                    want = add(want, [noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)]);
                }
                next[i] = cap(add(scale(vel[i], p.inertia), scale(want, 1.0 - p.inertia)), p.speed);
            }
            vel = next;
            for i in 0..l {
                pos[i] = add(pos[i], vel[i]);
                data.extend_from_slice(&pos[i]);
            }
        }
        out.push(Trajectory::new(first_id + trial, p.steps + 1, l, 3, data)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_curve_shape() {
        let v = ReferenceCurve::default().values();
        assert_eq!(v.len(), 106);
        assert_eq!(v[0], 100.0);
        assert!((v[105] - 75.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_reference_moments() {
        let base = ReferenceCurve::default().values();
        let xs = generate_noisy_reference(&base, 3.0, 2000, 9, 0).unwrap();
        for tau in [0, 50, 105] {
            let v: Vec<f64> = xs.iter().map(|x| x.flat(tau)[0]).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
            assert!((var - 9.0).abs() < 0.9, "{var}");
            assert!((m - base[tau]).abs() < 0.3);
        }
        assert_eq!(xs[7].id(), 7);
        let small = generate_noisy_reference(&base, 1e-9, 1, 1, 0).unwrap();
        assert!(small[0].data().iter().zip(&base).all(|(a, b)| (a - b).abs() < 6e-9));
        assert!(generate_noisy_reference(&base, 0.0, 1, 1, 0).is_err());
    }

    #[test]
    fn lone_agent_flies_straight() {
        let p = SwarmParams { agents: 1, obstacles: vec![], noise: 0.0, steps: 30, ..SwarmParams::default() };
        let x = generate_swarm_lite(&p, 1, 3, 0).unwrap().remove(0);
        let s0 = x.state(0, 0).to_vec();
        let dir = sub(p.goal, [s0[0], s0[1], s0[2]]);
        let dir = scale(dir, 1.0 / norm(dir));
        for tau in 1..=30 {
            let s = x.state(tau, 0);
            let step = sub([s[0], s[1], s[2]], [s0[0], s0[1], s0[2]]);
            let expect = scale(dir, 6.0 * tau as f64);
            assert!(norm(sub(step, expect)) < 1e-9);
        }
    }

    #[test]
    fn agents_never_collide() {
        let p = SwarmParams::default();
        let xs = generate_swarm_lite(&p, 100, 11, 0).unwrap();
        let mut min = f64::INFINITY;
        for x in &xs {
            for tau in 0..x.len() {
                for a in 0..p.agents {
                    for b in a + 1..p.agents {
                        let (u, v) = (x.state(tau, a), x.state(tau, b));
                        min = min.min(norm([u[0] - v[0], u[1] - v[1], u[2] - v[2]]));
                    }
                }
            }
        }
        assert!(min > 0.0);
    }

    #[test]
    fn determinism() {
        let p = SwarmParams { agents: 3, ..SwarmParams::default() };
        assert_eq!(generate_swarm_lite(&p, 2, 5, 0).unwrap(), generate_swarm_lite(&p, 2, 5, 0).unwrap());
    }
}
