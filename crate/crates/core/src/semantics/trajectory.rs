use super::SemanticsError;

/// Discrete-time multi-agent trajectory, stored as `[τ][agent][dim]`.
///
/// The STL view of a trajectory is the flattened state
/// `X_τ = (X_τ[0], …, X_τ[L−1])` of length `agents · dims`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    id: usize,
    len: usize,
    agents: usize,
    dims: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn new(id: usize, len: usize, agents: usize, dims: usize, data: Vec<f64>) -> Result<Self, SemanticsError> {
        if len == 0 || agents == 0 || dims == 0 {
            return Err(SemanticsError::InvalidTrajectory("empty dimension".into()));
        }
        if data.len() != len * agents * dims {
            return Err(SemanticsError::InvalidTrajectory(format!(
                "expected {} values, got {}",
                len * agents * dims,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(SemanticsError::InvalidTrajectory(format!("non-finite entry at flat index {i}")));
        }
        Ok(Trajectory { id, len, agents, dims, data })
    }

    /// Single-agent trajectory with one state component per time.
    pub fn from_scalar(id: usize, values: &[f64]) -> Result<Self, SemanticsError> {
        Self::new(id, values.len(), 1, 1, values.to_vec())
    }

    /// Single-agent trajectory from per-time state vectors.
    pub fn from_states(id: usize, states: &[Vec<f64>]) -> Result<Self, SemanticsError> {
        let dims = states.first().map_or(0, Vec::len);
        if states.iter().any(|s| s.len() != dims) {
            return Err(SemanticsError::InvalidTrajectory("ragged states".into()));
        }
        Self::new(id, states.len(), 1, dims, states.concat())
    }

    pub fn from_fn(
        id: usize,
        len: usize,
        agents: usize,
        dims: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self, SemanticsError> {
        let mut data = Vec::with_capacity(len * agents * dims);
        for t in 0..len {
            for l in 0..agents {
                for k in 0..dims {
                    data.push(f(t, l, k));
                }
            }
        }
        Self::new(id, len, agents, dims, data)
    }

    pub fn id(&self) -> usize {
        self.id
    }
    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }
    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
    pub fn agents(&self) -> usize {
        self.agents
    }
    pub fn dims(&self) -> usize {
        self.dims
    }
    /// Length of the flattened STL state.
    pub fn flat_dim(&self) -> usize {
        self.agents * self.dims
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn state(&self, tau: usize, agent: usize) -> &[f64] {
        let start = (tau * self.agents + agent) * self.dims;
        &self.data[start..start + self.dims]
    }

    #[inline]
    pub fn flat(&self, tau: usize) -> &[f64] {
        let w = self.flat_dim();
        &self.data[tau * w..(tau + 1) * w]
    }

    /// Times `0..=t`.
    pub fn prefix(&self, t: usize) -> Result<Trajectory, SemanticsError> {
        if t >= self.len {
            return Err(SemanticsError::TooShort { needed: t + 1, len: self.len });
        }
        let w = self.flat_dim();
        Ok(Trajectory { data: self.data[..(t + 1) * w].to_vec(), len: t + 1, ..self.clone() })
    }

    /// Appends the states of `tail` after the last time of `self`.
    pub fn concat(&self, tail: &Trajectory) -> Result<Trajectory, SemanticsError> {
        if tail.agents != self.agents || tail.dims != self.dims {
            return Err(SemanticsError::InvalidTrajectory("shape mismatch in concat".into()));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&tail.data);
        Ok(Trajectory { id: self.id, len: self.len + tail.len, agents: self.agents, dims: self.dims, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_and_views() {
        let x = Trajectory::from_fn(7, 3, 2, 2, |t, l, k| (100 * t + 10 * l + k) as f64).unwrap();
        assert_eq!(x.state(2, 1), &[210.0, 211.0]);
        assert_eq!(x.flat(1), &[100.0, 101.0, 110.0, 111.0]);
        let p = x.prefix(1).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.concat(&x).unwrap().len(), 5);
        assert_eq!(p.id(), 7);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Trajectory::from_scalar(0, &[1.0, f64::NAN]).is_err());
        assert!(Trajectory::new(0, 2, 1, 1, vec![1.0]).is_err());
        assert!(Trajectory::from_scalar(0, &[1.0]).unwrap().prefix(1).is_err());
    }
}
