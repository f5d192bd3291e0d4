//! CSV datasets and deterministic splits.
//!
//! Trajectories are stored long-form as `trial,time,agent,x0,…,x{n-1}` with
//! 1-based agents. Explicit weights use `trial,time,agent_a,agent_b,weight`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::semantics::{Trajectory, WeightSpec};
use crate::ExtReal;

fn malformed(line: u64, msg: impl Into<String>) -> HarnessError {
    HarnessError::Malformed { line, msg: msg.into() }
}

fn position(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse_usize(rec: &csv::StringRecord, i: usize, what: &str) -> Result<usize, HarnessError> {
    let s = rec.get(i).unwrap_or("").trim();
    s.parse().map_err(|_| malformed(position(rec), format!("bad {what} {s:?}")))
}

/// Reads trajectories whose times start at `first_time`. Each trial must
/// have contiguous times, the same agents `1..=L` at every time and no
/// duplicate `(trial, time, agent)` rows. Trials are returned by id.
pub fn read_trajectories_from<R: Read>(reader: R, first_time: usize) -> Result<Vec<Trajectory>, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let expect = ["trial", "time", "agent"];
    if header.len() < 4 || header.iter().zip(expect).any(|(h, e)| h != e) {
        return Err(malformed(1, "header must be trial,time,agent,x0,..."));
    }
    let dims = header.len() - 3;
    for (k, h) in header.iter().skip(3).enumerate() {
        if h != format!("x{k}") {
            return Err(malformed(1, format!("expected column x{k}, found {h:?}")));
        }
    }
    // trial → time → agent → state
    let mut rows: BTreeMap<usize, BTreeMap<usize, BTreeMap<usize, Vec<f64>>>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = position(&rec);
        if rec.len() != dims + 3 {
            return Err(malformed(line, format!("expected {} fields, found {}", dims + 3, rec.len())));
        }
        let trial = parse_usize(&rec, 0, "trial")?;
        let time = parse_usize(&rec, 1, "time")?;
        let agent = parse_usize(&rec, 2, "agent")?;
        if agent == 0 {
            return Err(malformed(line, "agents are numbered from 1"));
        }
        if time < first_time {
            return Err(malformed(line, format!("time {time} precedes the first time {first_time}")));
        }
        let state = (3..rec.len())
            .map(|i| {
                let s = &rec[i];
                s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| malformed(line, format!("bad value {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let slot = rows.entry(trial).or_default().entry(time).or_default();
        if slot.insert(agent, state).is_some() {
            return Err(HarnessError::Duplicate { trial, time, agent });
        }
    }
    let mut out = Vec::with_capacity(rows.len());
    for (trial, times) in rows {
        let agents = times.values().next().map_or(0, |a| a.len());
        let mut data = Vec::with_capacity(times.len() * agents * dims);
        for (k, (&time, by_agent)) in times.iter().enumerate() {
            if time != first_time + k {
                return Err(HarnessError::NonContiguous { trial, expected: first_time + k, found: time });
            }
            if by_agent.len() != agents || by_agent.keys().copied().ne(1..=agents) {
                return Err(HarnessError::Agents { trial, time, agents });
            }
            for state in by_agent.values() {
                data.extend_from_slice(state);
            }
        }
        out.push(Trajectory::new(trial, times.len(), agents, dims, data)?);
    }
    Ok(out)
}

pub fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>, HarnessError> {
    read_trajectories_from(std::fs::File::open(path)?, 0)
}

/// Writes trajectories with times starting at `first_time`.
pub fn write_trajectories_to<W: Write>(writer: W, xs: &[Trajectory], first_time: usize) -> Result<(), HarnessError> {
    let Some(first) = xs.first() else {
        return Err(HarnessError::Config("no trajectories to write".into()));
    };
    let dims = first.dims();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["trial".to_string(), "time".into(), "agent".into()];
    header.extend((0..dims).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for x in xs {
        if x.dims() != dims {
            return Err(HarnessError::Config(format!("trajectory {} has {} dimensions, expected {dims}", x.id(), x.dims())));
        }
        for tau in 0..x.len() {
            for a in 0..x.agents() {
                let mut rec = vec![x.id().to_string(), (first_time + tau).to_string(), (a + 1).to_string()];
                rec.extend(x.state(tau, a).iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_trajectories(path: &Path, xs: &[Trajectory]) -> Result<(), HarnessError> {
    write_trajectories_to(std::fs::File::create(path)?, xs, 0)
}

/// Reads external predictions for times `t+1..=t+H`, re-indexed from 0 and
/// keyed by trial id.
pub fn load_predictions(path: &Path, t: usize) -> Result<Vec<Trajectory>, HarnessError> {
    read_trajectories_from(std::fs::File::open(path)?, t + 1)
}

/// Reads per-trial explicit weight matrices. Times must be contiguous from
/// 0; missing pairs have weight `+∞`, the diagonal is ignored and each
/// listed pair is mirrored. Listing a pair in both orders with different
/// weights is an error.
pub fn read_weights_from<R: Read>(reader: R, agents: usize) -> Result<HashMap<usize, WeightSpec>, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(["trial", "time", "agent_a", "agent_b", "weight"]) {
        return Err(malformed(1, "header must be trial,time,agent_a,agent_b,weight"));
    }
    let mut rows: BTreeMap<usize, BTreeMap<usize, Vec<ExtReal>>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = position(&rec);
        let trial = parse_usize(&rec, 0, "trial")?;
        let time = parse_usize(&rec, 1, "time")?;
        let a = parse_usize(&rec, 2, "agent_a")?;
        let b = parse_usize(&rec, 3, "agent_b")?;
        if a == 0 || b == 0 || a > agents || b > agents {
            return Err(malformed(line, format!("agent outside 1..={agents}")));
        }
        let w: ExtReal = rec.get(4).unwrap_or("").parse().map_err(|e: String| malformed(line, e))?;
        if w < ExtReal::ZERO {
            return Err(malformed(line, "negative weight"));
        }
        let m = rows.entry(trial).or_default().entry(time).or_insert_with(|| vec![ExtReal::INFINITY; agents * agents]);
        let (i, j) = (a - 1, b - 1);
        if i == j {
            continue;
        }
        let old = m[i * agents + j];
        if !old.is_pos_inf() && old != w {
            return Err(malformed(line, format!("conflicting weights for agents {a} and {b}")));
        }
        m[i * agents + j] = w;
        m[j * agents + i] = w;
    }
    let mut out = HashMap::with_capacity(rows.len());
    for (trial, times) in rows {
        for (k, &time) in times.keys().enumerate() {
            if time != k {
                return Err(HarnessError::NonContiguous { trial, expected: k, found: time });
            }
        }
        out.insert(trial, WeightSpec::Explicit { matrices: times.into_values().collect() });
    }
    Ok(out)
}

pub fn load_weights(path: &Path, agents: usize) -> Result<HashMap<usize, WeightSpec>, HarnessError> {
    read_weights_from(std::fs::File::open(path)?, agents)
}

/// Split sizes of the calibration-distribution pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub alpha: usize,
    pub calibration: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.alpha + self.calibration
    }
}

/// Pairwise-disjoint trial id lists.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub alpha: Vec<usize>,
    pub calibration: Vec<usize>,
}

/// Shuffles `ids` with `seed` and cuts consecutive chunks of the requested
/// sizes. Each list is returned sorted.
pub fn split_ids(ids: &[usize], sizes: SplitSizes, seed: u64) -> Result<Splits, HarnessError> {
    let unique: BTreeSet<usize> = ids.iter().copied().collect();
    if unique.len() != ids.len() {
        return Err(HarnessError::Config("duplicate trial ids".into()));
    }
    if sizes.total() > ids.len() {
        return Err(HarnessError::Config(format!("splits need {} trajectories, pool has {}", sizes.total(), ids.len())));
    }
    let mut v: Vec<usize> = unique.into_iter().collect();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut take = |n: usize| {
        let mut part: Vec<usize> = v.drain(..n).collect();
        part.sort_unstable();
        part
    };
    Ok(Splits { train: take(sizes.train), alpha: take(sizes.alpha), calibration: take(sizes.calibration) })
}

/// Trajectories with the given ids, in id-list order.
pub fn select<'a>(xs: &'a [Trajectory], ids: &[usize]) -> Result<Vec<&'a Trajectory>, HarnessError> {
    let by_id: HashMap<usize, &Trajectory> = xs.iter().map(|x| (x.id(), x)).collect();
    ids.iter().map(|id| by_id.get(id).copied().ok_or(HarnessError::MissingTrial(*id))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Trajectory> {
        vec![
            Trajectory::from_fn(3, 4, 2, 2, |t, l, k| t as f64 * 0.1 + l as f64 - k as f64 / 3.0).unwrap(),
            Trajectory::from_fn(7, 4, 2, 2, |t, l, k| -(t as f64) + 1e-17 * l as f64 + k as f64).unwrap(),
        ]
    }

    #[test]
    fn round_trip() {
        let xs = sample();
        let mut buf = Vec::new();
        write_trajectories_to(&mut buf, &xs, 0).unwrap();
        assert_eq!(read_trajectories_from(buf.as_slice(), 0).unwrap(), xs);
        let mut buf = Vec::new();
        write_trajectories_to(&mut buf, &xs, 5).unwrap();
        assert_eq!(read_trajectories_from(buf.as_slice(), 5).unwrap(), xs);
    }

    #[test]
    fn malformed_inputs() {
        let bad = [
            "trial,time,agent,x0\n0,0,1,1\n0,2,1,1\n",
            "trial,time,agent,x0\n0,0,1,1\n0,0,1,2\n",
            "trial,time,agent,x0\n0,0,1,1\n0,0,2,1\n0,1,1,1\n",
            "trial,time,agent,x0\n0,0,0,1\n",
            "trial,time,agent,x0\n0,0,1,abc\n",
            "trial,time,agent,x0\n0,0,1\n",
            "trial,t,agent,x0\n0,0,1,1\n",
        ];
        for b in bad {
            assert!(read_trajectories_from(b.as_bytes(), 0).is_err(), "{b}");
        }
        assert!(matches!(
            read_trajectories_from("trial,time,agent,x0\n0,0,1,1\n0,0,1,2\n".as_bytes(), 0),
            Err(HarnessError::Duplicate { trial: 0, time: 0, agent: 1 })
        ));
    }

    #[test]
    fn weights_file() {
        let text = "trial,time,agent_a,agent_b,weight\n4,0,1,2,0.5\n4,0,2,3,inf\n4,1,1,3,2\n";
        let w = read_weights_from(text.as_bytes(), 3).unwrap();
        let WeightSpec::Explicit { matrices } = &w[&4] else { panic!() };
        assert_eq!(matrices.len(), 2);
        assert_eq!(matrices[0][1], ExtReal::new(0.5));
        assert_eq!(matrices[0][3], ExtReal::new(0.5));
        assert!(matrices[0][5].is_pos_inf());
        assert_eq!(matrices[1][6], ExtReal::new(2.0));
        assert!(read_weights_from("trial,time,agent_a,agent_b,weight\n0,0,1,2,-1\n".as_bytes(), 2).is_err());
        assert!(read_weights_from("trial,time,agent_a,agent_b,weight\n0,1,1,2,1\n".as_bytes(), 2).is_err());
    }

    #[test]
    fn splits_are_disjoint_and_sized() {
        let ids: Vec<usize> = (100..200).collect();
        let sizes = SplitSizes { train: 20, alpha: 30, calibration: 40 };
        let s = split_ids(&ids, sizes, 1).unwrap();
        assert_eq!((s.train.len(), s.alpha.len(), s.calibration.len()), (20, 30, 40));
        let all: BTreeSet<usize> = s.train.iter().chain(&s.alpha).chain(&s.calibration).copied().collect();
        assert_eq!(all.len(), 90);
        assert_eq!(s, split_ids(&ids, sizes, 1).unwrap());
        assert!(split_ids(&ids, SplitSizes { train: 60, alpha: 60, calibration: 0 }, 1).is_err());
    }
}
