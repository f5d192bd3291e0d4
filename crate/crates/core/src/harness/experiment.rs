//! The repeated coverage experiment.
//!
//! Datasets, predictions, true test robustness and α tables are computed
//! once. Each repetition then samples `K` calibration and `M` test
//! trajectories with its own RNG stream, calibrates every method with the
//! configured divergence and with `ε = 0`, and records coverage
//! `1[ρ(X) ≥ ρ*]` for every test trajectory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{load_predictions, load_trajectories, select, split_ids, SplitSizes, Splits};
use super::generators::{generate_noisy_reference, generate_swarm_lite, ReferenceCurve, SwarmParams};
use super::HarnessError;
use crate::conformal::DivergenceSpec;
use crate::logic::Dialect;
use crate::predictors::{ExternalPredictions, PredictedTrajectory, Predictor, PredictorKind, PredictorModel};
use crate::rprv::{
    artifact_from_scores, compute_alpha, scores, verify, AlphaTable, Family, Method, MonitorSetup, MonitorSpec, Pair,
    SplitIds,
};
use crate::semantics::{Trajectory, WeightRule, WeightSpec};
use crate::shift::{estimate_epsilon, ShiftEstimate, DEFAULT_GRID_POINTS};
use crate::ExtReal;

/// Where the trajectories come from. Synthetic systems draw the
/// calibration-distribution pool and the test pool from differently
/// parameterised generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SystemSpec {
    NoisyReference { curve: ReferenceCurve, sigma_train: f64, sigma_test: f64 },
    SwarmLite { params: SwarmParams, test_speed: f64 },
    /// Trajectory CSV files; trial ids must be unique across both.
    External { d0: PathBuf, test: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PredictorSpec {
    ConstantVelocity,
    Ar { order: usize },
    /// Predictions CSV for times `t+1..=t+H`, keyed by trial id.
    External { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EpsilonSpec {
    Fixed { value: f64 },
    /// Estimated with the shift module. With `pool > 0` a synthetic system
    /// draws dedicated pools of that size from both distributions;
    /// otherwise the calibration pool is compared with the test pool.
    Estimate { pool: usize, grid_points: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub monitor: MonitorSpec,
    pub methods: Vec<Family>,
    pub delta: f64,
    pub epsilon: EpsilonSpec,
    /// Divergence name understood by [`DivergenceSpec::from_name`].
    pub divergence: String,
    pub k: usize,
    pub m: usize,
    pub repetitions: usize,
    pub predictor: PredictorSpec,
    pub seed: u64,
    pub splits: SplitSizes,
    /// Size of the test pool the `M` test trajectories are drawn from;
    /// 0 takes every trajectory of an external test file.
    pub test_pool: usize,
    #[serde(default)]
    pub parallel: bool,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
}

fn default_bins() -> usize {
    20
}

impl ExperimentConfig {
    /// Scalar reference signal monitored with `G[0,105] (s[0] >= 60)` at
    /// `t = 100` by an AR(3) predictor.
    pub fn noisy_reference(sigma_train: f64, sigma_test: f64, epsilon: f64) -> Self {
        ExperimentConfig {
            system: SystemSpec::NoisyReference { curve: ReferenceCurve::default(), sigma_train, sigma_test },
            monitor: MonitorSpec::stl("G[0,105] (s[0] >= 60)", 0, 100),
            methods: Family::ALL.to_vec(),
            delta: 0.2,
            epsilon: EpsilonSpec::Fixed { value: epsilon },
            divergence: "tv".into(),
            k: 500,
            m: 100,
            repetitions: 50,
            predictor: PredictorSpec::Ar { order: 3 },
            seed: 2024,
            splits: SplitSizes { train: 500, alpha: 500, calibration: 4000 },
            test_pool: 2000,
            parallel: false,
            histogram_bins: default_bins(),
        }
    }

    /// `agents`-drone swarm monitored at agent 0 over a star around agent 1
    /// with weights `0.2‖·‖₂`, at `t = 50` by an AR(3) predictor; ε is
    /// estimated.
    pub fn swarm(agents: usize) -> Self {
        let params = SwarmParams { agents, ..SwarmParams::default() };
        let weights = WeightSpec::star(1.min(agents - 1), agents, WeightRule::Scaled { factor: 0.2 });
        let formula = swarm_formula(&params);
        ExperimentConfig {
            system: SystemSpec::SwarmLite { params, test_speed: 5.9 },
            monitor: MonitorSpec::strel(&formula, 0, 50, weights, agents, 0),
            methods: Family::ALL.to_vec(),
            delta: 0.2,
            epsilon: EpsilonSpec::Estimate { pool: 800, grid_points: DEFAULT_GRID_POINTS },
            divergence: "tv".into(),
            k: 500,
            m: 100,
            repetitions: 20,
            predictor: PredictorSpec::Ar { order: 3 },
            seed: 2024,
            splits: SplitSizes { train: 200, alpha: 200, calibration: 600 },
            test_pool: 500,
            parallel: false,
            histogram_bins: default_bins(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.repetitions == 0 {
            return bad("at least one repetition is required".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if self.k == 0 || self.k > self.splits.calibration {
            return bad(format!("K = {} must lie in 1..={}", self.k, self.splits.calibration));
        }
        if self.m == 0 || (self.test_pool > 0 && self.m > self.test_pool) {
            return bad(format!("M = {} exceeds the test pool {}", self.m, self.test_pool));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("δ = {} must lie in (0, 1)", self.delta));
        }
        if self.histogram_bins == 0 {
            return bad("histogram needs at least one bin".into());
        }
        if self.methods.iter().any(|&f| f != Family::Accurate) && self.splits.alpha == 0 {
            return bad("interpretable methods need a non-empty α split".into());
        }
        if let EpsilonSpec::Fixed { value } = self.epsilon {
            DivergenceSpec::from_name(&self.divergence, value)?;
        }
        Ok(())
    }
}

/// Safety, progress and a reach requirement for one drone flying among
/// the given obstacles.
pub fn swarm_formula(p: &SwarmParams) -> String {
    let centres: Vec<String> = p.obstacles.iter().map(|o| format!("({}, {})", o[0], o[1])).collect();
    let steps = p.steps;
    format!(
        "G[0,{steps}] (s[2] >= 10 and mindist_inf((s[0], s[1]), {{{}}}) >= 18.75) \
         and F[0,{steps}] (s[0] >= 600) and G[0,{steps}] (somewhere[0,6] (s[2] <= 50))",
        centres.join(", ")
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Robust,
    /// The same scores calibrated with `ε = 0`.
    Baseline,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Robust => "robust",
            Variant::Baseline => "baseline",
        }
    }
}

/// One verdict on one test trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub repetition: usize,
    pub method: Method,
    pub variant: Variant,
    pub trial: usize,
    pub rho_true: ExtReal,
    pub rho_star: ExtReal,
    pub covered: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub variant: Variant,
    pub epsilon: f64,
    /// Coverage ratio of each repetition.
    pub coverage: Vec<f64>,
    pub mean_coverage: f64,
    pub min_coverage: f64,
    pub se_coverage: f64,
    /// Counts of repetitions per equal-width coverage bin on `[0, 1]`.
    pub histogram: Vec<usize>,
    pub c_tilde: Vec<ExtReal>,
    pub infeasible_repetitions: usize,
    /// Mean of `ρ*` over every verdict; `-inf` when a repetition was infeasible.
    pub mean_rho_star: ExtReal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se_rho_star: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphMismatch {
    /// Test trajectories whose predicted graph differs from the true one at
    /// some future time.
    pub trials: usize,
    pub times: usize,
}

/// The deterministic part of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub h: usize,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<ShiftEstimate>,
    pub predictor: String,
    pub splits: Splits,
    pub test_ids: Vec<usize>,
    pub graph_mismatch: GraphMismatch,
    pub methods: Vec<MethodSummary>,
}

impl ExperimentSummary {
    pub fn get(&self, family: Family, variant: Variant) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method.family == family && m.variant == variant)
    }

    /// True when every robust calibration of every repetition was infeasible.
    pub fn all_infeasible(&self) -> bool {
        self.methods
            .iter()
            .filter(|m| m.variant == Variant::Robust)
            .all(|m| m.infeasible_repetitions == m.coverage.len())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: Method,
    /// α table computation, done once.
    pub alpha_seconds: f64,
    /// Mean per repetition of scoring `K` trajectories plus the quantile.
    pub offline_seconds: f64,
    /// Mean wall time of one robust verdict.
    pub online_seconds: f64,
}

/// Wall times; kept apart from the summary because they are not reproducible.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub data_seconds: f64,
    pub predictor_fit_seconds: f64,
    pub prediction_seconds: f64,
    pub shift_seconds: f64,
    pub methods: Vec<MethodTiming>,
    pub total_seconds: f64,
}

impl Timing {
    pub fn get(&self, family: Family) -> Option<&MethodTiming> {
        self.methods.iter().find(|m| m.method.family == family)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub summary: ExperimentSummary,
    /// Ordered by repetition, method, variant and test trial.
    pub rows: Vec<CoverageRow>,
    pub timing: Timing,
}

impl CoverageReport {
    /// `ρ*` values of one method, in row order, so two methods pair up.
    pub fn rho_stars(&self, family: Family, variant: Variant) -> Vec<ExtReal> {
        self.rows.iter().filter(|r| r.method.family == family && r.variant == variant).map(|r| r.rho_star).collect()
    }
}

/// Mean and standard error of the pairwise differences `a_i − b_i`.
pub fn paired_difference(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_se(&d)
}

/// Mean and standard error; the error is 0 for fewer than two values.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut h = vec![0; bins];
    for &v in values {
        let b = ((v * bins as f64).floor() as usize).min(bins - 1);
        h[b] += 1;
    }
    h
}

/// Independent seed for a named sub-task.
fn sub_seed(seed: u64, stream: u64) -> u64 {
    use rand::RngCore;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 << 32 | stream);
    rng.next_u64()
}

struct Data {
    d0: Vec<Trajectory>,
    test: Vec<Trajectory>,
    shift: Option<(Vec<Trajectory>, Vec<Trajectory>)>,
}

fn build_data(cfg: &ExperimentConfig) -> Result<Data, HarnessError> {
    let n0 = cfg.splits.total();
    let shift_pool = match cfg.epsilon {
        EpsilonSpec::Estimate { pool, .. } => pool,
        EpsilonSpec::Fixed { .. } => 0,
    };
    let ids = [n0, n0 + cfg.test_pool, n0 + cfg.test_pool + shift_pool];
    let seeds: Vec<u64> = (0..4).map(|i| sub_seed(cfg.seed, i)).collect();
    match &cfg.system {
        SystemSpec::NoisyReference { curve, sigma_train, sigma_test } => {
            let base = curve.values();
            let gen = |sigma, count, seed, first| generate_noisy_reference(&base, sigma, count, seed, first);
            let shift = if shift_pool > 0 {
                Some((gen(*sigma_train, shift_pool, seeds[2], ids[1])?, gen(*sigma_test, shift_pool, seeds[3], ids[2])?))
            } else {
                None
            };
            Ok(Data { d0: gen(*sigma_train, n0, seeds[0], 0)?, test: gen(*sigma_test, cfg.test_pool, seeds[1], ids[0])?, shift })
        }
        SystemSpec::SwarmLite { params, test_speed } => {
            let test_params = SwarmParams { speed: *test_speed, ..params.clone() };
            let shift = if shift_pool > 0 {
                Some((
                    generate_swarm_lite(params, shift_pool, seeds[2], ids[1])?,
                    generate_swarm_lite(&test_params, shift_pool, seeds[3], ids[2])?,
                ))
            } else {
                None
            };
            Ok(Data {
                d0: generate_swarm_lite(params, n0, seeds[0], 0)?,
                test: generate_swarm_lite(&test_params, cfg.test_pool, seeds[1], ids[0])?,
                shift,
            })
        }
        SystemSpec::External { d0, test } => {
            let d0 = load_trajectories(d0)?;
            let mut test = load_trajectories(test)?;
            if let Some(x) = test.iter().find(|x| d0.iter().any(|y| y.id() == x.id())) {
                return Err(HarnessError::Config(format!("trial {} appears in both datasets", x.id())));
            }
            if cfg.test_pool > 0 {
                if test.len() < cfg.test_pool {
                    return Err(HarnessError::Config(format!("test file has {} trials, need {}", test.len(), cfg.test_pool)));
                }
                test.truncate(cfg.test_pool);
            }
            Ok(Data { d0, test, shift: None })
        }
    }
}

fn predict_many(
    s: &MonitorSetup,
    predictor: &dyn Predictor,
    xs: &[&Trajectory],
    parallel: bool,
) -> Result<Vec<PredictedTrajectory>, HarnessError> {
    let one = |x: &&Trajectory| s.predict(predictor, x).map_err(HarnessError::from);
    if parallel {
        xs.par_iter().map(one).collect()
    } else {
        xs.iter().map(one).collect()
    }
}

fn pairs<'a>(xs: &[&'a Trajectory], ps: &'a [PredictedTrajectory]) -> Vec<Pair<'a>> {
    xs.iter().zip(ps).map(|(&truth, pred)| Pair { truth, pred }).collect()
}

/// Everything a repetition reads.
struct Shared<'a> {
    cfg: &'a ExperimentConfig,
    s: &'a MonitorSetup,
    div: DivergenceSpec,
    calib: Vec<Pair<'a>>,
    test: Vec<Pair<'a>>,
    test_rho: Vec<ExtReal>,
    alpha: BTreeMap<Family, Option<AlphaTable>>,
    alpha_ids: Vec<usize>,
}

struct MethodRun {
    c_robust: ExtReal,
    c_baseline: ExtReal,
    coverage: [f64; 2],
    offline: f64,
    online: f64,
}

struct RepResult {
    rows: Vec<CoverageRow>,
    methods: Vec<MethodRun>,
}

fn run_repetition(sh: &Shared, rep: usize) -> Result<RepResult, HarnessError> {
    let cfg = sh.cfg;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep as u64);
    let mut ci = rand::seq::index::sample(&mut rng, sh.calib.len(), cfg.k).into_vec();
    let mut ti = rand::seq::index::sample(&mut rng, sh.test.len(), cfg.m).into_vec();
    ci.sort_unstable();
    ti.sort_unstable();
    let calib: Vec<Pair> = ci.iter().map(|&i| sh.calib[i]).collect();
    let splits = SplitIds { alpha: vec![], calibration: calib.iter().map(|p| p.truth.id()).collect() };
    let baseline = sh.div.baseline();
    let mut rows = Vec::with_capacity(cfg.methods.len() * 2 * cfg.m);
    let mut methods = Vec::with_capacity(cfg.methods.len());
    for &family in &cfg.methods {
        let alpha = sh.alpha[&family].clone();
        let splits = SplitIds { alpha: if alpha.is_some() { sh.alpha_ids.clone() } else { vec![] }, ..splits.clone() };
        let start = Instant::now();
        let sc = scores(family, sh.s, alpha.as_ref(), &calib)?;
        let robust = artifact_from_scores(family, sh.s, alpha.clone(), &sc, cfg.delta, &sh.div, splits.clone())?;
        let offline = start.elapsed().as_secs_f64();
        let base = artifact_from_scores(family, sh.s, alpha, &sc, cfg.delta, &baseline, splits)?;
        let mut online = 0.0;
        let mut covered = [0usize; 2];
        for (v, art) in [(Variant::Robust, &robust), (Variant::Baseline, &base)] {
            for &i in &ti {
                let start = Instant::now();
                let verdict = verify(art, sh.s, sh.test[i].pred)?;
                if v == Variant::Robust {
                    online += start.elapsed().as_secs_f64();
                }
                let ok = sh.test_rho[i] >= verdict.rho_star;
                covered[v as usize] += usize::from(ok);
                rows.push(CoverageRow {
                    repetition: rep,
                    method: robust.method,
                    variant: v,
                    trial: sh.test[i].truth.id(),
                    rho_true: sh.test_rho[i],
                    rho_star: verdict.rho_star,
                    covered: ok,
                });
            }
        }
        methods.push(MethodRun {
            c_robust: robust.c_tilde,
            c_baseline: base.c_tilde,
            coverage: covered.map(|c| c as f64 / cfg.m as f64),
            offline,
            online: online / cfg.m as f64,
        });
    }
    Ok(RepResult { rows, methods })
}

/// Runs the full experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<CoverageReport, HarnessError> {
    cfg.validate()?;
    let total = Instant::now();
    let s = MonitorSetup::new(cfg.monitor.clone())?;
    if s.dialect() == Dialect::Strel && matches!(cfg.system, SystemSpec::NoisyReference { .. }) {
        return Err(HarnessError::Config("the noisy reference system is single-agent; use an STL monitor".into()));
    }
    let mut timing = Timing::default();

    let clock = Instant::now();
    let data = build_data(cfg)?;
    let ids: Vec<usize> = data.d0.iter().map(|x| x.id()).collect();
    let splits = split_ids(&ids, cfg.splits, sub_seed(cfg.seed, 10))?;
    let train: Vec<Trajectory> = select(&data.d0, &splits.train)?.into_iter().cloned().collect();
    let alpha_x = select(&data.d0, &splits.alpha)?;
    let calib_x = select(&data.d0, &splits.calibration)?;
    let test_x: Vec<&Trajectory> = data.test.iter().collect();
    if test_x.len() < cfg.m {
        return Err(HarnessError::Config(format!("M = {} exceeds the test pool {}", cfg.m, test_x.len())));
    }
    timing.data_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (predictor, predictor_name): (Box<dyn Predictor>, String) = match &cfg.predictor {
        PredictorSpec::External { path } => {
            let p = ExternalPredictions::new(load_predictions(path, s.t())?);
            (Box::new(p), format!("external:{}", path.display()))
        }
        spec => {
            let kind = match spec {
                PredictorSpec::Ar { order } => PredictorKind::Ar { order: *order },
                _ => PredictorKind::ConstantVelocity,
            };
            let model = PredictorModel::fit(kind, &train, s.t(), s.h, "train")?;
            let name = match kind {
                PredictorKind::Ar { order } => format!("ar({order})"),
                PredictorKind::ConstantVelocity => "constant-velocity".into(),
            };
            (Box::new(model), name)
        }
    };
    timing.predictor_fit_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let alpha_p = predict_many(&s, predictor.as_ref(), &alpha_x, cfg.parallel)?;
    let calib_p = predict_many(&s, predictor.as_ref(), &calib_x, cfg.parallel)?;
    let test_p = predict_many(&s, predictor.as_ref(), &test_x, cfg.parallel)?;
    timing.prediction_seconds = clock.elapsed().as_secs_f64();
    let alpha_pairs = pairs(&alpha_x, &alpha_p);

    let mut alpha = BTreeMap::new();
    let mut alpha_seconds = BTreeMap::new();
    for &f in &cfg.methods {
        let clock = Instant::now();
        alpha.insert(f, compute_alpha(f, &s, &alpha_pairs)?);
        alpha_seconds.insert(f, clock.elapsed().as_secs_f64());
    }

    let clock = Instant::now();
    let (epsilon, shift) = match cfg.epsilon {
        EpsilonSpec::Fixed { value } => (value, None),
        EpsilonSpec::Estimate { grid_points, .. } => {
            let est = match &data.shift {
                Some((a, b)) => {
                    let (a, b): (Vec<&Trajectory>, Vec<&Trajectory>) = (a.iter().collect(), b.iter().collect());
                    let pa = predict_many(&s, predictor.as_ref(), &a, cfg.parallel)?;
                    let pb = predict_many(&s, predictor.as_ref(), &b, cfg.parallel)?;
                    estimate_epsilon(&s, &cfg.methods, &alpha_pairs, &pairs(&a, &pa), &pairs(&b, &pb), grid_points)?
                }
                None => estimate_epsilon(
                    &s,
                    &cfg.methods,
                    &alpha_pairs,
                    &pairs(&calib_x, &calib_p),
                    &pairs(&test_x, &test_p),
                    grid_points,
                )?,
            };
            (est.epsilon, Some(est))
        }
    };
    timing.shift_seconds = clock.elapsed().as_secs_f64();
    let div = DivergenceSpec::from_name(&cfg.divergence, epsilon)?;

    let test_rho = test_x.iter().map(|x| s.robustness(x)).collect::<Result<Vec<_>, _>>()?;
    let mut mismatch = GraphMismatch::default();
    if s.dialect() == Dialect::Strel {
        for (x, p) in test_x.iter().zip(&test_p) {
            let n = s.graph_mismatch(x, p)?;
            mismatch.trials += usize::from(n > 0);
            mismatch.times += n;
        }
    }

    let shared = Shared {
        cfg,
        s: &s,
        div,
        calib: pairs(&calib_x, &calib_p),
        test: pairs(&test_x, &test_p),
        test_rho,
        alpha,
        alpha_ids: splits.alpha.clone(),
    };
    let reps: Vec<RepResult> = if cfg.parallel {
        (0..cfg.repetitions).into_par_iter().map(|r| run_repetition(&shared, r)).collect::<Result<_, _>>()?
    } else {
        (0..cfg.repetitions).map(|r| run_repetition(&shared, r)).collect::<Result<_, _>>()?
    };

    let mut methods = Vec::new();
    for (j, &family) in cfg.methods.iter().enumerate() {
        let method = Method::new(family, s.dialect());
        for v in [Variant::Robust, Variant::Baseline] {
            let coverage: Vec<f64> = reps.iter().map(|r| r.methods[j].coverage[v as usize]).collect();
            let c_tilde: Vec<ExtReal> =
                reps.iter().map(|r| if v == Variant::Robust { r.methods[j].c_robust } else { r.methods[j].c_baseline }).collect();
            let rho: Vec<ExtReal> = reps
                .iter()
                .flat_map(|r| r.rows.iter().filter(|row| row.method == method && row.variant == v).map(|row| row.rho_star))
                .collect();
            let (mean_rho_star, se_rho_star) = if rho.iter().all(|r| r.is_finite()) {
                let (m, se) = mean_se(&rho.iter().map(|r| r.value()).collect::<Vec<_>>());
                (ExtReal::new(m), Some(se))
            } else {
                (ExtReal::NEG_INFINITY, None)
            };
            let (mean, se) = mean_se(&coverage);
            methods.push(MethodSummary {
                method,
                variant: v,
                epsilon: if v == Variant::Robust { epsilon } else { 0.0 },
                mean_coverage: mean,
                min_coverage: coverage.iter().copied().fold(f64::INFINITY, f64::min),
                se_coverage: se,
                histogram: histogram(&coverage, cfg.histogram_bins),
                infeasible_repetitions: c_tilde.iter().filter(|c| c.is_pos_inf()).count(),
                coverage,
                c_tilde,
                mean_rho_star,
                se_rho_star,
            });
        }
        let n = reps.len() as f64;
        timing.methods.push(MethodTiming {
            method,
            alpha_seconds: alpha_seconds[&family],
            offline_seconds: reps.iter().map(|r| r.methods[j].offline).sum::<f64>() / n,
            online_seconds: reps.iter().map(|r| r.methods[j].online).sum::<f64>() / n,
        });
    }
    timing.total_seconds = total.elapsed().as_secs_f64();

    let summary = ExperimentSummary {
        config: cfg.clone(),
        h: s.h,
        epsilon,
        shift,
        predictor: predictor_name,
        splits,
        test_ids: test_x.iter().map(|x| x.id()).collect(),
        graph_mismatch: mismatch,
        methods,
    };
    Ok(CoverageReport { summary, rows: reps.into_iter().flat_map(|r| r.rows).collect(), timing })
}

/// Writes `summary.json`, `coverage.csv` (one line per repetition and
/// method), `rows.csv` (one line per verdict) and `timing.json` into `dir`.
pub fn emit_report(report: &CoverageReport, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&report.summary)?)?;
    std::fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&report.timing)?)?;
    let mut w = csv::Writer::from_path(dir.join("coverage.csv"))?;
    w.write_record(["repetition", "method", "variant", "epsilon", "c_tilde", "coverage"])?;
    for m in &report.summary.methods {
        for (r, (cov, c)) in m.coverage.iter().zip(&m.c_tilde).enumerate() {
            w.write_record([
                r.to_string(),
                m.method.to_string(),
                m.variant.name().into(),
                m.epsilon.to_string(),
                c.to_string(),
                cov.to_string(),
            ])?;
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("rows.csv"))?;
    w.write_record(["repetition", "method", "variant", "trial", "rho_true", "rho_star", "covered"])?;
    for r in &report.rows {
        w.write_record([
            r.repetition.to_string(),
            r.method.to_string(),
            r.variant.name().into(),
            r.trial.to_string(),
            r.rho_true.to_string(),
            r.rho_star.to_string(),
            u8::from(r.covered).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::noisy_reference(3.0, 3.5, 0.142);
        cfg.k = 60;
        cfg.m = 20;
        cfg.repetitions = 3;
        cfg.splits = SplitSizes { train: 40, alpha: 30, calibration: 80 };
        cfg.test_pool = 50;
        cfg
    }

    #[test]
    fn row_counts_and_determinism() {
        let cfg = small();
        let a = run_experiment(&cfg).unwrap();
        assert_eq!(a.rows.len(), cfg.repetitions * cfg.m * cfg.methods.len() * 2);
        assert_eq!(a.summary.methods.len(), 6);
        for m in &a.summary.methods {
            assert!(m.coverage.iter().all(|c| (0.0..=1.0).contains(c)));
            assert_eq!(m.histogram.iter().sum::<usize>(), cfg.repetitions);
        }
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a.summary).unwrap(), serde_json::to_string(&b.summary).unwrap());
        assert_eq!(a.rows, b.rows);
        let par = run_experiment(&ExperimentConfig { parallel: true, ..cfg }).unwrap();
        assert_eq!(par.rows, a.rows);
        assert_eq!(par.timing.methods.len(), 3);
    }

    #[test]
    fn robust_bound_is_never_above_baseline() {
        let r = run_experiment(&small()).unwrap();
        for f in Family::ALL {
            let rob = r.summary.get(f, Variant::Robust).unwrap();
            let base = r.summary.get(f, Variant::Baseline).unwrap();
            assert!(rob.c_tilde.iter().zip(&base.c_tilde).all(|(a, b)| a >= b));
            assert!(rob.mean_coverage >= base.mean_coverage);
        }
    }

    #[test]
    fn infeasible_runs_complete() {
        let mut cfg = small();
        cfg.k = 3;
        cfg.epsilon = EpsilonSpec::Fixed { value: 0.4 };
        let r = run_experiment(&cfg).unwrap();
        assert!(r.summary.all_infeasible());
        let m = r.summary.get(Family::Accurate, Variant::Robust).unwrap();
        assert_eq!(m.mean_coverage, 1.0);
        assert!(m.mean_rho_star.is_neg_inf());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small();
        cfg.k = 81;
        assert!(run_experiment(&cfg).is_err());
        let mut cfg = small();
        cfg.repetitions = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn paired_difference_matches_hand_computation() {
        let (m, se) = paired_difference(&[3.0, 5.0, 7.0], &[1.0, 2.0, 3.0]);
        assert_eq!(m, 3.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(histogram(&[0.0, 0.5, 1.0, 0.99], 4), vec![1, 0, 1, 2]);
    }

    #[test]
    fn report_files() {
        let r = run_experiment(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&r, dir.path()).unwrap();
        let rows = std::fs::read_to_string(dir.path().join("rows.csv")).unwrap();
        assert_eq!(rows.lines().count(), r.rows.len() + 1);
        let s: ExperimentSummary = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(s, r.summary);
    }
}
