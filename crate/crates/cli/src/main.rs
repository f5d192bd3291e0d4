//! `rprv` command-line front end.
//!
//! Exit codes: 0 on success, 2 when every requested calibration is
//! infeasible (`C̃ = +∞`), 1 on any error.

use std::error::Error;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rprv::conformal::DivergenceSpec;
use rprv::harness::{
    emit_report, generate_noisy_reference, generate_swarm_lite, load_predictions, load_trajectories, load_weights,
    run_experiment, save_trajectories, EpsilonSpec, ExperimentConfig, ReferenceCurve, SwarmParams, Variant,
};
use rprv::logic::{parse, Dialect, Norm};
use rprv::predictors::{horizon, ExternalPredictions, PredictedTrajectory, Predictor, PredictorKind, PredictorModel};
use rprv::rprv::{calibrate_with_predictor, verify_with_predictor, CalibrationArtifact, Family, MonitorSetup, MonitorSpec, Pair};
use rprv::semantics::{eval_robust_stl, eval_robust_strel, Trajectory, WeightSpec};
use rprv::shift::estimate_epsilon;
use serde::Serialize;

type CliResult<T> = Result<T, Box<dyn Error>>;

#[derive(Debug, PartialEq, Eq)]
enum Outcome {
    Done,
    Infeasible,
}

#[derive(Parser)]
#[command(name = "rprv", version, about = "Robust predictive runtime verification for STL and STREL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset.
    Generate(GenerateArgs),
    /// Fit a trajectory predictor on a training set.
    FitPredictor(FitArgs),
    /// Calibrate one method and write its artifact.
    Calibrate(CalibrateArgs),
    /// Issue verdicts for test trajectories with a calibrated artifact.
    Verify(VerifyArgs),
    /// Estimate the TV shift between calibration and test scores.
    EstimateShift(ShiftArgs),
    /// Run the repeated coverage experiment.
    Experiment(ExperimentArgs),
    /// Evaluate robust semantics on full trajectories.
    Monitor(MonitorArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemKind {
    NoisyReference,
    SwarmLite,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    system: SystemKind,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    /// Noise level of the noisy-reference system.
    #[arg(long, default_value_t = 3.0)]
    sigma: f64,
    /// Reference speed of the swarm.
    #[arg(long, default_value_t = 6.0)]
    speed: f64,
    #[arg(long, default_value_t = 5)]
    agents: usize,
    #[arg(long, default_value_t = 0)]
    first_id: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Formula and monitoring position shared by several subcommands.
#[derive(Args, Clone)]
struct FormulaArgs {
    #[arg(long)]
    formula: String,
    #[arg(long, default_value = "stl")]
    dialect: Dialect,
    #[arg(long, default_value_t = 0)]
    tau0: usize,
    /// Monitored agent, 1-based.
    #[arg(long, default_value_t = 1)]
    agent: usize,
    /// Graph weights: a JSON weight specification, or for `monitor` also a
    /// CSV of explicit per-trial weights.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct OnlineArgs {
    #[command(flatten)]
    formula: FormulaArgs,
    /// Current time; states `0..=t` are observed.
    #[arg(long)]
    t: usize,
    /// Norm of the state balls of interp1.
    #[arg(long, default_value = "euclidean")]
    norm: String,
}

#[derive(Args, Clone)]
struct PredictorSource {
    /// A fitted predictor model (JSON).
    #[arg(long, conflicts_with = "predictions")]
    predictor: Option<PathBuf>,
    /// Precomputed predictions in trajectory CSV format, times `t+1..`.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    ConstantVelocity,
    Ar,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    online: OnlineArgs,
    #[arg(long)]
    traj: PathBuf,
    #[arg(long, value_enum, default_value = "ar")]
    kind: ModelKind,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    online: OnlineArgs,
    #[command(flatten)]
    source: PredictorSource,
    /// Calibration trajectories.
    #[arg(long)]
    traj: PathBuf,
    /// Trajectories for the normalisation constants of interp1 and interp2.
    #[arg(long)]
    alpha_traj: Option<PathBuf>,
    #[arg(long, default_value = "accurate")]
    method: Family,
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value = "tv")]
    divergence: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    artifact: PathBuf,
    #[command(flatten)]
    source: PredictorSource,
    /// Test trajectories; the true robustness is reported when they are long enough.
    #[arg(long)]
    traj: PathBuf,
    /// CSV of verdicts; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ShiftArgs {
    #[command(flatten)]
    online: OnlineArgs,
    #[command(flatten)]
    source: PredictorSource,
    /// Trajectories from the calibration distribution.
    #[arg(long)]
    calibration: PathBuf,
    /// Trajectories from the deployment distribution.
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    alpha_traj: Option<PathBuf>,
    /// Methods whose scores are compared; all when absent.
    #[arg(long)]
    method: Vec<Family>,
    #[arg(long, default_value_t = 4096)]
    grid_points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    NoisyReference,
    Swarm,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment configuration (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Swarm size for the swarm preset.
    #[arg(long, default_value_t = 5)]
    agents: usize,
    #[arg(long)]
    method: Vec<Family>,
    #[arg(long)]
    delta: Option<f64>,
    /// Fixed shift bound, replacing any estimate.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    divergence: Option<String>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    parallel: bool,
    /// Output directory for summary.json, timing.json, coverage.csv and rows.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MonitorArgs {
    #[command(flatten)]
    formula: FormulaArgs,
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::FitPredictor(a) => fit_predictor(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Verify(a) => verify(a),
        Command::EstimateShift(a) => estimate_shift(a),
        Command::Experiment(a) => experiment(a),
        Command::Monitor(a) => monitor(a),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Infeasible) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let f = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(serde_json::from_reader(io::BufReader::new(f))?)
}

fn load(path: &Path) -> CliResult<Vec<Trajectory>> {
    load_trajectories(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn agent_index(a: &FormulaArgs) -> CliResult<usize> {
    a.agent.checked_sub(1).ok_or_else(|| "--agent is 1-based".into())
}

fn parse_norm(s: &str) -> CliResult<Norm> {
    match s {
        "euclidean" | "2" => Ok(Norm::Euclidean),
        "max" | "inf" => Ok(Norm::Max),
        o => Err(format!("unknown norm {o:?}").into()),
    }
}

/// Builds the monitor for trajectories with `agents` agents.
fn monitor_spec(a: &OnlineArgs, agents: usize) -> CliResult<MonitorSpec> {
    let f = &a.formula;
    let spec = match f.dialect {
        Dialect::Stl => MonitorSpec::stl(&f.formula, f.tau0, a.t),
        Dialect::Strel => {
            let path = f.weights.as_deref().ok_or("--weights is required for STREL")?;
            if is_csv(path) {
                return Err("explicit per-trial weights are only supported by `monitor`".into());
            }
            MonitorSpec::strel(&f.formula, f.tau0, a.t, read_json::<WeightSpec>(path)?, agents, agent_index(f)?)
        }
    };
    Ok(spec.with_norm(parse_norm(&a.norm)?))
}

fn load_predictor(src: &PredictorSource, t: usize) -> CliResult<(Box<dyn Predictor>, String)> {
    match (&src.predictor, &src.predictions) {
        (Some(p), None) => {
            let m: PredictorModel = read_json(p)?;
            Ok((Box::new(m), p.display().to_string()))
        }
        (None, Some(p)) => {
            let preds = load_predictions(p, t).map_err(|e| format!("{}: {e}", p.display()))?;
            Ok((Box::new(ExternalPredictions::new(preds)), format!("external:{}", p.display())))
        }
        _ => Err("one of --predictor or --predictions is required".into()),
    }
}

fn agents_of(xs: &[Trajectory]) -> CliResult<usize> {
    Ok(xs.first().ok_or("empty trajectory file")?.agents())
}

fn generate(a: GenerateArgs) -> CliResult<Outcome> {
    let xs = match a.system {
        SystemKind::NoisyReference => generate_noisy_reference(&ReferenceCurve::default().values(), a.sigma, a.count, a.seed, a.first_id)?,
        SystemKind::SwarmLite => {
            let p = SwarmParams { agents: a.agents, speed: a.speed, ..SwarmParams::default() };
            generate_swarm_lite(&p, a.count, a.seed, a.first_id)?
        }
    };
    save_trajectories(&a.out, &xs)?;
    eprintln!("wrote {} trajectories to {}", xs.len(), a.out.display());
    Ok(Outcome::Done)
}

fn fit_predictor(a: FitArgs) -> CliResult<Outcome> {
    let train = load(&a.traj)?;
    let f = parse(&a.online.formula.formula, a.online.formula.dialect)?;
    let h = horizon(&f, a.online.formula.tau0, a.online.t)?;
    let kind = match a.kind {
        ModelKind::ConstantVelocity => PredictorKind::ConstantVelocity,
        ModelKind::Ar => PredictorKind::Ar { order: a.order },
    };
    let model = PredictorModel::fit(kind, &train, a.online.t, h, &a.traj.display().to_string())?;
    write_json(Some(&a.out), &model)?;
    eprintln!("fitted on {} trajectories, horizon {h}", train.len());
    Ok(Outcome::Done)
}

fn calibrate(a: CalibrateArgs) -> CliResult<Outcome> {
    let calib = load(&a.traj)?;
    let setup = MonitorSetup::new(monitor_spec(&a.online, agents_of(&calib)?)?)?;
    let alpha = match (&a.alpha_traj, a.method) {
        (_, Family::Accurate) => vec![],
        (Some(p), _) => load(p)?,
        (None, m) => return Err(format!("--alpha-traj is required for {m}").into()),
    };
    let (predictor, name) = load_predictor(&a.source, a.online.t)?;
    let div = DivergenceSpec::from_name(&a.divergence, a.epsilon)?;
    let mut artifact = calibrate_with_predictor(a.method, &setup, &alpha, &calib, predictor.as_ref(), a.delta, &div)?;
    artifact.predictor = Some(name);
    write_json(Some(&a.out), &artifact)?;
    eprintln!("{}: K = {}, C = {}", artifact.method, artifact.k, artifact.c_tilde);
    Ok(if artifact.is_feasible() { Outcome::Done } else { Outcome::Infeasible })
}

fn verify(a: VerifyArgs) -> CliResult<Outcome> {
    let artifact: CalibrationArtifact = read_json(&a.artifact)?;
    let setup = MonitorSetup::new(artifact.monitor.clone())?;
    let (predictor, _) = load_predictor(&a.source, setup.t())?;
    let xs = load(&a.traj)?;
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "trial,method,rho_star,satisfied,level,rho_true,covered")?;
    for x in &xs {
        let v = verify_with_predictor(&artifact, &setup, x, predictor.as_ref())?;
        let truth = if x.len() >= setup.required_len() { Some(setup.robustness(x)?) } else { None };
        let (rho, covered) = match truth {
            Some(r) => (r.to_string(), (r >= v.rho_star).to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(w, "{},{},{},{},{},{rho},{covered}", v.trial, v.method, v.rho_star, v.satisfied, v.level)?;
    }
    w.flush()?;
    Ok(if artifact.is_feasible() { Outcome::Done } else { Outcome::Infeasible })
}

fn estimate_shift(a: ShiftArgs) -> CliResult<Outcome> {
    let calib = load(&a.calibration)?;
    let test = load(&a.traj)?;
    let setup = MonitorSetup::new(monitor_spec(&a.online, agents_of(&calib)?)?)?;
    let methods = if a.method.is_empty() { Family::ALL.to_vec() } else { a.method.clone() };
    let alpha = match &a.alpha_traj {
        Some(p) => load(p)?,
        None if methods.iter().all(|&m| m == Family::Accurate) => vec![],
        None => return Err("--alpha-traj is required for interp1 and interp2".into()),
    };
    let (predictor, _) = load_predictor(&a.source, a.online.t)?;
    let predict = |xs: &[Trajectory]| xs.iter().map(|x| setup.predict(predictor.as_ref(), x)).collect::<Result<Vec<_>, _>>();
    let (pa, pc, pt) = (predict(&alpha)?, predict(&calib)?, predict(&test)?);
    let est = estimate_epsilon(&setup, &methods, &pairs(&alpha, &pa), &pairs(&calib, &pc), &pairs(&test, &pt), a.grid_points)?;
    write_json(a.out.as_deref(), &est)?;
    eprintln!("epsilon = {:.6}", est.epsilon);
    Ok(Outcome::Done)
}

fn pairs<'a>(xs: &'a [Trajectory], ps: &'a [PredictedTrajectory]) -> Vec<Pair<'a>> {
    xs.iter().zip(ps).map(|(truth, pred)| Pair { truth, pred }).collect()
}

fn experiment(a: ExperimentArgs) -> CliResult<Outcome> {
    let mut cfg: ExperimentConfig = match (&a.config, a.preset) {
        (Some(p), _) => read_json(p)?,
        (None, Some(Preset::NoisyReference)) => ExperimentConfig::noisy_reference(3.0, 3.5, 0.142),
        (None, Some(Preset::Swarm)) => ExperimentConfig::swarm(a.agents),
        (None, None) => return Err("one of --config or --preset is required".into()),
    };
    if !a.method.is_empty() {
        cfg.methods = a.method.clone();
    }
    if let Some(d) = a.delta {
        cfg.delta = d;
    }
    if let Some(e) = a.epsilon {
        cfg.epsilon = EpsilonSpec::Fixed { value: e };
    }
    if let Some(d) = &a.divergence {
        cfg.divergence = d.clone();
    }
    if let Some(r) = a.repetitions {
        cfg.repetitions = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.parallel |= a.parallel;
    let report = run_experiment(&cfg)?;
    emit_report(&report, &a.out)?;
    let s = &report.summary;
    println!("epsilon = {:.6}, H = {}", s.epsilon, s.h);
    println!("{:<10} {:<9} {:>8} {:>8} {:>12}", "method", "variant", "mean", "min", "mean rho*");
    for m in &s.methods {
        println!(
            "{:<10} {:<9} {:>8.4} {:>8.4} {:>12}",
            m.method.family.name(),
            m.variant.name(),
            m.mean_coverage,
            m.min_coverage,
            m.mean_rho_star
        );
    }
    debug_assert!(s.methods.iter().any(|m| m.variant == Variant::Robust));
    Ok(if s.all_infeasible() { Outcome::Infeasible } else { Outcome::Done })
}

fn monitor(a: MonitorArgs) -> CliResult<Outcome> {
    let xs = load(&a.traj)?;
    let f = parse(&a.formula.formula, a.formula.dialect)?;
    let agents = agents_of(&xs)?;
    let agent = agent_index(&a.formula)?;
    let weights = match (&a.formula.weights, a.formula.dialect) {
        (_, Dialect::Stl) => Weights::None,
        (None, Dialect::Strel) => return Err("--weights is required for STREL".into()),
        (Some(p), _) if is_csv(p) => Weights::PerTrial(load_weights(p, agents)?),
        (Some(p), _) => Weights::Shared(read_json(p)?),
    };
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "trial,rho,satisfied")?;
    for x in &xs {
        let rho = match &weights {
            Weights::None => eval_robust_stl(&f, x, a.formula.tau0)?,
            Weights::Shared(ws) => eval_robust_strel(&f, x, ws, a.formula.tau0, agent)?,
            Weights::PerTrial(m) => {
                let ws = m.get(&x.id()).ok_or_else(|| format!("no weights for trial {}", x.id()))?;
                eval_robust_strel(&f, x, ws, a.formula.tau0, agent)?
            }
        };
        writeln!(w, "{},{rho},{}", x.id(), rho > rprv::ExtReal::ZERO)?;
    }
    w.flush()?;
    Ok(Outcome::Done)
}

enum Weights {
    None,
    Shared(WeightSpec),
    PerTrial(std::collections::HashMap<usize, WeightSpec>),
}
