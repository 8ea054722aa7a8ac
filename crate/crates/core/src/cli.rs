//! Command-line front end.
//!
//! Every verb resolves its parameters from flags, then an optional
//! `key=value` config file (`--config`), then built-in defaults, validates
//! them, and writes CSV paths plus flat `key=value` records into its output
//! directory. The effective configuration is echoed to `config.txt`.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::grid::{Path, TimeGrid};
use crate::io;
use crate::kernel::{
    covariance_probe, estimate_small_ball, FbmMethod, FbmSampler, Norm, SmallBallQuery, PROBE_PAIRS,
};
use crate::mkv::{
    law_path, simulate_ensemble_with, simulate_frozen_law, DriftSpec, EnsembleConfig, LawPath,
};
use crate::mpp::{minimize_action, pendulum_reference, MppOptions, MppResult};
use crate::om::{estimate_ratio_with_law, fmt_f64, om_action, RatioQuery};
use crate::rng;
use crate::scenarios;
use crate::special::HurstModel;

#[derive(Debug, Parser)]
#[command(
    name = "omfbm",
    version,
    about = "Onsager-Machlup actions and most probable paths for mean-field SDEs driven by fBm"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample fBm paths; optionally probe the empirical covariance.
    SimulateFbm(SimulateFbmArgs),
    /// Simulate the interacting particle system and write its mean.
    SimulateMkv(SimulateMkvArgs),
    /// Evaluate the Onsager-Machlup action of a path.
    OmEval(OmEvalArgs),
    /// Most probable path between two states.
    Mpp(MppArgs),
    /// Monte Carlo tube-probability ratio of a path.
    Ratio(RatioArgs),
    /// Small-ball probabilities of fBm.
    SmallBall(SmallBallArgs),
    /// Sine mean-field example: most probable paths from pi to 2.
    Example1(ExampleArgs),
    /// Pendulum example: most probable paths against the deterministic swing.
    Example2(ExampleArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flat key=value file; flags take precedence over it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of grid steps on [0, 1].
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateFbmArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Hurst parameter in (1/4, 1).
    #[arg(long = "H", value_name = "H")]
    pub hurst: Option<f64>,
    /// Number of paths written.
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// volterra or cholesky.
    #[arg(long)]
    pub method: Option<String>,
    /// Also compare the empirical covariance with the analytic one.
    #[arg(long)]
    pub probe_cov: bool,
    /// Paths used by the covariance probe.
    #[arg(long)]
    pub probe_paths: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DriftArgs {
    /// zero, linear-decay, example1-sine or example2-pendulum.
    #[arg(long)]
    pub drift: Option<String>,
    /// Initial state, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<List>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateMkvArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub drift: DriftArgs,
    #[arg(long = "H", value_name = "H")]
    pub hurst: Option<f64>,
    /// Particle count.
    #[arg(long = "N", value_name = "N")]
    pub particles: Option<usize>,
    /// Pair particles with sign-flipped noise.
    #[arg(long)]
    pub antithetic: bool,
    #[arg(long)]
    pub method: Option<String>,
    /// Number of particle paths written alongside the mean.
    #[arg(long)]
    pub save_paths: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PathArgs {
    /// Path CSV; the straight line from x0 to x1 if absent.
    #[arg(long, value_name = "FILE")]
    pub path: Option<PathBuf>,
    /// Terminal state of the straight line, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x1: Option<List>,
    /// Particles of the run that freezes the law.
    #[arg(long = "N", value_name = "N")]
    pub particles: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OmEvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub drift: DriftArgs,
    #[command(flatten)]
    pub path: PathArgs,
    #[arg(long = "H", value_name = "H")]
    pub hurst: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub ls_shrink: Option<f64>,
    #[arg(long)]
    pub ls_c1: Option<f64>,
    #[arg(long)]
    pub fd_step: Option<f64>,
    #[arg(long)]
    pub memory: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct MppArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub drift: DriftArgs,
    #[arg(long = "H", value_name = "H")]
    pub hurst: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x1: Option<List>,
    #[arg(long = "N", value_name = "N")]
    pub particles: Option<usize>,
    /// Starting path CSV.
    #[arg(long, value_name = "FILE")]
    pub init: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct NormArgs {
    /// sup or holder.
    #[arg(long)]
    pub norm: Option<String>,
    /// Hölder exponent.
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct RatioArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub drift: DriftArgs,
    #[command(flatten)]
    pub path: PathArgs,
    #[command(flatten)]
    pub norm: NormArgs,
    #[arg(long = "H", value_name = "H")]
    pub hurst: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Monte Carlo samples on each side.
    #[arg(long = "M", value_name = "M")]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SmallBallArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub norm: NormArgs,
    #[arg(long = "H", value_name = "H")]
    pub hurst: Option<f64>,
    /// Radii, comma separated.
    #[arg(long)]
    pub eps: Option<List>,
    #[arg(long = "M", value_name = "M")]
    pub samples: Option<usize>,
    /// Shift the sup-norm radius to compensate for discrete monitoring.
    #[arg(long)]
    pub continuity_correction: Option<bool>,
}

#[derive(Debug, Clone, Args)]
pub struct ExampleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Hurst parameters, comma separated.
    #[arg(long = "H", value_name = "H")]
    pub hurst: Option<List>,
    #[arg(long = "N", value_name = "N")]
    pub particles: Option<usize>,
    /// Sample paths kept near the most probable path (example1 only).
    #[arg(long)]
    pub bundle: Option<usize>,
    /// Sup-norm radius of the bundle tube (example1 only).
    #[arg(long)]
    pub tube: Option<f64>,
    /// Simulation budget for the bundle (example1 only).
    #[arg(long)]
    pub bundle_tries: Option<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

/// Comma-separated list of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct List(pub Vec<f64>);

impl FromStr for List {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let v: std::result::Result<Vec<f64>, _> =
            s.split(',').map(|x| x.trim().parse::<f64>()).collect();
        match v {
            Ok(v) if !v.is_empty() => Ok(List(v)),
            _ => Err(format!("expected comma-separated numbers, got '{s}'")),
        }
    }
}

impl fmt::Display for List {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Parses `args` (including the program name) and runs the verb. Returns
/// the process exit code: 0 on success, 2 for usage or validation errors,
/// 1 for runtime failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::SimulateFbm(a) => cmd_simulate_fbm(a),
        Command::SimulateMkv(a) => cmd_simulate_mkv(a),
        Command::OmEval(a) => cmd_om_eval(a),
        Command::Mpp(a) => cmd_mpp(a),
        Command::Ratio(a) => cmd_ratio(a),
        Command::SmallBall(a) => cmd_small_ball(a),
        Command::Example1(a) => cmd_example1(a),
        Command::Example2(a) => cmd_example2(a),
    }
}

/// Flag, then config file, then default; records what was used.
struct Settings {
    command: &'static str,
    file: HashMap<String, String>,
    used: Vec<(String, String)>,
}

impl Settings {
    fn load(command: &'static str, common: &CommonArgs) -> Result<Self> {
        let file = match &common.config {
            Some(p) => io::parse_record(&fs::read_to_string(p).map_err(|e| {
                Error::Usage(format!("cannot read config file {}: {e}", p.display()))
            })?)?
            .into_iter()
            .collect(),
            None => HashMap::new(),
        };
        Ok(Self {
            command,
            file,
            used: vec![("command".into(), command.into())],
        })
    }

    fn lookup<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        let from_file = self.file.remove(key);
        let value = match (flag, from_file) {
            (Some(v), _) => Some(v),
            (None, Some(text)) => Some(text.parse::<T>().map_err(|e| {
                Error::Usage(format!("config key '{key}': cannot parse '{text}': {e}"))
            })?),
            (None, None) => None,
        };
        if let Some(v) = &value {
            self.used.push((key.to_string(), v.to_string()));
        }
        Ok(value)
    }

    fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        match self.lookup(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.used.push((key.to_string(), default.to_string()));
                Ok(default)
            }
        }
    }

    fn flag(&mut self, key: &str, set: bool) -> Result<bool> {
        self.get(key, set.then_some(true), false)
    }

    fn common(&mut self, c: &CommonArgs, n: usize) -> Result<(PathBuf, u64, TimeGrid)> {
        let default_out = format!("omfbm-out/{}", self.command);
        let out = self.get(
            "out",
            c.out.as_ref().map(|p| p.display().to_string()),
            default_out,
        )?;
        let seed = self.get("seed", c.seed, 1)?;
        let n = self.get("n", c.n, n)?;
        if n < 2 {
            return Err(Error::Usage(format!("n must be at least 2, got {n}")));
        }
        Ok((PathBuf::from(out), seed, TimeGrid::new(n)?))
    }

    /// Fails on config keys this verb does not read, then creates the output
    /// directory and echoes the effective configuration into it.
    fn finish(self, out: &FsPath) -> Result<()> {
        if let Some(k) = self.file.keys().min() {
            return Err(Error::Usage(format!(
                "config key '{k}' is not used by {}",
                self.command
            )));
        }
        fs::create_dir_all(out)?;
        io::write_record(out.join("config.txt"), &self.used)
    }
}

fn model(h: f64) -> Result<HurstModel> {
    HurstModel::new(h)
}

fn positive(name: &str, v: usize) -> Result<usize> {
    if v == 0 {
        return Err(Error::Usage(format!("{name} must be positive")));
    }
    Ok(v)
}

fn method(name: &str) -> Result<FbmMethod> {
    name.parse()
}

/// Default endpoints for each built-in drift.
fn default_endpoints(drift: &str) -> (Vec<f64>, Vec<f64>) {
    match drift {
        "example1-sine" => (
            vec![scenarios::EXAMPLE1_START],
            vec![scenarios::EXAMPLE1_END],
        ),
        "example2-pendulum" => (
            scenarios::EXAMPLE2_START.to_vec(),
            scenarios::EXAMPLE2_END.to_vec(),
        ),
        _ => (vec![0.0], vec![1.0]),
    }
}

fn drift_and_start(
    s: &mut Settings,
    a: &DriftArgs,
    default_drift: &str,
) -> Result<(DriftSpec, Vec<f64>, Vec<f64>)> {
    let name = s.get("drift", a.drift.clone(), default_drift.to_string())?;
    let (d0, d1) = default_endpoints(&name);
    let x0 = s.get("x0", a.x0.clone(), List(d0))?.0;
    let drift = DriftSpec::by_name(&name, x0.len())?;
    if x0.len() != drift.dim() {
        return Err(Error::Usage(format!(
            "drift {name} acts on dimension {}, x0 has {} components",
            drift.dim(),
            x0.len()
        )));
    }
    Ok((drift, x0, d1))
}

fn end_state(
    s: &mut Settings,
    flag: Option<List>,
    default: Vec<f64>,
    dim: usize,
) -> Result<Vec<f64>> {
    let x1 = s.get("x1", flag, List(default))?.0;
    if x1.len() != dim {
        return Err(Error::Usage(format!(
            "x1 has {} components, expected {dim}",
            x1.len()
        )));
    }
    Ok(x1)
}

fn norm(s: &mut Settings, a: &NormArgs) -> Result<Norm> {
    let name = s.get("norm", a.norm.clone(), "sup".to_string())?;
    match name.as_str() {
        "sup" => Ok(Norm::Sup),
        "holder" => {
            let beta = s
                .lookup("beta", a.beta)?
                .ok_or_else(|| Error::Usage("the holder norm needs --beta".into()))?;
            Ok(Norm::Holder { beta })
        }
        other => Err(Error::Usage(format!(
            "unknown norm '{other}' (expected sup or holder)"
        ))),
    }
}

fn solver(s: &mut Settings, a: &SolverArgs) -> Result<MppOptions> {
    let d = MppOptions::default();
    let opts = MppOptions {
        max_iters: s.get("max-iters", a.max_iters, d.max_iters)?,
        grad_tol: s.get("grad-tol", a.grad_tol, d.grad_tol)?,
        ls_shrink: s.get("ls-shrink", a.ls_shrink, d.ls_shrink)?,
        ls_c1: s.get("ls-c1", a.ls_c1, d.ls_c1)?,
        fd_step: s.get("fd-step", a.fd_step, d.fd_step)?,
        memory: s.get("memory", a.memory, d.memory)?,
        initial: None,
    };
    opts.validate()?;
    Ok(opts)
}

/// Provenance pairs shared by every record.
fn provenance(command: &str, m: &HurstModel, grid: TimeGrid, seed: u64) -> Vec<(String, String)> {
    vec![
        ("command".into(), command.into()),
        ("H".into(), m.hurst.to_string()),
        ("n".into(), grid.steps().to_string()),
        ("seed".into(), seed.to_string()),
        ("regime".into(), m.regime.as_str().into()),
    ]
}

/// Appends a report record; its `H`, `n` and `regime` replace the
/// provenance entries of the same name.
fn extend_report(rec: &mut Vec<(String, String)>, report: &crate::om::OmReport) {
    let fields = report.record();
    rec.retain(|(k, _)| !fields.iter().any(|(f, _)| f == k));
    rec.extend(fields.into_iter().map(|(k, v)| (k.to_string(), v)));
}

fn push(rec: &mut Vec<(String, String)>, k: &str, v: impl ToString) {
    rec.push((k.to_string(), v.to_string()));
}

fn hurst_dir(out: &FsPath, h: f64) -> PathBuf {
    out.join(format!("H{h}"))
}

fn cmd_simulate_fbm(a: &SimulateFbmArgs) -> Result<()> {
    let mut s = Settings::load("simulate-fbm", &a.common)?;
    let h = s.get("H", a.hurst, 0.5)?;
    let m = model(h)?;
    let (out, seed, grid) = s.common(&a.common, 256)?;
    let count = s.get("paths", a.paths, 3)?;
    let dim = positive("dim", s.get("dim", a.dim, 1)?)?;
    let meth = method(&s.get("method", a.method.clone(), "volterra".to_string())?)?;
    let probe = s.flag("probe-cov", a.probe_cov)?;
    let probe_paths = s.get("probe-paths", a.probe_paths, 10_000)?;
    let sampler = FbmSampler::new(grid, m, meth)?;
    s.finish(&out)?;

    for (k, p) in sampler.sample_paths(dim, count, seed).iter().enumerate() {
        io::write_path(out.join(format!("path_{k:03}.csv")), p)?;
    }
    let mut rec = provenance("simulate-fbm", &m, grid, seed);
    push(&mut rec, "method", meth);
    push(&mut rec, "paths", count);
    push(&mut rec, "dim", dim);
    if probe {
        let probes = covariance_probe(&sampler, &PROBE_PAIRS, probe_paths, seed)?;
        let mut csv = String::from("t,s,empirical,analytic,std_error,z\n");
        for p in &probes {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_f64(p.t),
                fmt_f64(p.s),
                fmt_f64(p.empirical),
                fmt_f64(p.analytic),
                fmt_f64(p.std_error),
                fmt_f64(p.z_score())
            ));
        }
        fs::write(out.join("cov_probe.csv"), csv)?;
        let worst = probes.iter().map(|p| p.z_score().abs()).fold(0.0, f64::max);
        push(&mut rec, "probe_paths", probe_paths);
        push(&mut rec, "probe_max_abs_z", fmt_f64(worst));
    }
    io::write_record(out.join("run.txt"), &rec)
}

fn cmd_simulate_mkv(a: &SimulateMkvArgs) -> Result<()> {
    let mut s = Settings::load("simulate-mkv", &a.common)?;
    let (drift, x0, _) = drift_and_start(&mut s, &a.drift, "example1-sine")?;
    let m = model(s.get("H", a.hurst, 0.5)?)?;
    let (out, seed, grid) = s.common(&a.common, 128)?;
    let particles = positive("N", s.get("N", a.particles, 2000)?)?;
    let antithetic = s.flag("antithetic", a.antithetic)?;
    let meth = method(&s.get("method", a.method.clone(), "volterra".to_string())?)?;
    let save = s.get("save-paths", a.save_paths, 5)?;
    s.finish(&out)?;

    let mut cfg = EnsembleConfig::new(particles, seed);
    cfg.antithetic = antithetic;
    cfg.method = meth;
    let e = simulate_ensemble_with(&drift, &x0, &m, grid, &cfg)?;
    io::write_path(out.join("mean.csv"), &e.mean_path())?;
    io::write_sampled(out.join("mean_se.csv"), &e.mean_std_error())?;
    for (k, p) in e.paths().iter().take(save).enumerate() {
        io::write_path(out.join(format!("path_{k:03}.csv")), p)?;
    }
    let mut rec = provenance("simulate-mkv", &m, grid, seed);
    push(&mut rec, "drift", drift.name());
    push(&mut rec, "N", particles);
    push(&mut rec, "antithetic", antithetic);
    push(&mut rec, "method", meth);
    io::write_record(out.join("run.txt"), &rec)
}

/// The evaluated path: from a file or the straight line x0 -> x1.
fn resolve_path(
    s: &mut Settings,
    a: &PathArgs,
    grid: TimeGrid,
    x0: &[f64],
    default_x1: Vec<f64>,
) -> Result<Path> {
    match s.lookup("path", a.path.as_ref().map(|p| p.display().to_string()))? {
        Some(file) => {
            let p = io::read_path(&file)?;
            if p.grid() != grid {
                return Err(Error::Usage(format!(
                    "{file} has {} steps but n = {}",
                    p.grid().steps(),
                    grid.steps()
                )));
            }
            Ok(p)
        }
        None => {
            let x1 = end_state(s, a.x1.clone(), default_x1, x0.len())?;
            Path::linear(grid, x0, &x1)
        }
    }
}

fn cmd_om_eval(a: &OmEvalArgs) -> Result<()> {
    let mut s = Settings::load("om-eval", &a.common)?;
    let (drift, x0, x1) = drift_and_start(&mut s, &a.drift, "zero")?;
    let m = model(s.get("H", a.hurst, 0.5)?)?;
    let (out, seed, grid) = s.common(&a.common, 128)?;
    let phi = resolve_path(&mut s, &a.path, grid, &x0, x1)?;
    let particles = positive("N", s.get("N", a.path.particles, 2000)?)?;
    s.finish(&out)?;

    let law = scenarios::frozen_law(&drift, phi.initial(), &m, grid, particles, seed)?;
    let report = om_action(&phi, &drift, &law, &m)?;
    let mut rec = provenance("om-eval", &m, grid, seed);
    push(&mut rec, "drift", drift.name());
    push(&mut rec, "N", particles);
    extend_report(&mut rec, &report);
    io::write_record(out.join("om_report.txt"), &rec)
}

fn mpp_record(
    command: &str,
    m: &HurstModel,
    seed: u64,
    drift: &DriftSpec,
    particles: usize,
    r: &MppResult,
) -> Vec<(String, String)> {
    let mut rec = provenance(command, m, r.path.grid(), seed);
    push(&mut rec, "drift", drift.name());
    push(&mut rec, "N", particles);
    extend_report(&mut rec, &r.report);
    push(&mut rec, "iters", r.iters);
    push(&mut rec, "grad_norm", fmt_f64(r.grad_norm));
    push(&mut rec, "converged", r.converged);
    rec
}

/// Writes the solver output, including the best iterate of a failed line
/// search, before passing the error on.
fn write_mpp(
    dir: &FsPath,
    outcome: Result<MppResult>,
    record: impl Fn(&MppResult) -> Vec<(String, String)>,
) -> Result<MppResult> {
    let r = match outcome {
        Ok(r) => r,
        Err(Error::LineSearch { shrinks, best }) => {
            io::write_path(dir.join("mpp.csv"), &best.path)?;
            io::write_record(dir.join("mpp.txt"), &record(&best))?;
            return Err(Error::LineSearch { shrinks, best });
        }
        Err(e) => return Err(e),
    };
    io::write_path(dir.join("mpp.csv"), &r.path)?;
    io::write_record(dir.join("mpp.txt"), &record(&r))?;
    Ok(r)
}

fn cmd_mpp(a: &MppArgs) -> Result<()> {
    let mut s = Settings::load("mpp", &a.common)?;
    let (drift, x0, x1) = drift_and_start(&mut s, &a.drift, "example1-sine")?;
    let m = model(s.get("H", a.hurst, 0.5)?)?;
    let (out, seed, grid) = s.common(&a.common, 128)?;
    let x1 = end_state(&mut s, a.x1.clone(), x1, x0.len())?;
    let particles = positive("N", s.get("N", a.particles, 2000)?)?;
    let init = s.lookup("init", a.init.as_ref().map(|p| p.display().to_string()))?;
    let mut opts = solver(&mut s, &a.solver)?;
    if let Some(file) = init {
        opts.initial = Some(io::read_path(file)?);
    }
    s.finish(&out)?;

    let law = scenarios::frozen_law(&drift, &x0, &m, grid, particles, seed)?;
    io::write_path(out.join("law_mean.csv"), &law.mean_path())?;
    let outcome = minimize_action(&drift, &law, &m, &x0, &x1, grid, &opts);
    write_mpp(&out, outcome, |r| {
        mpp_record("mpp", &m, seed, &drift, particles, r)
    })?;
    Ok(())
}

fn cmd_ratio(a: &RatioArgs) -> Result<()> {
    let mut s = Settings::load("ratio", &a.common)?;
    let (drift, x0, x1) = drift_and_start(&mut s, &a.drift, "zero")?;
    let m = model(s.get("H", a.hurst, 0.5)?)?;
    let (out, seed, grid) = s.common(&a.common, 128)?;
    let phi = resolve_path(&mut s, &a.path, grid, &x0, x1)?;
    let particles = positive("N", s.get("N", a.path.particles, 2000)?)?;
    let nm = norm(&mut s, &a.norm)?;
    nm.check_admissible(&m)?;
    let eps = s.get("eps", a.eps, 1.0)?;
    let samples = s.get("M", a.samples, 20_000)?;
    let mut q = RatioQuery::new(eps, nm, samples, seed);
    q.law_particles = particles;
    q.validate()?;
    s.finish(&out)?;

    let cfg = EnsembleConfig::new(particles, rng::derive_seed(seed, rng::domain::LAW));
    let ensemble = simulate_ensemble_with(&drift, phi.initial(), &m, grid, &cfg)?;
    let law: LawPath = law_path(&ensemble, drift.law_mode());
    let est = estimate_ratio_with_law(&phi, &drift, &law, &m, &q)?;
    let report = om_action(&phi, &drift, &law, &m)?;
    let mut rec = provenance("ratio", &m, grid, seed);
    push(&mut rec, "drift", drift.name());
    push(&mut rec, "norm", nm.describe());
    push(&mut rec, "eps", eps);
    push(&mut rec, "M", samples);
    push(&mut rec, "N", particles);
    push(&mut rec, "gamma", fmt_f64(est.gamma));
    push(&mut rec, "std_error", fmt_f64(est.std_error));
    push(&mut rec, "ln_gamma", fmt_f64(est.gamma.ln()));
    push(&mut rec, "J", fmt_f64(report.j));
    push(&mut rec, "numerator_hits", est.numerator_hits);
    push(&mut rec, "denominator_hits", est.denominator_hits);
    push(&mut rec, "low_hits", est.low_hits);
    io::write_record(out.join("ratio.txt"), &rec)
}

fn cmd_small_ball(a: &SmallBallArgs) -> Result<()> {
    let mut s = Settings::load("small-ball", &a.common)?;
    let m = model(s.get("H", a.hurst, 0.5)?)?;
    let (out, seed, grid) = s.common(&a.common, 256)?;
    let nm = norm(&mut s, &a.norm)?;
    nm.check_admissible(&m)?;
    let eps = s.get("eps", a.eps.clone(), List(vec![0.6, 0.8, 1.0]))?.0;
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::Usage(format!("eps must be positive, got {e}")));
    }
    let samples = positive("M", s.get("M", a.samples, 20_000)?)?;
    let correction = s.get("continuity-correction", a.continuity_correction, false)?;
    s.finish(&out)?;

    let mut csv = String::from("eps,probability,std_error,hits,samples,low_hits,scaled_log\n");
    for &e in &eps {
        let q = SmallBallQuery {
            norm: nm,
            eps: e,
            samples,
            seed,
            continuity_correction: correction,
        };
        let est = estimate_small_ball(&m, grid, &q)?;
        let scaled = e.powf(1.0 / m.hurst) * est.probability.ln();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f64(e),
            fmt_f64(est.probability),
            fmt_f64(est.std_error),
            est.hits,
            est.samples,
            est.low_hits,
            fmt_f64(scaled)
        ));
    }
    fs::write(out.join("small_ball.csv"), csv)?;
    let mut rec = provenance("small-ball", &m, grid, seed);
    push(&mut rec, "norm", nm.describe());
    push(&mut rec, "M", samples);
    push(&mut rec, "continuity_correction", correction);
    io::write_record(out.join("run.txt"), &rec)
}

/// Shared parameters of the two example verbs.
struct ExampleSetup {
    out: PathBuf,
    seed: u64,
    grid: TimeGrid,
    models: Vec<HurstModel>,
    particles: usize,
    opts: MppOptions,
    settings: Settings,
}

fn example_setup(command: &'static str, a: &ExampleArgs) -> Result<ExampleSetup> {
    let mut s = Settings::load(command, &a.common)?;
    let hs = s.get("H", a.hurst.clone(), List(vec![0.3, 0.5, 0.7]))?.0;
    let models = hs.iter().map(|&h| model(h)).collect::<Result<Vec<_>>>()?;
    let (out, seed, grid) = s.common(&a.common, 128)?;
    let particles = positive("N", s.get("N", a.particles, 2000)?)?;
    let opts = solver(&mut s, &a.solver)?;
    Ok(ExampleSetup {
        out,
        seed,
        grid,
        models,
        particles,
        opts,
        settings: s,
    })
}

fn cmd_example1(a: &ExampleArgs) -> Result<()> {
    let mut e = example_setup("example1", a)?;
    let bundle = e.settings.get("bundle", a.bundle, 20)?;
    let tube = e.settings.get("tube", a.tube, 1.0)?;
    if !(tube > 0.0) {
        return Err(Error::Usage(format!("tube must be positive, got {tube}")));
    }
    let tries = e
        .settings
        .get("bundle-tries", a.bundle_tries, 100 * bundle)?;
    e.settings.finish(&e.out)?;

    let drift = DriftSpec::example1_sine();
    for m in &e.models {
        let dir = hurst_dir(&e.out, m.hurst);
        fs::create_dir_all(dir.join("bundle"))?;
        let law = scenarios::example1_law(m, e.grid, e.particles, e.seed)?;
        io::write_path(dir.join("law_mean.csv"), &law.mean_path())?;
        let r = write_mpp(&dir, scenarios::example1_mpp(m, &law, &e.opts), |r| {
            mpp_record("example1", m, e.seed, &drift, e.particles, r)
        })?;
        let mut rec = provenance("example1", m, e.grid, e.seed);
        extend_report(&mut rec, &r.report);
        io::write_record(dir.join("om_report.txt"), &rec)?;

        // Sample paths of the frozen-law equation that stay in the sup tube
        // around the most probable path, in stream order.
        let sampler = FbmSampler::new(e.grid, *m, FbmMethod::Volterra)?;
        let bundle_seed = rng::derive_seed(e.seed, rng::domain::BUNDLE);
        let mut kept = 0;
        let mut tried = 0;
        while kept < bundle && tried < tries {
            let noise = sampler.sample_path(1, bundle_seed, tried as u64);
            tried += 1;
            let x = simulate_frozen_law(&drift, &[scenarios::EXAMPLE1_START], &law, &noise)?;
            if Norm::Sup.eval(&x.difference(&r.path)?) <= tube {
                io::write_path(dir.join("bundle").join(format!("path_{kept:03}.csv")), &x)?;
                kept += 1;
            }
        }
        let mut rec = provenance("example1", m, e.grid, e.seed);
        push(&mut rec, "norm", "sup");
        push(&mut rec, "tube", tube);
        push(&mut rec, "kept", kept);
        push(&mut rec, "tried", tried);
        io::write_record(dir.join("bundle.txt"), &rec)?;
    }
    Ok(())
}

fn cmd_example2(a: &ExampleArgs) -> Result<()> {
    let e = example_setup("example2", a)?;
    let ExampleSetup {
        out,
        seed,
        grid,
        models,
        particles,
        opts,
        mut settings,
    } = e;
    // The bundle keys belong to example1; reading them here keeps a shared
    // config file usable by both verbs.
    settings.lookup("bundle", a.bundle)?;
    settings.lookup("tube", a.tube)?;
    settings.lookup("bundle-tries", a.bundle_tries)?;
    settings.finish(&out)?;

    let drift = DriftSpec::example2_pendulum();
    let reference = pendulum_reference(grid);
    io::write_path(out.join("reference.csv"), &reference)?;
    let mut summary = String::from("H,gap_angle,gap_sup,J,converged\n");
    for m in &models {
        let dir = hurst_dir(&out, m.hurst);
        fs::create_dir_all(&dir)?;
        let law = scenarios::example2_law(m, grid, particles, seed)?;
        io::write_path(dir.join("law_mean.csv"), &law.mean_path())?;
        let r = write_mpp(&dir, scenarios::example2_mpp(m, &law, &opts), |r| {
            mpp_record("example2", m, seed, &drift, particles, r)
        })?;
        io::write_path(dir.join("reference.csv"), &reference)?;
        let diff = r.path.difference(&reference)?;
        let gap_angle = diff.component(0).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let gap_sup = Norm::Sup.eval(&diff);
        let mut rec = provenance("example2", m, grid, seed);
        push(&mut rec, "norm", "sup");
        push(&mut rec, "gap_angle", fmt_f64(gap_angle));
        push(&mut rec, "gap_sup", fmt_f64(gap_sup));
        push(&mut rec, "J", fmt_f64(r.j));
        push(&mut rec, "converged", r.converged);
        io::write_record(dir.join("gap.txt"), &rec)?;
        summary.push_str(&format!(
            "{},{},{},{},{}\n",
            m.hurst,
            fmt_f64(gap_angle),
            fmt_f64(gap_sup),
            fmt_f64(r.j),
            r.converged
        ));
    }
    fs::write(out.join("gaps.csv"), summary)?;
    Ok(())
}
