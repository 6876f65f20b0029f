//! Command-line interface: argument/config handling, the four subcommands,
//! and deterministic CSV emission.
//!
//! Exit codes: 0 success, 2 configuration error, 3 fixed-point
//! non-convergence, 4 divergence (blow-up abort), 5 I/O failure.
//! Options can also come from a flat `key = value` config file
//! (`--config`); explicit flags win over file entries.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::csv::{format_f64, Cell, CsvError, Table};
use crate::experiments::{
    self, blowup_study, convergence_study, run_simulation, RegressionFit, RunLength, RunOutcome,
    RunRecord,
};
use crate::grid::{Grid, GridFunction};
use crate::scheme::{DtPolicy, SchemeConfig};
use crate::verify;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("fixed-point iteration failed to converge (step {0})")]
    NoConvergence(usize),
    #[error("run diverged (step {0})")]
    Diverged(usize),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::NoConvergence(_) => 3,
            AppError::Diverged(_) => 4,
            AppError::Io(_) => 5,
            AppError::VerifyFailed(_) => 1,
        }
    }
}

impl From<CsvError> for AppError {
    fn from(e: CsvError) -> Self {
        AppError::Io(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "mhs",
    about = "Conservative finite-difference solver for the modified Hunter-Saxton equation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate the benchmark initial data and emit the invariant time series.
    Simulate(SimulateArgs),
    /// Grid-refinement convergence study against a nested reference run.
    Converge(ConvergeArgs),
    /// Adaptive-step blow-up run with inverse-norm regression.
    Blowup(BlowupArgs),
    /// Spectral-vs-dense oracle gate and inequality suite at desk scale.
    VerifyOperators(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Flat key = value config file; explicit flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Nonzero constant ω of the equation.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Domain circumference L.
    #[arg(long)]
    pub length: Option<f64>,
    /// Relative fixed-point stopping tolerance.
    #[arg(long = "fp-tol")]
    pub fp_tol: Option<f64>,
    /// Ball-radius factor p > 1 used by the step-size bounds.
    #[arg(long)]
    pub p: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for randomized checks (logged for reproducibility).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of grid cells K.
    #[arg(long = "K")]
    pub cells: Option<usize>,
    /// Amplitude a of the benchmark initial profile.
    #[arg(long)]
    pub a: Option<f64>,
    /// Initial data file (x,u CSV with exactly K rows) instead of --a.
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// Step-size policy: fixed, auto, or adaptive.
    #[arg(long = "dt-policy")]
    pub dt_policy: Option<String>,
    /// Step size (fixed policy) or initial step (adaptive policy).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Safety factor of the adaptive rule.
    #[arg(long)]
    pub safety: Option<f64>,
    /// Number of steps to take.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Alternative stop rule: integrate until this time.
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// Emit a full-field snapshot every N steps.
    #[arg(long = "snapshot-every")]
    pub snapshot_every: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Amplitude a of the benchmark initial profile.
    #[arg(long)]
    pub a: Option<f64>,
    /// Refinement ladder as K:M pairs, e.g. 32:100,64:200.
    #[arg(long)]
    pub ladder: Option<String>,
    /// Reference run as K:M.
    #[arg(long)]
    pub reference: Option<String>,
    /// Common final time of all runs.
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct BlowupArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of grid cells K.
    #[arg(long = "K")]
    pub cells: Option<usize>,
    /// Amplitude a of the benchmark initial profile.
    #[arg(long)]
    pub a: Option<f64>,
    /// Initial step size of the adaptive rule.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Safety factor of the adaptive rule.
    #[arg(long)]
    pub safety: Option<f64>,
    /// Number of steps to take.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Trailing fraction of the series used for regression.
    #[arg(long)]
    pub window: Option<f64>,
    /// Emit a full-field snapshot every N steps.
    #[arg(long = "snapshot-every")]
    pub snapshot_every: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of grid cells K (at most 64).
    #[arg(long = "K")]
    pub cells: Option<usize>,
    /// Random trials per inequality.
    #[arg(long)]
    pub trials: Option<usize>,
}

/// Flat `key = value` file; `#` starts a comment.
fn load_config_file(path: &Path) -> Result<HashMap<String, String>, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(AppError::Config(format!(
                "{}:{}: expected key = value, got {raw:?}",
                path.display(),
                idx + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

struct Options {
    file: HashMap<String, String>,
}

impl Options {
    fn new(common: &CommonArgs) -> Result<Self, AppError> {
        let file = match &common.config {
            Some(path) => load_config_file(path)?,
            None => HashMap::new(),
        };
        Ok(Self { file })
    }

    fn get<T: std::str::FromStr>(&self, key: &str, cli: Option<T>) -> Result<Option<T>, AppError> {
        if cli.is_some() {
            return Ok(cli);
        }
        match self.file.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| AppError::Config(format!("bad value for {key}: {raw:?}"))),
            None => Ok(None),
        }
    }

    fn pick<T: std::str::FromStr>(
        &self,
        key: &str,
        cli: Option<T>,
        default: T,
    ) -> Result<T, AppError> {
        Ok(self.get(key, cli)?.unwrap_or(default))
    }
}

fn validated_grid(length: f64, cells: usize) -> Result<Grid, AppError> {
    Grid::new(length, cells).map_err(|e| AppError::Config(e.to_string()))
}

fn validated_scheme(cfg: SchemeConfig) -> Result<SchemeConfig, AppError> {
    cfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
    Ok(cfg)
}

fn ensure_out_dir(out: &Option<PathBuf>) -> Result<PathBuf, AppError> {
    let dir = out
        .clone()
        .ok_or_else(|| AppError::Config("--out DIR is required".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| AppError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn outcome_to_result(outcome: RunOutcome) -> Result<(), AppError> {
    match outcome {
        RunOutcome::Completed => Ok(()),
        RunOutcome::NoConvergence { step } => Err(AppError::NoConvergence(step)),
        RunOutcome::Diverged { step } => Err(AppError::Diverged(step)),
    }
}

fn experiment_err(e: experiments::ExperimentError) -> AppError {
    use experiments::ExperimentError as E;
    match e {
        E::Run { step, source } => match source {
            crate::scheme::StepError::Diverged { .. } => AppError::Diverged(step),
            crate::scheme::StepError::NoConvergence { .. } => AppError::NoConvergence(step),
        },
        other => AppError::Config(other.to_string()),
    }
}

fn timeseries_table(record: &RunRecord) -> Table {
    let mut table = Table::new(&[
        "m", "t", "dt", "hd", "fd", "mean", "sup_u", "sup_ux", "sup_uxx", "fp_iters",
    ]);
    for row in &record.rows {
        table.push(vec![
            Cell::Int(row.step as i64),
            Cell::Float(row.t),
            Cell::Float(row.dt),
            Cell::Float(row.hd),
            Cell::Float(row.fd),
            Cell::Float(row.mean),
            Cell::Float(row.sup_u),
            Cell::Float(row.sup_ux),
            Cell::Float(row.sup_uxx),
            Cell::Int(row.fp_iters as i64),
        ]);
    }
    table
}

fn write_snapshots(dir: &Path, record: &RunRecord) -> Result<(), AppError> {
    if record.snapshots.is_empty() {
        return Ok(());
    }
    let snap_dir = dir.join("snapshots");
    std::fs::create_dir_all(&snap_dir)
        .map_err(|e| AppError::Io(format!("{}: {e}", snap_dir.display())))?;
    for (step, field) in &record.snapshots {
        let mut table = Table::new(&["x", "u"]);
        for (k, &u) in field.values().iter().enumerate() {
            table.push(vec![
                Cell::Float(field.grid().point(k)),
                Cell::Float(u),
            ]);
        }
        table.write(&snap_dir.join(format!("snapshot_{step:08}.csv")))?;
    }
    Ok(())
}

fn load_initial(path: &Path, grid: Grid) -> Result<GridFunction, AppError> {
    let table = Table::read(path)?;
    if table.rows.len() != grid.cells() {
        return Err(AppError::Config(format!(
            "{}: expected {} rows of initial data, found {}",
            path.display(),
            grid.cells(),
            table.rows.len()
        )));
    }
    let values = table
        .rows
        .iter()
        .map(|row| {
            row.last()
                .and_then(|c| c.as_f64())
                .ok_or_else(|| AppError::Config(format!("{}: non-numeric sample", path.display())))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(GridFunction::new(grid, values))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), AppError> {
    let opt = Options::new(&args.common)?;
    let omega = opt.pick("omega", args.common.omega, 0.5)?;
    let length = opt.pick("length", args.common.length, 1.0)?;
    let cells = opt.pick("K", args.cells, 128)?;
    let amplitude = opt.pick("a", args.a, 0.01)?;
    let fp_tol = opt.pick("fp-tol", args.common.fp_tol, 1e-13)?;
    let ball_factor = opt.pick("p", args.common.p, 2.0)?;
    let policy_name = opt.pick("dt-policy", args.dt_policy.clone(), "auto".to_string())?;
    let dt = opt.get("dt", args.dt)?;
    let safety = opt.pick("safety", args.safety, 1.5)?;
    let steps = opt.get("steps", args.steps)?;
    let t_end = opt.get("t-end", args.t_end)?;
    let snapshot_every = opt.get("snapshot-every", args.snapshot_every)?;

    let grid = validated_grid(length, cells)?;
    let dt_policy = match policy_name.as_str() {
        "fixed" => DtPolicy::Fixed {
            dt: dt.ok_or_else(|| AppError::Config("fixed policy needs --dt".into()))?,
        },
        "auto" => DtPolicy::Auto {
            ball_factor,
        },
        "adaptive" => DtPolicy::Adaptive {
            dt0: dt.ok_or_else(|| AppError::Config("adaptive policy needs --dt".into()))?,
            safety,
        },
        other => {
            return Err(AppError::Config(format!(
                "unknown dt policy {other:?} (expected fixed, auto, or adaptive)"
            )))
        }
    };
    let mut cfg = SchemeConfig::new(omega).with_policy(dt_policy);
    cfg.fp_tol = fp_tol;
    cfg.ball_factor = ball_factor;
    let cfg = validated_scheme(cfg)?;

    let run_length = match (steps, t_end) {
        (Some(n), None) => {
            if n == 0 {
                return Err(AppError::Config("--steps must be positive".into()));
            }
            RunLength::Steps(n)
        }
        (None, Some(t)) => {
            if !(t > 0.0) {
                return Err(AppError::Config("--t-end must be positive".into()));
            }
            RunLength::UntilTime(t)
        }
        (None, None) => return Err(AppError::Config("need --steps or --t-end".into())),
        (Some(_), Some(_)) => {
            return Err(AppError::Config("--steps and --t-end are exclusive".into()))
        }
    };

    let u0 = match &args.initial {
        Some(path) => load_initial(path, grid)?,
        None => experiments::sample_initial(amplitude, grid),
    };

    let out = ensure_out_dir(&args.common.out)?;
    let record = run_simulation(&cfg, &u0, run_length, snapshot_every).map_err(experiment_err)?;
    timeseries_table(&record).write(&out.join("timeseries.csv"))?;
    write_snapshots(&out, &record)?;
    println!(
        "simulate: {} steps to t = {}, dt plan = {} (eps1 = {}, eps2 = {})",
        record.rows.last().map(|r| r.step).unwrap_or(0),
        format_f64(record.rows.last().map(|r| r.t).unwrap_or(0.0)),
        format_f64(record.plan.dt),
        format_f64(record.plan.eps1),
        format_f64(record.plan.eps2),
    );
    outcome_to_result(record.outcome)
}

fn parse_pair(text: &str) -> Result<(usize, usize), AppError> {
    let (k, m) = text
        .split_once(':')
        .ok_or_else(|| AppError::Config(format!("expected K:M, got {text:?}")))?;
    let k = k
        .trim()
        .parse()
        .map_err(|_| AppError::Config(format!("bad K in {text:?}")))?;
    let m = m
        .trim()
        .parse()
        .map_err(|_| AppError::Config(format!("bad M in {text:?}")))?;
    Ok((k, m))
}

pub fn cmd_converge(args: &ConvergeArgs) -> Result<(), AppError> {
    let opt = Options::new(&args.common)?;
    let omega = opt.pick("omega", args.common.omega, 0.5)?;
    let length = opt.pick("length", args.common.length, 1.0)?;
    let amplitude = opt.pick("a", args.a, 0.01)?;
    let fp_tol = opt.pick("fp-tol", args.common.fp_tol, 1e-13)?;
    let t_end = opt.pick("t-end", args.t_end, 10.0)?;
    let ladder_text = opt.pick(
        "ladder",
        args.ladder.clone(),
        "32:100,64:200,128:400,256:800,512:1600,1024:3200".to_string(),
    )?;
    let reference_text = opt.pick("reference", args.reference.clone(), "2048:6400".to_string())?;

    let ladder = ladder_text
        .split(',')
        .map(parse_pair)
        .collect::<Result<Vec<_>, _>>()?;
    if ladder.is_empty() {
        return Err(AppError::Config("ladder must not be empty".into()));
    }
    let reference = parse_pair(&reference_text)?;

    let mut cfg = SchemeConfig::new(omega);
    cfg.fp_tol = fp_tol;
    let cfg = validated_scheme(cfg)?;
    let out = ensure_out_dir(&args.common.out)?;

    let rows = convergence_study(&cfg, length, amplitude, &ladder, reference, t_end)
        .map_err(experiment_err)?;

    let mut table = Table::new(&["K", "M", "dx", "dt", "linf_error", "observed_order"]);
    for row in &rows {
        table.push(vec![
            Cell::Int(row.cells as i64),
            Cell::Int(row.steps as i64),
            Cell::Float(row.dx),
            Cell::Float(row.dt),
            Cell::Float(row.linf_error),
            row.observed_order.map(Cell::Float).unwrap_or(Cell::Empty),
        ]);
    }
    table.write(&out.join("convergence.csv"))?;

    let mut meta = Table::new(&["K", "M", "dx", "dt"]);
    meta.push(vec![
        Cell::Int(reference.0 as i64),
        Cell::Int(reference.1 as i64),
        Cell::Float(length / reference.0 as f64),
        Cell::Float(t_end / reference.1 as f64),
    ]);
    meta.write(&out.join("reference.csv"))?;

    for row in &rows {
        println!(
            "K = {:5}  error = {}  order = {}",
            row.cells,
            format_f64(row.linf_error),
            row.observed_order.map(|q| format!("{q:.3}")).unwrap_or_default(),
        );
    }
    Ok(())
}

fn fits_table(fit_ux: &RegressionFit, fit_uxx: &RegressionFit) -> Table {
    let mut table = Table::new(&[
        "quantity",
        "slope",
        "intercept",
        "r_squared",
        "estimated_time",
        "window",
    ]);
    for (name, fit) in [("inv_sup_ux", fit_ux), ("inv_sqrt_sup_uxx", fit_uxx)] {
        table.push(vec![
            Cell::Text(name.into()),
            Cell::Float(fit.slope),
            Cell::Float(fit.intercept),
            Cell::Float(fit.r_squared),
            fit.estimated_root.map(Cell::Float).unwrap_or(Cell::Empty),
            Cell::Float(fit.window),
        ]);
    }
    table
}

pub fn cmd_blowup(args: &BlowupArgs) -> Result<(), AppError> {
    let opt = Options::new(&args.common)?;
    let omega = opt.pick("omega", args.common.omega, 0.5)?;
    let length = opt.pick("length", args.common.length, 1.0)?;
    let cells = opt.pick("K", args.cells, 2048)?;
    let amplitude = opt.pick("a", args.a, 0.1)?;
    let fp_tol = opt.pick("fp-tol", args.common.fp_tol, 1e-13)?;
    let dt0 = opt.pick("dt", args.dt, 1e-4)?;
    let safety = opt.pick("safety", args.safety, 1.5)?;
    let steps = opt.pick("steps", args.steps, 80_000)?;
    let window = opt.pick("window", args.window, 2.0 / 3.0)?;
    let snapshot_every = opt.get("snapshot-every", args.snapshot_every)?;

    if steps == 0 {
        return Err(AppError::Config("--steps must be positive".into()));
    }
    let grid = validated_grid(length, cells)?;
    let mut cfg = SchemeConfig::new(omega).with_policy(DtPolicy::Adaptive { dt0, safety });
    cfg.fp_tol = fp_tol;
    let cfg = validated_scheme(cfg)?;
    let out = ensure_out_dir(&args.common.out)?;

    let study =
        blowup_study(&cfg, grid, amplitude, steps, window, snapshot_every).map_err(experiment_err)?;

    let mut norms = Table::new(&["m", "t", "dt", "sup_ux", "sup_uxx"]);
    for row in &study.record.rows {
        norms.push(vec![
            Cell::Int(row.step as i64),
            Cell::Float(row.t),
            Cell::Float(row.dt),
            Cell::Float(row.sup_ux),
            Cell::Float(row.sup_uxx),
        ]);
    }
    norms.write(&out.join("norms.csv"))?;
    fits_table(&study.fit_ux, &study.fit_uxx).write(&out.join("fits.csv"))?;
    write_snapshots(&out, &study.record)?;

    for (name, fit) in [("T(2)", &study.fit_ux), ("T(inf)", &study.fit_uxx)] {
        match fit.estimated_root {
            Some(root) => println!("{name} = {root:.4}  (R² = {:.5})", fit.r_squared),
            None => println!("{name}: no root in window (slope too flat)"),
        }
    }
    outcome_to_result(study.record.outcome)
}

pub fn cmd_verify_operators(args: &VerifyArgs) -> Result<(), AppError> {
    let opt = Options::new(&args.common)?;
    let length = opt.pick("length", args.common.length, 1.0)?;
    let cells = opt.pick("K", args.cells, 16)?;
    let seed = opt.pick("seed", args.common.seed, 7)?;
    let trials = opt.pick("trials", args.trials, 1000)?;

    if cells > crate::spectral::DENSE_ORACLE_MAX_CELLS {
        return Err(AppError::Config(format!(
            "verify-operators is desk-scale: K must be at most {}",
            crate::spectral::DENSE_ORACLE_MAX_CELLS
        )));
    }
    let grid = validated_grid(length, cells)?;
    println!("verify-operators: K = {cells}, L = {length}, seed = {seed}, trials = {trials}");

    let mut checks = verify::operator_oracle_checks(grid, 1e-11);
    checks.extend(verify::pinv_norm_checks(length, &[2, 4, 8, 16, 32, 64]));
    checks.extend(verify::inequality_checks(grid, seed, trials));

    let mut first_failure = None;
    for check in &checks {
        println!(
            "{:<34} worst {:+.3e}  tol {:.1e}  {}",
            check.name,
            check.worst,
            check.tol,
            if check.pass { "PASS" } else { "FAIL" }
        );
        if !check.pass && first_failure.is_none() {
            first_failure = Some(check.name.clone());
        }
    }
    match first_failure {
        None => Ok(()),
        Some(name) => Err(AppError::VerifyFailed(name)),
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run_from<I, T>(args: I) -> Result<(), AppError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| AppError::Config(e.to_string()))?;
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Converge(args) => cmd_converge(args),
        Command::Blowup(args) => cmd_blowup(args),
        Command::VerifyOperators(args) => cmd_verify_operators(args),
    }
}
