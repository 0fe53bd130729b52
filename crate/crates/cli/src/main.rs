//! `histwalk`: validate model configs, print predictions and run the Monte
//! Carlo experiments.
//!
//! Exit codes: 0 success, 1 domain error or failed validation, 2 usage or
//! parse error, 3 budget or censoring problem.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use histwalk_core::experiments::{self, StepsRule, DEFAULT_EXIT_CAP};
use histwalk_core::theory::{self, DEFAULT_TIE_TOL};
use histwalk_core::{
    simulator, Error, ExtendedReal, ModelSpec, RandomStream, RateFunction, Version,
};

use config::{parse_list, parse_range, Config};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(Error),
    Budget(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(Error::ExcessCensoring { .. } | Error::InsufficientData(_)) => 3,
            CliError::Budget(_) => 3,
            CliError::Domain(_) | CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Budget(m) | CliError::Io(m) => f.write_str(m),
            CliError::Domain(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

#[derive(Parser)]
#[command(
    name = "histwalk",
    version,
    about = "Random walks steered by the average of their recent steps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model assumptions; exit 1 if any fails.
    Validate { config: PathBuf },
    /// Exponents, the limiting-speed prediction and all per-regime orders.
    Predict {
        config: PathBuf,
        #[arg(long)]
        tie_tol: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Estimate the speed at the configured window.
    Simulate(SimulateArgs),
    /// Estimate the speed over a grid of windows.
    Sweep(SweepArgs),
    /// Tabulate the rate function of one regime.
    Ratefn {
        config: PathBuf,
        /// Regime whose law is used.
        #[arg(long)]
        dist: usize,
        /// Grid as start:stop:step, inclusive.
        #[arg(long, allow_hyphen_values = true)]
        r_grid: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit the block-variable exponents of one regime.
    Blocks(SingleRegimeArgs),
    /// Fit exit-side and exit-time exponents of one regime.
    Exits {
        #[command(flatten)]
        common: SingleRegimeArgs,
        /// Step cap per exit sample.
        #[arg(long)]
        cap: Option<u64>,
    },
    /// Probability that the running mean of one regime stays above r.
    Persistence {
        config: PathBuf,
        #[arg(long)]
        regime: usize,
        #[arg(long, allow_hyphen_values = true)]
        r: f64,
        /// Comma-separated, increasing.
        #[arg(long, default_value = "1,10,100,1000,10000")]
        horizons: String,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_parser = parse_version)]
    version: Option<Version>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    /// Overrides the model's window.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// CSV of `n, X_n, regime, window_avg` for replica 0 at geometric checkpoints.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Comma-separated, increasing.
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long, value_parser = parse_version)]
    version: Option<Version>,
    /// Fixed steps per grid point instead of the steps rule.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    /// CSV of `N, est_speed, stderr, predicted_speed, gap`.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Full JSON report.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SingleRegimeArgs {
    config: PathBuf,
    #[arg(long)]
    regime: usize,
    /// Overrides the regime's lower threshold.
    #[arg(long, allow_hyphen_values = true)]
    r_lo: Option<f64>,
    /// Overrides the regime's upper threshold.
    #[arg(long, allow_hyphen_values = true)]
    r_hi: Option<f64>,
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_version(s: &str) -> Result<Version, String> {
    match s {
        "delayed" => Ok(Version::Delayed),
        "instantaneous" => Ok(Version::Instantaneous),
        _ => Err(format!("expected delayed or instantaneous, got {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn warn(lines: &[String]) {
    for w in lines {
        eprintln!("warning: {w}");
    }
}

/// Progress lines go to stdout unless stdout carries the report itself.
fn summary(line: &str, stdout_busy: bool) {
    if stdout_busy {
        eprintln!("{line}");
    } else {
        println!("{line}");
    }
}

fn grid(flag: Option<&str>, fallback: Option<&Vec<usize>>) -> Result<Vec<usize>, CliError> {
    match (flag, fallback) {
        (Some(s), _) => parse_list(s).map_err(|e| CliError::Usage(format!("--n-grid: {e}"))),
        (None, Some(g)) => Ok(g.clone()),
        (None, None) => Err(CliError::Usage(
            "no N grid: pass --n-grid or set run.n_grid".into(),
        )),
    }
}

fn seed(flag: Option<u64>, cfg: &Config) -> Result<u64, CliError> {
    flag.or(cfg.run.seed)
        .ok_or_else(|| CliError::Usage("no seed: pass --seed or set run.seed".into()))
}

fn regime_law(spec: &ModelSpec, regime: usize) -> Result<(), CliError> {
    if regime > spec.l() {
        return Err(CliError::Usage(format!(
            "regime {regime} outside 0..={}",
            spec.l()
        )));
    }
    Ok(())
}

fn run(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Validate { config } => {
            let cfg = config::load(&config)?;
            let report = theory::validate(&cfg.model);
            output::emit_json(&report, None)?;
            Ok(if report.passed { 0 } else { 1 })
        }
        Command::Predict {
            config,
            tie_tol,
            output,
        } => {
            let cfg = config::load(&config)?;
            let tol = tie_tol.or(cfg.run.tie_tol).unwrap_or(DEFAULT_TIE_TOL);
            let report = theory::theory_report(&cfg.model, tol)?;
            warn(&report.warnings);
            output::emit_json(&report, output.as_deref().or(cfg.run.output.as_deref()))?;
            Ok(0)
        }
        Command::Simulate(args) => simulate(args),
        Command::Sweep(args) => sweep(args),
        Command::Ratefn {
            config,
            dist,
            r_grid,
            output,
        } => {
            let cfg = config::load(&config)?;
            regime_law(&cfg.model, dist)?;
            let grid =
                parse_range(&r_grid).map_err(|e| CliError::Usage(format!("--r-grid: {e}")))?;
            let rf = RateFunction::new(cfg.model.dists[dist].clone());
            let points = grid
                .into_iter()
                .map(|r| rf.solve(r))
                .collect::<Result<Vec<_>, _>>()?;
            output::emit_bytes(&output::ratefn_csv(&points), output.as_deref())?;
            Ok(0)
        }
        Command::Blocks(args) => {
            let cfg = config::load(&args.config)?;
            let (dist, lo, hi) = single_regime(&cfg, &args)?;
            let n_grid = grid(args.n_grid.as_deref(), cfg.run.n_grid.as_ref())?;
            let samples = args.samples.or(cfg.run.samples).unwrap_or(1_000_000);
            let report = experiments::fit_block_exponents(
                &dist,
                lo,
                hi,
                &n_grid,
                samples,
                seed(args.seed, &cfg)?,
            )?;
            let out = args.output.as_deref().or(cfg.run.output.as_deref());
            for c in &report.counts {
                summary(
                    &format!(
                        "N={} plus1={} minus1={} minus11={} zero={}",
                        c.window, c.plus1, c.minus1, c.minus11, c.zero
                    ),
                    out.is_none(),
                );
            }
            output::emit_json(&report, out)?;
            Ok(0)
        }
        Command::Exits { common, cap } => {
            let cfg = config::load(&common.config)?;
            let (dist, lo, hi) = single_regime(&cfg, &common)?;
            let n_grid = grid(common.n_grid.as_deref(), cfg.run.n_grid.as_ref())?;
            let samples = common.samples.or(cfg.run.samples).unwrap_or(10_000);
            let cap = cap.or(cfg.run.exit_cap).unwrap_or(DEFAULT_EXIT_CAP);
            let report = experiments::fit_exit_statistics(
                &dist,
                lo,
                hi,
                &n_grid,
                samples,
                cap,
                seed(common.seed, &cfg)?,
            )?;
            let out = common.output.as_deref().or(cfg.run.output.as_deref());
            for r in &report.rows {
                summary(
                    &format!(
                        "N={} p_down={:.4} mean_tau={:.2} censored={}",
                        r.window, r.p_down, r.mean_tau, r.censored
                    ),
                    out.is_none(),
                );
            }
            output::emit_json(&report, out)?;
            Ok(0)
        }
        Command::Persistence {
            config,
            regime,
            r,
            horizons,
            samples,
            seed: seed_flag,
            output,
        } => {
            let cfg = config::load(&config)?;
            regime_law(&cfg.model, regime)?;
            let horizons: Vec<usize> =
                parse_list(&horizons).map_err(|e| CliError::Usage(format!("--horizons: {e}")))?;
            let samples = samples.or(cfg.run.samples).unwrap_or(100_000);
            let curve = experiments::persistence_curve(
                &cfg.model.dists[regime],
                r,
                &horizons,
                samples,
                seed(seed_flag, &cfg)?,
            )?;
            output::emit_json(&curve, output.as_deref().or(cfg.run.output.as_deref()))?;
            Ok(0)
        }
    }
}

fn single_regime(
    cfg: &Config,
    args: &SingleRegimeArgs,
) -> Result<
    (
        histwalk_core::IncrementDistribution,
        ExtendedReal,
        ExtendedReal,
    ),
    CliError,
> {
    let spec = &cfg.model;
    regime_law(spec, args.regime)?;
    let lo = args
        .r_lo
        .map(ExtendedReal::Finite)
        .unwrap_or(spec.lower(args.regime));
    let hi = args
        .r_hi
        .map(ExtendedReal::Finite)
        .unwrap_or(spec.upper(args.regime));
    Ok((spec.dists[args.regime].clone(), lo, hi))
}

fn simulate(args: SimulateArgs) -> Result<u8, CliError> {
    let cfg = config::load(&args.config)?;
    let spec = match args.window {
        Some(n) => cfg.model.with_window(n),
        None => cfg.model.clone(),
    };
    spec.check_structure()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let version = args.version.or(cfg.run.version).unwrap_or(Version::Delayed);
    let steps = args
        .steps
        .or(cfg.run.steps)
        .ok_or_else(|| CliError::Usage("no step budget: pass --steps or set run.steps".into()))?;
    let replicas = args.replicas.or(cfg.run.replicas).unwrap_or(4);
    if replicas < 2 {
        return Err(CliError::Usage(format!(
            "need at least 2 replicas, got {replicas}"
        )));
    }
    check_steps(&spec, steps)?;

    let report = experiments::estimate_speed(&spec, version, steps, replicas, args.seed)?;
    warn(&report.warnings);
    let out = args.output.as_deref().or(cfg.run.output.as_deref());
    summary(
        &format!(
            "N={} est_speed={:.6} stderr={:.6} completed_sojourns={}",
            report.window,
            report.est_speed,
            report.stderr,
            report
                .per_regime
                .iter()
                .map(|r| r.completed_sojourns)
                .sum::<u64>()
        ),
        out.is_none(),
    );
    if let Some(path) = &args.trace {
        write_trace(&spec, version, steps, args.seed, path)?;
    }
    output::emit_json(&report, out)?;
    Ok(0)
}

fn check_steps(spec: &ModelSpec, steps: u64) -> Result<(), CliError> {
    let min = 50 * spec.window as u64;
    if steps < min {
        return Err(CliError::Budget(format!(
            "steps = {steps} is below 50 N = {min}"
        )));
    }
    Ok(())
}

/// Replica 0 of the simulation, replayed with the same stream.
fn write_trace(
    spec: &ModelSpec,
    version: Version,
    steps: u64,
    seed: u64,
    path: &Path,
) -> Result<(), CliError> {
    let out = simulator::run(spec, version, steps, &mut RandomStream::derive2(seed, 0, 0))?;
    output::write_atomic(path, &output::trace_csv(&out.checkpoints))
}

fn sweep(args: SweepArgs) -> Result<u8, CliError> {
    let cfg = config::load(&args.config)?;
    let version = args.version.or(cfg.run.version).unwrap_or(Version::Delayed);
    let n_grid = grid(args.n_grid.as_deref(), cfg.run.n_grid.as_ref())?;
    let replicas = args.replicas.or(cfg.run.replicas).unwrap_or(4);
    if replicas < 2 {
        return Err(CliError::Usage(format!(
            "need at least 2 replicas, got {replicas}"
        )));
    }
    let rule = match args.steps {
        Some(steps) => StepsRule::Fixed { steps },
        None => cfg.run.steps_rule.unwrap_or_default(),
    };
    if let StepsRule::Fixed { steps } = rule {
        for &n in &n_grid {
            check_steps(&cfg.model.with_window(n), steps)?;
        }
    }
    let report =
        experiments::sweep_window(&cfg.model, version, &n_grid, rule, replicas, args.seed)?;
    warn(&report.warnings);
    let json_out = args.output.as_deref().or(cfg.run.output.as_deref());
    let stdout_busy = args.csv.is_none() && json_out.is_none();
    for r in &report.rows {
        summary(
            &format!(
                "N={} steps={} est_speed={:.6} stderr={:.6} gap={:.6}",
                r.window, r.steps, r.est_speed, r.stderr, r.gap
            ),
            stdout_busy,
        );
    }
    let v = &report.verdict;
    summary(
        &format!(
            "predicted_speed={} final_gap={:.6} non_increasing_within_noise={} ({})",
            report.predicted_speed, v.final_gap, v.non_increasing_within_noise, v.note
        ),
        stdout_busy,
    );
    if let Some(p) = json_out {
        output::emit_json(&report, Some(p))?;
    }
    if args.csv.is_some() || json_out.is_none() {
        output::emit_bytes(&output::sweep_csv(&report), args.csv.as_deref())?;
    }
    Ok(0)
}
