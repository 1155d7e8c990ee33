//! Command-line driver: configuration, orchestration and CSV/JSON emission.

pub mod checks;
pub mod commands;
pub mod config;
pub mod output;
pub mod repro;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use thiserror::Error;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{0}")]
    Core(#[from] ldp_sgd::Error),
    #[error("{0} check(s) failed")]
    CheckFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use ldp_sgd::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidArgument(_) | E::Spec(_)) => 2,
            CliError::Core(_) | CliError::Io(_) | CliError::Numeric(_) => 3,
            CliError::CheckFailed(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ldp-sgd", version, about = "Large-deviation rates and tail experiments for SGD")]
pub struct Cli {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (falls back to the config file, then LDP_SGD_SEED, then 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output file, or directory for `compare` and `repro-quadratic`.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags that replace the matching configuration fields.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Objective as inline JSON, e.g. '{"type":"quadratic","A":[[1]],"b":[0]}'.
    #[arg(long, global = true)]
    pub objective: Option<String>,
    /// Noise model as inline JSON, e.g. '{"type":"gaussian","sigma":[[1]]}'.
    #[arg(long, global = true)]
    pub noise: Option<String>,
    /// Step constant a in a/(k+b).
    #[arg(long, global = true)]
    pub a: Option<f64>,
    /// Step offset b in a/(k+b).
    #[arg(long, global = true)]
    pub b: Option<f64>,
    /// Initial point, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub x1: Option<Vec<f64>>,
    /// Last iteration index K of a trajectory.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Indices whose full iterate is recorded by `simulate`.
    #[arg(long, global = true)]
    pub record_at: Option<String>,
    /// Monte Carlo replications N.
    #[arg(long, short = 'n', global = true)]
    pub replications: Option<usize>,
    /// Radii, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub delta: Option<Vec<f64>>,
    /// Iteration indices: comma-separated values or `start:end[:step]` ranges.
    #[arg(long, global = true)]
    pub ks: Option<String>,
    /// One λ vector per flag, entries comma separated.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub lambda: Vec<String>,
    /// One z vector per flag, entries comma separated.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub z: Vec<String>,
    /// Leave the initial-distance branch out of the HPB exponent.
    #[arg(long, global = true)]
    pub drop_initial_branch: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one SGD trajectory and write `k,dist[,x...]` as CSV.
    Simulate,
    /// Evaluate Ψ*, r and Ψ̄ at the given λ.
    Psi,
    /// Evaluate the rate function at the given z.
    Rate {
        /// Which rate: auto, psi_star, psi_bar or gaussian_closed.
        #[arg(long, default_value = "auto")]
        source: String,
    },
    /// Minimal rate over the complement of the ball of each radius.
    BallRate {
        #[arg(long, default_value = "auto")]
        source: String,
    },
    /// High-probability bound exponent B, k0 and tail bounds.
    Hpb,
    /// Monte Carlo tail probabilities with Clopper-Pearson intervals.
    Tail,
    /// Tail curves, fitted rates and theory for each configured noise model.
    Compare,
    /// Bundled 10-dimensional Gaussian against Laplace experiment.
    ReproQuadratic,
    /// Run the invariant suites and report PASS/FAIL per criterion.
    Check {
        /// Include the long Monte Carlo criteria.
        #[arg(long)]
        full: bool,
    },
}

fn parse_vector(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("not a number: {t:?}")))
        })
        .collect()
}

/// `10,20,30` or `100:600:5` (inclusive), mixed freely.
pub fn parse_ks(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Config(format!("bad index list: {s:?}"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let nums: Vec<usize> = part
            .split(':')
            .map(|t| t.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        match nums[..] {
            [k] => out.push(k),
            [lo, hi] => out.extend(lo..=hi),
            [lo, hi, step] if step > 0 => out.extend((lo..=hi).step_by(step)),
            _ => return Err(bad()),
        }
    }
    Ok(out)
}

fn inline_json<T: serde::de::DeserializeOwned>(s: &Option<String>, what: &str) -> Result<Option<T>, CliError> {
    s.as_deref()
        .map(serde_json::from_str)
        .transpose()
        .map_err(|e| CliError::Config(format!("bad --{what}: {e}")))
}

impl Overrides {
    fn to_config(&self) -> Result<ExperimentConfig, CliError> {
        let vectors = |v: &[String]| -> Result<Option<Vec<Vec<f64>>>, CliError> {
            if v.is_empty() {
                return Ok(None);
            }
            v.iter().map(|s| parse_vector(s)).collect::<Result<_, _>>().map(Some)
        };
        Ok(ExperimentConfig {
            objective: inline_json(&self.objective, "objective")?,
            noise: inline_json(&self.noise, "noise")?,
            a: self.a,
            b: self.b,
            x1: self.x1.clone(),
            horizon: self.horizon,
            record_at: self.record_at.as_deref().map(parse_ks).transpose()?,
            replications: self.replications,
            deltas: self.delta.clone(),
            ks: self.ks.as_deref().map(parse_ks).transpose()?,
            lambdas: vectors(&self.lambda)?,
            zs: vectors(&self.z)?,
            include_initial_branch: self.drop_initial_branch.then_some(false),
            ..Default::default()
        })
    }
}

/// The effective configuration: file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let base = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut flags = cli.overrides.to_config()?;
    flags.seed = cli.seed;
    flags.output = cli.output.as_ref().map(|p| p.to_string_lossy().into_owned());
    Ok(base.overlay(flags))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli)?;
    let workers = match cli.workers {
        Some(0) => return Err(CliError::Config("--workers must be positive".into())),
        Some(w) => w,
        None => ldp_sgd::montecarlo::default_workers(),
    };
    let out = cfg.output.as_ref().map(PathBuf::from);
    let out = out.as_deref();
    match cli.command {
        Command::Simulate => output::emit(out, &commands::simulate(&cfg)?),
        Command::Psi => output::emit(out, commands::psi(&cfg)?.as_bytes()),
        Command::Rate { source } => output::emit(out, commands::rate(&cfg, &source)?.as_bytes()),
        Command::BallRate { source } => output::emit(out, commands::ball_rate(&cfg, &source)?.as_bytes()),
        Command::Hpb => output::emit(out, commands::hpb(&cfg)?.as_bytes()),
        Command::Tail => output::emit(out, &commands::tail(&cfg, workers)?),
        Command::Compare => commands::compare(&cfg, workers, out),
        Command::ReproQuadratic => commands::repro_quadratic(&cfg, workers, out),
        Command::Check { full } => {
            let results = checks::run_suite(full, workers);
            for c in &results {
                println!("{c}");
            }
            let failed = results.iter().filter(|c| !c.pass).count();
            if failed > 0 {
                return Err(CliError::CheckFailed(failed));
            }
            Ok(())
        }
    }
}

/// Parse the process arguments, run, and return the exit code.
pub fn run_from_env() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("ldp-sgd: {e}");
            e.exit_code()
        }
    }
}
