use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod config;
mod manifest;

use manifest::RunManifest;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Entanglement dynamics of a single spin in a disordered Heisenberg chain.
///
/// Every subcommand writes plot-ready CSV/JSON into `--out` together with a
/// `manifest.json` listing each file's SHA-256.
#[derive(Debug, Parser)]
#[command(name = "qctf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact evolution of one realization: trace, spectrum and predicted lines.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Perturbative frequencies and amplitudes for one realization.
    #[command(args_override_self = true)]
    Predict(PredictArgs),
    /// Pole sum of the entanglement measure, checked against direct evolution.
    #[command(args_override_self = true)]
    Qctf(QctfArgs),
    /// Disorder ensemble with reconstructed frequency and amplitude densities.
    #[command(args_override_self = true)]
    Ensemble(EnsembleArgs),
    /// Tabulated closed-form densities.
    #[command(args_override_self = true)]
    Pdf(PdfArgs),
    /// Critical probability: leading-order formula against Monte Carlo.
    #[command(args_override_self = true)]
    Critical(CriticalArgs),
    /// Static measure, overlap and split weights of every eigenstate.
    #[command(args_override_self = true)]
    Eigen(EigenArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Predict(_) => "predict",
            Command::Qctf(_) => "qctf",
            Command::Ensemble(_) => "ensemble",
            Command::Pdf(_) => "pdf",
            Command::Critical(_) => "critical",
            Command::Eigen(_) => "eigen",
            Command::Replay(_) => "replay",
        }
    }
}

pub const SUBCOMMANDS: [&str; 8] = ["simulate", "predict", "qctf", "ensemble", "pdf", "critical", "eigen", "replay"];

#[derive(Debug, Clone, Args, Serialize)]
pub struct ChainArgs {
    /// Number of sites.
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    /// Exchange coupling J.
    #[arg(long, default_value_t = 1.0)]
    pub j: f64,
    /// Disorder half-width W; fields are uniform on [−W, W].
    #[arg(long, default_value_t = 10.0)]
    pub w: f64,
    /// Disorder seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Observed site (1-based).
    #[arg(long, default_value_t = 1)]
    pub site: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TimeArgs {
    /// Final time.
    #[arg(long, default_value_t = 40.0)]
    pub tmax: f64,
    /// Sampling step.
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "QCTF_OUT", default_value = "qctf-out")]
    pub out: PathBuf,
    /// Flat `key = value` file supplying defaults for any flag.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub time: TimeArgs,
    /// Hann-window the spectrum.
    #[arg(long)]
    pub hann: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Include fourth-order frequencies.
    #[arg(long)]
    pub fourth: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QctfArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Final time of the cross-check grid.
    #[arg(long, default_value_t = 40.0)]
    pub tmax: f64,
    /// Cross-check points on [0, tmax].
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    /// Largest accepted |pole sum − direct trace|.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Drop poles with |c| below this (0 keeps every pole).
    #[arg(long, default_value_t = 0.0)]
    pub prune: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Analytic,
    Simulate,
    Both,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub time: EnsembleTimeArgs,
    /// Number of disorder realizations.
    #[arg(long, default_value_t = 10_000)]
    pub realizations: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Analytic)]
    pub mode: ModeArg,
    /// Histogram bins.
    #[arg(long, default_value_t = 64)]
    pub bins: usize,
    /// Exclude entries with |Δh| below this multiple of J.
    #[arg(long, default_value_t = 0.05)]
    pub resonance_tol: f64,
    /// Lower edge of the frequency comparison window, in units of J.
    #[arg(long, default_value_t = 5.0)]
    pub window_min: f64,
    /// Worker threads (0 = all logical cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnsembleTimeArgs {
    /// Final time for simulate mode.
    #[arg(long, default_value_t = 100.0)]
    pub tmax: f64,
    /// Sampling step for simulate mode.
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdfKindArg {
    FrequencyBulk,
    FrequencyEdge,
    Amplitude,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PdfArgs {
    #[arg(long, value_enum)]
    pub kind: PdfKindArg,
    #[arg(long, default_value_t = 1.0)]
    pub j: f64,
    #[arg(long, default_value_t = 10.0)]
    pub w: f64,
    /// Table rows.
    #[arg(long, default_value_t = 513)]
    pub points: usize,
    /// Amplitude tables span [a₀, decades·a₀] on a log grid.
    #[arg(long, default_value_t = 4.0)]
    pub decades: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CriticalArgs {
    /// Orders 2n, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,4,6")]
    pub order: Vec<u32>,
    /// Disorder ratios W/J, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub wj: Vec<f64>,
    /// Monte Carlo samples per row; accepts `1e7`.
    #[arg(long, default_value = "1e6", value_parser = parse_count)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = all logical cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EigenArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// A `manifest.json` written by an earlier run.
    pub manifest: PathBuf,
    /// Write into this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    match s.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < u64::MAX as f64 => Ok(x as u64),
        _ => Err(format!("not a non-negative integer: {s}")),
    }
}

fn run(argv: Vec<String>) -> CliResult<()> {
    let argv = config::expand(argv)?;
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are not failures
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let started = Instant::now();
    let name = cli.command.name();
    let (out, record) = match &cli.command {
        Command::Replay(r) => return replay(r),
        Command::Simulate(a) => (&a.out.out, commands::simulate(a)?),
        Command::Predict(a) => (&a.out.out, commands::predict(a)?),
        Command::Qctf(a) => (&a.out.out, commands::qctf(a)?),
        Command::Ensemble(a) => (&a.out.out, commands::ensemble(a)?),
        Command::Pdf(a) => (&a.out.out, commands::pdf(a)?),
        Command::Critical(a) => (&a.out.out, commands::critical(a)?),
        Command::Eigen(a) => (&a.out.out, commands::eigen(a)?),
    };
    let manifest = RunManifest::new(name, &argv[1..], record, out, started.elapsed().as_secs_f64())?;
    manifest.write(out)?;
    for line in &manifest.summary {
        println!("{line}");
    }
    println!("wrote {} files to {}", manifest.outputs.len(), out.display());
    match &manifest.violation {
        Some(v) => Err(CliError::Numeric(v.clone())),
        None => Ok(()),
    }
}

fn replay(r: &ReplayArgs) -> CliResult<()> {
    let mut argv = vec!["qctf".to_string()];
    argv.extend(RunManifest::read_args(&r.manifest)?);
    if let Some(out) = &r.out {
        argv.push("--out".into());
        argv.push(out.display().to_string());
    }
    run(argv)
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
