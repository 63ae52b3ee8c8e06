//! `haarlab`: batch front end for the character and harmonic-mixing toolkit.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use haarlab::commands::run_command;
use haarlab::config::{load_config, ConfigError, LucasArgs, RunConfig};
use haarlab::report::{Format, Report};

#[derive(Parser)]
#[command(version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config file, or inline JSON
    #[arg(long, global = true)]
    config: Option<String>,

    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,

    /// Write the report here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Table to emit as CSV (default: the first)
    #[arg(long, global = true)]
    table: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Group structure, and the coprime-coefficient census of an automaton
    GroupInfo,
    /// Binomial coefficient mod p; `haarlab lucas N n p` prints just the value
    Lucas { args: Vec<u64> },
    /// Rank of chi o F^N for N = 1..=n_max
    RankTraj,
    /// Fraction of N with rank above each threshold
    DiffusionReport,
    /// Separating-set certificate for the example automaton
    Separating,
    /// Closed-form coefficients of the example automaton's N-th power
    Ledrappier,
    /// Fourier coefficient of a measure, optionally pushed forward by F^N
    Fourier,
    /// Decay rate of a Markov transition family
    EhmLambda,
    /// Cesaro means of cylinder probabilities or Fourier coefficients
    Cesaro,
    /// Largest Fourier modulus per rank over a window
    HmScan,
    /// MRF property, laminations, sandwiches and the UHM / EHM chain
    MrfCheck,
    /// Seeded Monte-Carlo cylinder frequencies against exact values
    Simulate,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GroupInfo => "group-info",
            Command::Lucas { .. } => "lucas",
            Command::RankTraj => "rank-traj",
            Command::DiffusionReport => "diffusion-report",
            Command::Separating => "separating",
            Command::Ledrappier => "ledrappier",
            Command::Fourier => "fourier",
            Command::EhmLambda => "ehm-lambda",
            Command::Cesaro => "cesaro",
            Command::HmScan => "hm-scan",
            Command::MrfCheck => "mrf-check",
            Command::Simulate => "simulate",
        }
    }
}

/// Raised when `HAARLAB_THREADS` is malformed; counts as a config error.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("HAARLAB_THREADS") else { return Ok(()) };
    let threads: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return Err(ConfigError::new("HAARLAB_THREADS", format!("expected a positive integer, got `{raw}`")).into()),
    };
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().context("starting the worker pool")?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<ConfigError>() {
            return if c.cap_exceeded { 4 } else { 2 };
        }
        if let Some(e) = cause.downcast_ref::<haarlab_core::Error>() {
            return if matches!(e, haarlab_core::Error::CapExceeded(_)) { 4 } else { 3 };
        }
    }
    3
}

fn write_output(bytes: &[u8], out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    let name = cli.command.name();

    if let Command::Lucas { args } = &cli.command {
        if !args.is_empty() {
            let [big_n, n, p] = args[..] else {
                return Err(ConfigError::new("lucas", "expected exactly three arguments: N n p").into());
            };
            let args = LucasArgs { big_n, n, p };
            if cli.config.is_none() && matches!(cli.format, Format::Csv) && cli.table.is_none() {
                let value = haarlab_core::numtheory::lucas_binom(big_n, n, p)?;
                return write_output(format!("{value}\n").as_bytes(), cli.out.as_ref());
            }
            let mut cfg = match &cli.config {
                Some(src) => load_config(src)?,
                None => RunConfig::default(),
            };
            cfg.analysis.lucas = Some(args);
            return emit(cli, &run_command(name, &cfg)?);
        }
    }

    let source = cli
        .config
        .as_deref()
        .ok_or_else(|| ConfigError::new("", format!("`{name}` needs --config <file>")))?;
    let cfg = load_config(source)?;
    let report = run_command(name, &cfg).with_context(|| format!("{name} failed"))?;
    emit(cli, &report)
}

fn emit(cli: &Cli, report: &Report) -> Result<()> {
    let bytes = report.emit(cli.format, cli.table.as_deref())?;
    if matches!(cli.format, Format::Csv) {
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
    }
    write_output(&bytes, cli.out.as_ref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("haarlab: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
