//! `procure` — experiment runner for the privacy-preserving data-procurement
//! simulations.
//!
//! Exit codes: 0 success, 2 invalid config, 3 infeasible parameters,
//! 4 statistically inconclusive audit, 5 failed audit/check, 1 other errors.

mod config;
mod error;
mod experiments;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, ExperimentKind};
use error::CliError;
use experiments::ExperimentContext;
use manifest::config_hash;

#[derive(Parser)]
#[command(name = "procure", version, about = "Privacy-preserving data-procurement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run mechanism replications and summarize accuracy
    Run(CommonArgs),
    /// Histogram ratio audit of estimate or payment privacy
    AuditDp(CommonArgs),
    /// Deviation and individual-rationality audits
    AuditBic(CommonArgs),
    /// Resolve (c, epsilon) across accuracy targets
    AccuracySweep(CommonArgs),
    /// Approximation-ratio comparison against procurement benchmarks
    Benchmark(CommonArgs),
    /// Parse and validate a config without running anything
    Validate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Force all Laplace draws to zero (test hook; `run` only)
    #[arg(long)]
    noise_off: bool,
}

fn expected_kind(command: &Command) -> Option<ExperimentKind> {
    match command {
        Command::Run(_) => Some(ExperimentKind::Run),
        Command::AuditDp(_) => Some(ExperimentKind::AuditDp),
        Command::AuditBic(_) => Some(ExperimentKind::AuditBic),
        Command::AccuracySweep(_) => Some(ExperimentKind::AccuracySweep),
        Command::Benchmark(_) => Some(ExperimentKind::Benchmark),
        Command::Validate(_) => None,
    }
}

fn load(args: &CommonArgs) -> Result<(ExperimentConfig, String), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", args.config.display())))?;
    let config = ExperimentConfig::parse(&text)?;
    Ok((config, text))
}

fn run(cli: Cli) -> Result<String, CliError> {
    let expected = expected_kind(&cli.command);
    let args = match &cli.command {
        Command::Run(a)
        | Command::AuditDp(a)
        | Command::AuditBic(a)
        | Command::AccuracySweep(a)
        | Command::Benchmark(a)
        | Command::Validate(a) => a,
    };
    let (config, text) = load(args)?;

    if let Some(kind) = expected {
        if config.kind != kind {
            return Err(CliError::config(format!(
                "config kind is '{}' but the subcommand expects '{}'",
                config.kind.as_str(),
                kind.as_str()
            )));
        }
    }
    if args.noise_off && config.kind != ExperimentKind::Run {
        return Err(CliError::config("--noise-off only applies to `run`"));
    }

    if matches!(cli.command, Command::Validate(_)) {
        // resolution exercises the parameter formulas, surfacing infeasibility
        if !matches!(config.kind, ExperimentKind::AccuracySweep | ExperimentKind::Benchmark) {
            config.resolve_params()?;
        }
        return Ok(format!("config OK: kind {}", config.kind.as_str()));
    }

    let seed = args.seed.unwrap_or(config.seed);
    let out_dir = args.out.clone().unwrap_or_else(|| PathBuf::from(&config.out_dir));
    let hash = config_hash(&text, seed, args.noise_off);
    let ctx = ExperimentContext { config, seed, out_dir, noise_off: args.noise_off, hash };
    experiments::dispatch(&ctx)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(message) => {
            println!("{message}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
