//! `pcrf`: corpus generation, training, evaluation, out-of-bag scoring and
//! latency benchmarks.

mod cmd;
mod errors;
mod opts;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use errors::{exit_code, Usage};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "PCRF_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "pcrf",
    version,
    about = "Pairwise conditional random forests for expression sequences"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    SynthGen(cmd::synth_gen::Args),
    /// Train a model bundle.
    Train(cmd::train::Args),
    /// Classify the sequences of a corpus and score the decisions.
    Eval(cmd::eval::Args),
    /// Out-of-bag accuracy of freshly trained forests.
    Oob(cmd::oob::Args),
    /// Per-frame latency of channel building and model evaluation.
    Bench(cmd::bench::Args),
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value.trim().parse().map_err(|_| {
        Usage(format!(
            "{THREADS_ENV} must be a positive integer, got {value:?}"
        ))
    })?;
    pcrf::parallel::set_threads(n)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    match cli.command {
        Command::SynthGen(a) => cmd::synth_gen::run(a),
        Command::Train(a) => cmd::train::run(a),
        Command::Eval(a) => cmd::eval::run(a),
        Command::Oob(a) => cmd::oob::run(a),
        Command::Bench(a) => cmd::bench::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
