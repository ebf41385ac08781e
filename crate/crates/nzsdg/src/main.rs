use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nzsdg::cli::{self, Command};
use nzsdg::exec;

/// Batch solver and verifier for bang-bang nonzero-sum stochastic
/// differential games.
#[derive(Parser)]
#[command(name = "nzsdg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap the worker count (0 = auto); also honors NZSDG_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the problem document and emit the validation report.
    Validate(Common),
    /// Solve the limit value system; emit the grid CSV and diagnostics.
    Solve(Common),
    /// Solve along the smoothing schedule; emit the gap report and final grid.
    Refine(Common),
    /// Simulate the extracted pair's payoffs; emit the estimates.
    Simulate(Common),
    /// Full certification: value/payoff identity, deviation suite,
    /// maximization sweep. Exit 1 on any violation.
    Verify(Common),
    /// Compare the solve against the analytic oracles where they apply.
    Oracle(Common),
}

fn main() -> ExitCode {
    let parsed = Cli::parse();
    let (kind, common) = match &parsed.command {
        Cmd::Validate(c) => (Command::Validate, c),
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::Refine(c) => (Command::Refine, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Oracle(c) => (Command::Oracle, c),
    };

    let threads = common.threads.or_else(|| {
        std::env::var("NZSDG_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    });

    let code = exec::with_thread_cap(threads, || execute(kind, common));
    match code {
        Ok(c) => ExitCode::from(c as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(kind: Command, common: &Common) -> Result<i32, cli::CliError> {
    // `validate` must be able to report an invalid problem rather than die
    // on it; everything else requires a valid configuration.
    let mut config = if kind == Command::Validate {
        cli::parse_config_lenient(&common.config)?.0
    } else {
        cli::parse_config(&common.config)?
    };
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        config.sim.seed = seed;
    }
    cli::run(kind, &config)
}
