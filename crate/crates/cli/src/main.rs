use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lrgame::config::{parse_config, ExperimentKind};
use lrgame::harness::{default_out_dir, exit, exit_code, run_experiment};

/// Memory-strategy agents on long-range random graphs.
#[derive(Parser, Debug)]
#[command(name = "lrgame", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Degree and edge-length moments of sampled graphs.
    GraphStats(Common),
    /// Plain runs: trajectories, final states and record sets.
    Simulate(Common),
    /// Fixation statistics, energy decomposition and tail bounds.
    Fixation(Common),
    /// Coupled runs under different frames along a ladder of window sizes.
    Mixing(Common),
    /// Replays with unilateral deviations after stabilisation.
    NashCheck(Common),
    /// Fast paths against the reference implementations.
    OracleCheck(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment description.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Number of replicas, overriding the config.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    replicas: Option<u64>,
    /// No progress output.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::GraphStats(c) => (ExperimentKind::GraphStats, c),
        Command::Simulate(c) => (ExperimentKind::Simulate, c),
        Command::Fixation(c) => (ExperimentKind::Fixation, c),
        Command::Mixing(c) => (ExperimentKind::Mixing, c),
        Command::NashCheck(c) => (ExperimentKind::NashCheck, c),
        Command::OracleCheck(c) => (ExperimentKind::OracleCheck, c),
    };
    ExitCode::from(execute(kind, common) as u8)
}

fn execute(kind: ExperimentKind, common: Common) -> i32 {
    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", common.config.display());
            return exit::IO;
        }
    };
    let mut config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", common.config.display());
            return exit::CONFIG;
        }
    };
    if config.kind != kind && !common.quiet {
        eprintln!(
            "note: running {} although the config says {}",
            kind.name(),
            config.kind.name()
        );
    }
    config.kind = kind;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(r) = common.replicas {
        config.replicas = r as usize;
    }
    if let Some(out) = common.out {
        config.out = Some(out);
    }
    let dir = default_out_dir(&config);
    match run_experiment(&config, &dir, common.quiet) {
        Ok(report) => {
            if let Some(e) = &report.error {
                eprintln!("error: {e}");
            }
            for c in report.checks.iter().filter(|c| !c.pass) {
                eprintln!("check failed: {} ({})", c.name, c.detail);
            }
            if !common.quiet {
                for f in &report.findings {
                    eprintln!("{f}");
                }
            }
            report.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
