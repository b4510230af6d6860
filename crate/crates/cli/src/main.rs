use std::path::PathBuf;
use std::process::ExitCode;

use aeroplate::config::{keys_help, ExperimentConfig};
use aeroplate::experiments::run;
use anyhow::Context;
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "aeroplate", version, about = "Clamped von Karman plate in subsonic potential flow")]
#[command(after_help = format!("Config keys (`key = value`, one per line):\n{}", keys_help()))]
struct Cli {
    /// Configuration file; unset keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the plate and write the energy ledger and snapshots.
    Simulate,
    /// Newton solve for an equilibrium.
    Stationary {
        #[arg(long)]
        load_scale: Option<f64>,
        #[arg(long)]
        continuation: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Sweep the symbol bounds over random dual points.
    VerifyMicrolocal {
        #[arg(long)]
        points: Option<usize>,
        /// A positive number or `sweep`.
        #[arg(long)]
        xi: Option<String>,
    },
    /// Simulate, then sample the flow above the plate centre.
    ReconstructFlow,
    /// Approach to equilibrium of the damped system.
    DecayStudy,
    /// The decay study with k0 = 0.
    UndampedContrast,
}

fn overrides(cli: &Cli) -> String {
    let mut lines = Vec::new();
    let kind = match &cli.command {
        Command::Simulate => "simulate",
        Command::Stationary { load_scale, continuation, tol } => {
            if let Some(v) = load_scale {
                lines.push(format!("stationary.load_scale = {v}"));
            }
            if let Some(v) = continuation {
                lines.push(format!("stationary.continuation = {v}"));
            }
            if let Some(v) = tol {
                lines.push(format!("stationary.tol = {v}"));
            }
            "stationary"
        }
        Command::VerifyMicrolocal { points, xi } => {
            if let Some(v) = points {
                lines.push(format!("microlocal.points = {v}"));
            }
            if let Some(v) = xi {
                lines.push(format!("microlocal.xi = {v}"));
            }
            "verify-microlocal"
        }
        Command::ReconstructFlow => "reconstruct-flow",
        Command::DecayStudy => "decay-study",
        Command::UndampedContrast => "undamped-contrast",
    };
    lines.push(format!("experiment.kind = {kind}"));
    if let Some(out) = &cli.out {
        lines.push(format!("output.dir = {}", out.display()));
    }
    if let Some(seed) = cli.seed {
        lines.push(format!("seed = {seed}"));
    }
    lines.join("\n")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| -> anyhow::Result<String> {
        let base = match &cli.config {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        let cfg = ExperimentConfig::parse(&format!("{base}\n{}", overrides(&cli)))?;
        Ok(run(&cfg)?.line)
    })();
    match result {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
