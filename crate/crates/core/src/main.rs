use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tblab::config::{parse_config_with_overrides, ExperimentConfig};
use tblab::experiment::{self, exit, Command};

#[derive(Parser)]
#[command(name = "tblab", version, about = "Tight-binding reduction lab for the 1D Gross-Pitaevskii equation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// First two Bloch bands and their edges.
    Bands(Common),
    /// Localized basis and tight-binding coefficients.
    Basis(Common),
    /// Paired field / lattice run with conservation monitors.
    Simulate(Common),
    /// Simulate plus remainder and perturbation diagnostics.
    Diagnose(Common),
    /// hbar sweep with F = eta = hbar^2.
    SweepModel1(Common),
    /// hbar sweep with F = beta, eta = hbar^(1/2) beta.
    SweepModel2(Common),
}

#[derive(Args)]
struct Common {
    /// Sectioned key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set params.hbar=0.08`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (same as `--set output.dir=...`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(common: &Common) -> Result<ExperimentConfig, String> {
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => String::new(),
    };
    let mut overrides = common.set.clone();
    if let Some(dir) = &common.out {
        overrides.push(format!("output.dir={}", dir.display()));
    }
    parse_config_with_overrides(&text, &overrides).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match &cli.command {
        Cmd::Bands(c) => (Command::Bands, c),
        Cmd::Basis(c) => (Command::Basis, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Diagnose(c) => (Command::Diagnose, c),
        Cmd::SweepModel1(c) => (Command::SweepModel1, c),
        Cmd::SweepModel2(c) => (Command::SweepModel2, c),
    };
    let config = match load(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error:\n{e}");
            return ExitCode::from(exit::CONFIG as u8);
        }
    };
    match experiment::run(command, &config) {
        Ok(outcome) => {
            for c in &outcome.checks {
                println!("{} {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("wrote {} artifacts to {}", outcome.artifacts.len(), config.output_dir.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
