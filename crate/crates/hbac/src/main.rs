use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hbac::{run_checked, Experiment, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "hbac", version, about = "Heat-bath algorithmic cooling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// TSAC and PPA trajectories against the optimal state and the mixing bound
    Converge(Flags),
    /// Transfer-matrix spectrum against the closed form
    Spectrum(Flags),
    /// Cycle-structure statistics of the PPA sorts
    Nbds(Flags),
    /// Noisy-estimate PPA sweep over sigma and seeds
    Noise(Flags),
    /// Two-sort circuit synthesis, verification and gate counts
    Circuit(Flags),
}

#[derive(clap::Args)]
struct Flags {
    /// key = value configuration file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    xi: Option<String>,
    /// Comma-separated noise standard deviations
    #[arg(long)]
    sigma: Option<String>,
    /// `1,2,3`, `0..20` or `0..=19`
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

fn build(experiment: Experiment, flags: &Flags) -> Result<ExperimentConfig> {
    let mut cfg = match &flags.config {
        Some(path) => ExperimentConfig::from_file(experiment, path)?,
        None => ExperimentConfig::defaults(experiment),
    };
    let overrides = [
        ("n", &flags.n),
        ("epsilon", &flags.epsilon),
        ("xi", &flags.xi),
        ("sigma", &flags.sigma),
        ("seeds", &flags.seeds),
        ("iters", &flags.iters),
        ("out", &flags.out),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, flags) = match &cli.command {
        Command::Converge(f) => (Experiment::Converge, f),
        Command::Spectrum(f) => (Experiment::Spectrum, f),
        Command::Nbds(f) => (Experiment::Nbds, f),
        Command::Noise(f) => (Experiment::Noise, f),
        Command::Circuit(f) => (Experiment::Circuit, f),
    };
    match build(experiment, flags).and_then(|cfg| run_checked(&cfg)) {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
