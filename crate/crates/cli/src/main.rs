//! `mixflow`: identity suites, simulations and stationary experiments from
//! JSON configs.

mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::exit::CliError;

#[derive(Parser)]
#[command(
    name = "mixflow",
    version,
    about = "Duality checks and simulations for mass-transport models with hidden parameters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the deterministic identity suite.
    Verify(Common),
    /// Simulate one trajectory, optionally with an ensemble summary.
    Simulate(Common),
    /// Run a stationary experiment against its exact invariant law.
    Ness(Common),
    /// Run a truncation or step-size convergence study.
    Sweep(Common),
    /// Draw from the ordered-Dirichlet mixing law.
    SampleMixing(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Verify(c) => ("verify", c),
            Command::Simulate(c) => ("simulate", c),
            Command::Ness(c) => ("ness", c),
            Command::Sweep(c) => ("sweep", c),
            Command::SampleMixing(c) => ("sample-mixing", c),
        }
    }
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let (name, common) = cli.command.parts();
    let mut cfg = ExperimentConfig::load(&common.config)?;
    cfg.check_command(name)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = Some(out.clone());
    }
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    }
    match cli.command {
        Command::Verify(_) => commands::verify(&cfg),
        Command::Simulate(_) => commands::simulate(&cfg),
        Command::Ness(_) => commands::ness(&cfg),
        Command::Sweep(_) => commands::sweep(&cfg),
        Command::SampleMixing(_) => commands::sample_mixing(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::Failed(line) = &e {
                println!("{line}");
            }
            eprintln!("mixflow: {e}");
            e.exit_code()
        }
    }
}
