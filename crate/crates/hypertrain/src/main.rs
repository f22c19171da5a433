use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hypertrain::artifacts::ArtifactWriter;
use hypertrain::config::parse_select_on;
use hypertrain::pool::Threads;
use hypertrain::{experiments, Command, ExperimentConfig, HarnessError};
use hypertrain_core::algorithms::SelectOn;

/// Hyper-training experiments.
#[derive(Parser)]
#[command(name = "hypertrain", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Global hypernetwork, then λ descent through it.
    GlobalBr(Common),
    /// Joint hypernetwork and λ training with local sampling.
    Joint(Common),
    /// One hypernetwork step at λ̂ per λ step.
    Simplified(Common),
    /// Cross-validation over λ.
    CvBaseline(Common),
    /// One hyperparameter per weight with a factorized hypernetwork.
    Perweight(Common),
    /// GP vs hypernetwork surrogates of validation loss.
    CompareSurrogates(Common),
    /// Finite-difference validation of the autodiff tape.
    Gradcheck(Common),
    /// Loss curves over λ from a hypernetwork and from cross-validation.
    SweepCurve(Common),
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Split used to pick the cross-validation winner.
    #[arg(long, value_parser = parse_select_on)]
    select_on: Option<SelectOn>,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

impl Sub {
    fn split(self) -> (Command, Common) {
        match self {
            Sub::GlobalBr(c) => (Command::GlobalBr, c),
            Sub::Joint(c) => (Command::Joint, c),
            Sub::Simplified(c) => (Command::Simplified, c),
            Sub::CvBaseline(c) => (Command::CvBaseline, c),
            Sub::Perweight(c) => (Command::Perweight, c),
            Sub::CompareSurrogates(c) => (Command::CompareSurrogates, c),
            Sub::Gradcheck(c) => (Command::Gradcheck, c),
            Sub::SweepCurve(c) => (Command::SweepCurve, c),
        }
    }
}

fn execute(command: Command, args: &Common) -> Result<(), HarnessError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(command, path)?,
        None => ExperimentConfig::defaults(command),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(select_on) = args.select_on {
        cfg.cv.select_on = select_on;
    }
    let run = experiments::run(&cfg, &Threads::from_env())?;
    let writer = ArtifactWriter::create(&args.out)?;
    writer.write(&run)?;
    if !args.quiet {
        // A closed pipe downstream is not a failure of the run.
        let _ = writeln!(
            std::io::stdout().lock(),
            "{}",
            serde_json::to_string_pretty(&run.summary)?
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let (command, args) = Cli::parse().command.split();
    match execute(command, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
