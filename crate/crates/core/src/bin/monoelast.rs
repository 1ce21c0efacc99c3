use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use monoelast::config::ExperimentConfig;
use monoelast::experiment::{run_stage, score_artifacts, Stage};
use monoelast::Error;

#[derive(Parser)]
#[command(name = "monoelast", version, about = "Support reconstruction for Lamé and density perturbations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration file (defaults are used when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh, NtD matrices, gap and sensitivities only.
    Forward(Common),
    /// Linearized monotonicity test on the ball grid.
    Test(Common),
    /// Monotonicity-constrained least squares.
    Reconstruct(Common),
    /// Constrained least squares on TSVD-truncated sensitivities.
    Combined(Common),
    /// Jaccard scores of the masks already in the output directory.
    Score(Common),
    /// Every stage.
    All(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut c = match &common.config {
        Some(p) => ExperimentConfig::read(p).map_err(|e| match e {
            Error::Io(io) => Error::Config {
                line: 0,
                message: format!("{}: {io}", p.display()),
            },
            e => e,
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(o) = &common.out {
        c.out = o.clone();
    }
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(Error::Config {
                line: 0,
                message: "--jobs must be positive".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<(), Error> {
    let (stage, common) = match &cli.command {
        Command::Forward(c) => (Some(Stage::Forward), c),
        Command::Test(c) => (Some(Stage::Test), c),
        Command::Reconstruct(c) => (Some(Stage::Reconstruct), c),
        Command::Combined(c) => (Some(Stage::Combined), c),
        Command::All(c) => (Some(Stage::All), c),
        Command::Score(c) => (None, c),
    };
    let config = load(common)?;
    let scores = match stage {
        Some(s) => {
            let summary = run_stage(&config, s)?;
            println!("wrote {} files to {}", summary.files.len(), summary.out.display());
            summary.scores
        }
        None => score_artifacts(&config)?,
    };
    for (method, mask, j) in scores {
        println!("{method} {mask} jaccard={j:.4}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
