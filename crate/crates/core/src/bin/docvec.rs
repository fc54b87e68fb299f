//! Command-line experiment runner.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use docvec::pipeline::{ExperimentConfig, Pipeline, Stage, StageOutcome};

#[derive(Parser)]
#[command(name = "docvec", version, about = "Document vectors from adapted language models")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, default_value = "docvec.toml")]
    config: PathBuf,
    /// Overwrite artifacts produced under a different configuration.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads (overrides the config; 0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Read and filter the corpus; assign cross-validation folds.
    Ingest,
    /// Brown-cluster the vocabulary of each parent training set.
    Cluster,
    /// Train the parent language models.
    TrainParent,
    /// Adapt a parent to every document and extract document vectors.
    AdaptAll,
    /// Build every requested feature recipe for every fold.
    Features,
    /// Cross-validate a classifier on each recipe.
    Evaluate,
    /// Write the comparison tables and print the summary.
    Report,
    /// Run every stage in order.
    Run,
    /// Print the default configuration.
    DefaultConfig,
}

fn stage(c: Command) -> Option<Stage> {
    Some(match c {
        Command::Ingest => Stage::Ingest,
        Command::Cluster => Stage::Cluster,
        Command::TrainParent => Stage::TrainParent,
        Command::AdaptAll => Stage::AdaptAll,
        Command::Features => Stage::Features,
        Command::Evaluate => Stage::Evaluate,
        Command::Report => Stage::Report,
        Command::Run | Command::DefaultConfig => return None,
    })
}

fn run(cli: &Cli) -> docvec::Result<()> {
    if let Command::DefaultConfig = cli.command {
        print!("{}", ExperimentConfig::default().to_toml());
        return Ok(());
    }
    let cfg = ExperimentConfig::load(&cli.config)?;
    let pipeline = Pipeline::new(cfg, cli.force, cli.workers)?;
    let outcomes = match stage(cli.command) {
        Some(s) => vec![(s, pipeline.run(s)?)],
        None => pipeline.run_all()?,
    };
    for (s, o) in &outcomes {
        let verb = match o {
            StageOutcome::Ran => "done",
            StageOutcome::Skipped => "skipped (up to date)",
        };
        eprintln!("{}: {verb}", s.name());
    }
    if outcomes.iter().any(|(s, _)| *s == Stage::Report) {
        print!("{}", pipeline.load_report()?.summary());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
