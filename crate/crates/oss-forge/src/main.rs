//! `oss-forge` command line interface.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use oss_forge::config::LoadedConfig;
use oss_forge::pipeline::{Pipeline, RunOverrides, Stage};

#[derive(Parser)]
#[command(
    name = "oss-forge",
    version,
    about = "Manufacture coding instruction-tuning data from open-source code snippets"
)]
struct Cli {
    /// Pipeline configuration file (TOML). Relative paths inside it resolve
    /// against its directory.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Rerun stages even when their outputs already exist.
    #[arg(long, global = true)]
    force: bool,

    /// Override the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    stage_dir: Option<PathBuf>,

    /// Override the teacher request concurrency.
    #[arg(long, global = true, value_name = "N")]
    concurrency: Option<usize>,

    /// Print what each stage would read and write, without running it.
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest the corpus and sample seed snippets.
    SampleSeeds,
    /// Send prompts to the teacher backend and parse responses.
    Generate,
    /// Drop exact duplicates, same-seed duplicates, and trivial-seed samples.
    Clean,
    /// Remove samples contaminated by benchmark text.
    Decontaminate,
    /// Compute histograms, benchmark similarity, and category breakdown.
    Analyze,
    /// Mine comment-function pairs for the direct-finetuning ablation.
    MinePairs,
    /// Partition samples by the ```python fence rule.
    Split,
    /// Write training-ready dataset files and manifests.
    Export,
    /// Consolidate stage reports and check the ledger identity.
    Report,
    /// Run every stage in order.
    All,
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        match self {
            Command::SampleSeeds => Some(Stage::SampleSeeds),
            Command::Generate => Some(Stage::Generate),
            Command::Clean => Some(Stage::Clean),
            Command::Decontaminate => Some(Stage::Decontaminate),
            Command::Analyze => Some(Stage::Analyze),
            Command::MinePairs => Some(Stage::MinePairs),
            Command::Split => Some(Stage::Split),
            Command::Export => Some(Stage::Export),
            Command::Report => Some(Stage::Report),
            Command::All => None,
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let Some(config_path) = cli.config.as_deref() else {
        eprintln!("error: --config <PATH> is required");
        return ExitCode::from(2);
    };

    let loaded = match LoadedConfig::load(config_path) {
        Ok(loaded) => loaded,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1));
        }
    };
    let issues = loaded.validate();
    if !issues.is_empty() {
        eprintln!("error: invalid configuration:");
        for issue in &issues {
            eprintln!("  - {issue}");
        }
        return ExitCode::from(2);
    }

    let pipeline = Pipeline::new(
        loaded,
        RunOverrides {
            force: cli.force,
            dry_run: cli.dry_run,
            stage_dir: cli.stage_dir.clone(),
            concurrency: cli.concurrency,
        },
    );
    let result = match cli.command.stage() {
        Some(stage) => pipeline.run_stage(stage),
        None => pipeline.run_all(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
