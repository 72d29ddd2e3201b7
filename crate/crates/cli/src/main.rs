use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tkgc_cli::commands::{self, Context};
use tkgc_cli::config::RunConfig;
use tkgc_cli::error::CliError;

/// Temporal knowledge graph completion.
///
/// Log verbosity follows TKGC_LOG (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "tkgc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (`key = value` lines under `[section]` headers).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `[train] seed`; also seeds `synth`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Checkpoint path (default: OUT/model.ckpt).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Dataset directory, overriding `[data] path`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Extra `section.key=value` settings applied after the file.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model, save the best checkpoint and evaluate it.
    Train(Common),
    /// Evaluate a checkpoint on the configured split.
    Eval(Common),
    /// Sweep the TED decay rate over the configured sigmas.
    Ted(Common),
    /// Write a synthetic dataset to the output directory.
    Synth(Common),
    /// Dataset sizes and activity statistics.
    Stats(Common),
    /// Frequency-binned Hits@10 from a per-query results file.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// JSON-lines results written by `train` or `eval`.
        #[arg(long)]
        results: PathBuf,
    },
}

fn context(c: &Common) -> Result<Context, CliError> {
    let mut config = match &c.config {
        Some(path) => RunConfig::parse(&std::fs::read_to_string(path).map_err(CliError::io(path))?)?,
        None => RunConfig::default(),
    };
    for s in &c.set {
        let (key, value) = s.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects SECTION.KEY=VALUE, got `{s}`")))?;
        config.set("", key.trim(), value.trim()).map_err(|e| CliError::Config(format!("--set {s}: {e}")))?;
    }
    if let Some(seed) = c.seed {
        config.train.seed = seed;
    }
    if let Some(data) = &c.data {
        config.data.path = Some(data.clone());
    }
    Ok(Context { config, out: c.out.clone(), checkpoint: c.checkpoint.clone() })
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match &cli.command {
        Command::Train(c) => commands::train_cmd(&context(c)?),
        Command::Eval(c) => commands::eval_cmd(&context(c)?),
        Command::Ted(c) => commands::ted_cmd(&context(c)?),
        Command::Synth(c) => {
            let ctx = context(c)?;
            commands::synth_cmd(&ctx, ctx.config.train.seed)
        }
        Command::Stats(c) => {
            let (stats, files) = commands::stats_cmd(&context(c)?)?;
            println!(
                "entities {} relations {} steps {} train {} valid {} test {}",
                stats.entities, stats.relations, stats.steps, stats.train, stats.valid, stats.test
            );
            Ok(files)
        }
        Command::Analyze { common, results } => commands::analyze_cmd(&context(common)?, results),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TKGC_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.one_line());
            ExitCode::FAILURE
        }
    }
}
