mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "beamsep", version, about = "Two-beam speech separation toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML file overriding built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Maximum worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output path: a directory for most commands, a file for `train` and `enhance`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic speech corpus and babble noise.
    Corpus(commands::CorpusArgs),
    /// Mix beam signals for one acoustic condition (train, dev and test splits).
    Datagen(commands::DatagenArgs),
    /// Train a separation model.
    Train(commands::TrainArgs),
    /// Enhance one pair of beam recordings.
    Enhance(commands::EnhanceArgs),
    /// Score a model against the unprocessed beam on a dataset split.
    Eval(commands::EvalArgs),
    /// Export a delay-and-sum beam pattern as CSV.
    Beampattern(commands::BeampatternArgs),
    /// Render the beamformed impulse responses of one sampled scene.
    Rir(commands::RirArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.global.config.as_deref())?;
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    if cli.global.threads.is_some() {
        cfg.threads = cli.global.threads;
    }
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    let out = cli.global.out;
    match cli.command {
        Command::Corpus(a) => commands::corpus(a, cfg, out),
        Command::Datagen(a) => commands::datagen(a, cfg, out),
        Command::Train(a) => commands::train(a, cfg, out),
        Command::Enhance(a) => commands::enhance(a, cfg, out),
        Command::Eval(a) => commands::eval(a, cfg, out),
        Command::Beampattern(a) => commands::beampattern(a, cfg, out),
        Command::Rir(a) => commands::rir(a, cfg, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(if e.is::<commands::UsageError>() { 2 } else { 1 })
        }
    }
}
