//! Command-line front end: seeded, manifest-producing pipelines over the
//! library. Artifacts land under --out-dir with fixed names; every
//! subcommand refuses to run without its prerequisites.

mod config;
mod manifest;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigOverrides, Preset};
use pipeline::SweepParam;

#[derive(Parser)]
#[command(
    name = "rltg",
    about = "Topic-preserving text generation: a DQN picks among a language model's top-K next tokens",
    version
)]
struct Cli {
    /// Dimension/episode preset.
    #[arg(long, global = true, value_enum, default_value = "desk")]
    preset: Preset,

    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Corpus file (UTF-8 JSON Lines: id, label, optional title, text).
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,

    /// Directory for artifacts (lm.rltg, dqn.rltg, report.csv, ...).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(flatten)]
    overrides: ConfigOverrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the vocabulary and train the recurrent language model.
    TrainLm,
    /// Harvest (hidden state, top-K) records for autoencoder training.
    CollectStates,
    /// Train both state autoencoders on the collected records.
    TrainAe,
    /// Train the fake-news classifier used as the frozen adversary.
    TrainAdversary,
    /// Train the deep-Q agent over the top-K action set.
    TrainAgent,
    /// Generate text with the trained agent (greedy over Q).
    Generate {
        /// Explicit topic text; defaults to corpus topic prefixes.
        #[arg(long)]
        topic: Option<String>,
        /// Also score each step with the full reward (needs adv.rltg).
        #[arg(long)]
        score: bool,
    },
    /// Evaluate methods on corpus topics: similarity / perplexity / ROUGE-L.
    Evaluate {
        /// Comma-separated subset of: rltg, greedy, topk.
        #[arg(long, value_delimiter = ',', default_value = "rltg,greedy,topk")]
        methods: Vec<String>,
    },
    /// Train one agent per value of a reward weight and report ROUGE-L.
    Sweep {
        /// Which reward weight to sweep.
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values in [0, 1].
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match config::resolve(
        cli.preset,
        cli.config.as_deref(),
        &cli.overrides,
        cli.corpus.as_deref(),
        cli.out_dir.as_deref(),
    ) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };

    let result = match &cli.command {
        Command::TrainLm => pipeline::train_lm(&cfg),
        Command::CollectStates => pipeline::collect_states(&cfg),
        Command::TrainAe => pipeline::train_ae(&cfg),
        Command::TrainAdversary => pipeline::train_adversary(&cfg),
        Command::TrainAgent => pipeline::train_agent(&cfg),
        Command::Generate { topic, score } => pipeline::generate(&cfg, topic.as_deref(), *score),
        Command::Evaluate { methods } => pipeline::evaluate(&cfg, methods),
        Command::Sweep { param, values } => pipeline::sweep(&cfg, *param, values),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
