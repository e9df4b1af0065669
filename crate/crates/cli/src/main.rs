//! `jtpred` command-line entry point.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] jtpred::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Core(e) if e.is_validation() => 1,
            _ => 2,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "jtpred",
    version,
    about = "Multi-label job-title prediction from job descriptions"
)]
struct Cli {
    /// Cap on worker threads (0 = one per core)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Run every data-parallel loop sequentially
    #[arg(long, global = true)]
    sequential: bool,

    /// More log output on stderr (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus statistics as JSON
    Stats(CorpusArgs),
    /// Build a vocabulary file from a corpus
    Vocab {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = jtpred::textpipe::DEFAULT_MIN_FREQ)]
        min_freq: usize,
        /// Output file
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train a model and write the checkpoint, history and resolved config
    Train(Box<TrainArgs>),
    /// Mean example-F1 and the per-cardinality table for a labelled corpus
    Eval(EvalArgs),
    /// Predict titles for JSONL records of {id, description}
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input JSONL, `-` for stdin
        #[arg(short, long, default_value = "-")]
        input: PathBuf,
        /// Output JSONL, `-` for stdout
        #[arg(short, long, default_value = "-")]
        output: PathBuf,
        /// Include per-label probabilities
        #[arg(long)]
        probs: bool,
    },
    /// Sample mispredictions
    Report {
        #[command(flatten)]
        eval: EvalArgs,
    },
}

#[derive(Args)]
struct CorpusArgs {
    /// JSONL corpus file
    corpus: PathBuf,
    /// `builtin` or a catalog file
    #[arg(long, default_value = "builtin")]
    catalog: String,
    /// Drop unknown titles instead of failing
    #[arg(long)]
    skip_unknown: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labelled JSONL corpus
    #[arg(long)]
    corpus: PathBuf,
    /// Runtime catalog to check against the checkpoint's (default: the checkpoint's own)
    #[arg(long)]
    catalog: Option<String>,
    #[arg(long)]
    skip_unknown: bool,
    /// Count a prediction as correct when it shares at least one title with the truth
    #[arg(long)]
    partial: bool,
    /// Maximum number of misprediction samples
    #[arg(long, default_value_t = 10)]
    limit: usize,
}

#[derive(Args)]
pub struct TrainArgs {
    /// JSON run config; flags below override its values
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train_corpus: Option<PathBuf>,
    #[arg(long)]
    test_corpus: Option<PathBuf>,
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(long)]
    catalog: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    dev_fraction: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    min_freq: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    gru_units: Option<usize>,
    #[arg(long)]
    lstm_units: Option<usize>,
    #[arg(long)]
    conv_filters: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    freeze_embeddings: bool,
    #[arg(long)]
    skip_unknown: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let ctx = commands::Context {
        parallelism: if cli.sequential {
            jtpred::par::Parallelism::Sequential
        } else {
            jtpred::par::Parallelism::Parallel
        },
    };
    let result = jtpred::par::with_threads(cli.threads, || match cli.command {
        Command::Stats(a) => commands::stats(&a.corpus, &a.catalog, a.skip_unknown),
        Command::Vocab { corpus, min_freq, out } => {
            commands::vocab(&corpus.corpus, &corpus.catalog, corpus.skip_unknown, min_freq, &out)
        }
        Command::Train(a) => commands::train(&ctx, *a),
        Command::Eval(a) => commands::eval(
            &ctx,
            &a.checkpoint,
            &a.corpus,
            a.catalog.as_deref(),
            a.skip_unknown,
            a.partial,
            a.limit,
        ),
        Command::Predict {
            checkpoint,
            input,
            output,
            probs,
        } => commands::predict(&ctx, &checkpoint, &input, &output, probs),
        Command::Report { eval: a } => commands::report(
            &ctx,
            &a.checkpoint,
            &a.corpus,
            a.catalog.as_deref(),
            a.skip_unknown,
            a.partial,
            a.limit,
        ),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
