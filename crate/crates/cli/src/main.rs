//! `iterbeam`: batch command surface for the critique-guided reasoning
//! engine. Exit codes are a stable contract: 0 success, 2 input error,
//! 3 unanswered, 4 backend failure.

mod commands;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "iterbeam",
    version = concat!(env!("CARGO_PKG_VERSION"), " (config fingerprint schema 1)"),
    about = "Critique-guided iterative retrieval-augmented reasoning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and persist a BM25 index over a JSONL corpus.
    Index {
        /// Corpus file: one {"id", "title", "text"} object per line.
        #[arg(long)]
        corpus: PathBuf,
        /// Output index file (written atomically).
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer one question end to end and print the chosen trajectory.
    Ask {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        question: String,
        /// Write the chosen-run record as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write every finished and failed branch as JSONL.
        #[arg(long)]
        audit: Option<PathBuf>,
        /// Override the configured search seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a dataset and print the summary table.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Dataset file; defaults to the configured eval.dataset.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Override the configured search mode.
        #[arg(long)]
        mode: Option<commands::ModeArg>,
        /// Override the configured parallelism.
        #[arg(long)]
        parallelism: Option<usize>,
        /// Report prefix: writes <out>.rows.jsonl and <out>.summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Synthesize trajectory-markup training records from seed instances.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Instances JSONL: {"id", "question", "answer", "documents"}.
        #[arg(long = "in", value_name = "IN")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Annotate unlabeled trajectories with critic judgments.
    Annotate {
        #[arg(long)]
        config: PathBuf,
        /// JSONL: {"id", "text"} with unlabeled trajectory markup.
        #[arg(long = "in", value_name = "IN")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep training records whose outcome score reaches the threshold.
    Filter {
        #[arg(long)]
        config: PathBuf,
        /// Training-record JSONL, as written by synth or annotate.
        #[arg(long = "in", value_name = "IN")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Minimum outcome score kept; defaults to the configured tau.
        #[arg(long)]
        threshold: Option<u8>,
    },
    /// Parse a trajectory-markup file and print its structure.
    Inspect {
        #[arg(long = "in", value_name = "IN")]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Index { corpus, out } => commands::cmd_index(&corpus, &out),
        Command::Ask {
            config,
            question,
            out,
            audit,
            seed,
        } => commands::cmd_ask(&config, &question, out.as_deref(), audit.as_deref(), seed),
        Command::Bench {
            config,
            dataset,
            mode,
            parallelism,
            out,
            seed,
        } => commands::cmd_bench(
            &config,
            dataset.as_deref(),
            mode,
            parallelism,
            out.as_deref(),
            seed,
        ),
        Command::Synth { config, input, out } => commands::cmd_synth(&config, &input, &out),
        Command::Annotate { config, input, out } => commands::cmd_annotate(&config, &input, &out),
        Command::Filter {
            config,
            input,
            out,
            threshold,
        } => commands::cmd_filter(&config, &input, &out, threshold),
        Command::Inspect { input } => commands::cmd_inspect(&input),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
