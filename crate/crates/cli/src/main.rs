//! `evinf`: reproducible corpus, training and evaluation runs.
//!
//! Every command that writes artifacts also writes a JSON manifest next to
//! them. Failures print `{"error": CODE, "message": ...}` on stderr and exit
//! with 1 (bad input) or 2 (internal failure).

mod commands;
mod config;
mod error;
mod manifest;
mod resources;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "evinf", version = manifest::VERSION, about = "Evidence inference over clinical-trial reports")]
pub struct Cli {
    /// Flat TOML file with default values for any option below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory that relative input paths are resolved against.
    #[arg(long, global = true, env = "EVINF_DATA_ROOT")]
    pub data_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Canonical,
    Upstream,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Identifier,
    Classifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Signal {
    Independent,
    Dependent,
}

/// Where the corpus lives and how to split it into sentences.
#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Corpus directory (canonical JSONL, or the release layout with `--format upstream`).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// `rules`, or `cmd:PROGRAM ARGS...` for an external splitter.
    #[arg(long)]
    pub segmenter: Option<String>,
}

/// Encoder and optimizer settings.
#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// `hashing[:DIM[:SEED]]`, or `cmd:PROGRAM ARGS...` for an external encoder.
    #[arg(long)]
    pub encoder: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Seed for example order and the held-out split.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Import the published release layout into canonical JSONL.
    Ingest {
        #[arg(long)]
        release: PathBuf,
        /// JSON document overriding the default column and file mapping.
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Load a corpus and check every invariant.
    Validate {
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Corpus statistics, annotator agreement and verification accuracies.
    Stats {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Also write the numbers as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive the abstract-only corpus.
    SubsetAbstracts {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write positive and sampled negative identifier examples as JSONL.
    BuildSamples {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Negatives per positive.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one pipeline stage and save it.
    Train {
        #[arg(long, value_enum)]
        stage: Stage,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Prepend the prompt embedding to the sentence embedding.
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        conditioned: Option<bool>,
        /// Classifier input: gold-sentence, gold-span or ico-only.
        #[arg(long)]
        input_mode: Option<String>,
        /// Identifier negatives per positive.
        #[arg(long)]
        k: Option<usize>,
        /// Seed for negative sampling.
        #[arg(long)]
        sample_seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate saved models under one diagnostic mode.
    Eval {
        /// end2end, oracle-span, oracle-sentence, ico-only or unconditioned.
        #[arg(long)]
        mode: Option<String>,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        identifier: Option<PathBuf>,
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        encoder: Option<String>,
        #[arg(long)]
        split: Option<String>,
        /// Worker threads; 0 picks one per core.
        #[arg(long)]
        workers: Option<usize>,
        /// Directory for report.json and predictions.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate the pipeline for several negative-sampling ratios.
    SweepNegatives {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Comma-separated ratios.
        #[arg(long = "k", value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        #[arg(long)]
        sample_seed: Option<u64>,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a planted-signal synthetic corpus.
    Synth {
        #[arg(long, default_value_t = 200)]
        n_prompts: usize,
        #[arg(long, default_value_t = 10)]
        sentences: usize,
        /// Fixed evidence position; random per article when omitted.
        #[arg(long)]
        evidence_position: Option<usize>,
        #[arg(long, value_enum, default_value_t = Signal::Independent)]
        ico_signal: Signal,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the hashing encoder over the external-encoder line protocol.
    ServeEncoder {
        #[arg(long, default_value_t = 1024)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse() -> CliResult<Cli> {
    Cli::try_parse().map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => e.exit(),
        _ => CliError::Usage(e.to_string().trim_end().to_string()),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let outcome = std::panic::catch_unwind(|| parse().and_then(commands::run));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => {
            eprintln!("{}", serde_json::json!({ "error": "INTERNAL", "message": "unexpected internal failure" }));
            ExitCode::from(2)
        }
    }
}
