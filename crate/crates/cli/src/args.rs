use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "dpage", version, about = "Diverse paraphrase generation with pattern embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with known rewriting patterns.
    GenData(GenDataArgs),
    /// Train a model on `train.tsv` and write a checkpoint.
    Train(TrainArgs),
    /// Decode K outputs per input line from a checkpoint.
    Decode(DecodeArgs),
    /// Score decoder outputs against references and write a report.
    Eval(EvalArgs),
    /// Print the JSON schema of `report.json`.
    Schema,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dataset {
    SynSub,
    SynScale,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub dataset: Dataset,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of rewriting patterns.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
    /// Source vocabulary size (syn-sub only).
    #[arg(long)]
    pub source_vocab: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub embed: Option<usize>,
    #[arg(long)]
    pub pattern_dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory holding `train.tsv`.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for `model.ckpt` and `training_log.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// dpage, seq2seq, noise or vae.
    #[arg(long, default_value = "dpage")]
    pub mode: String,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    /// Last epoch trained at the initial learning rate.
    #[arg(long)]
    pub decay_start: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Tokens seen fewer times are mapped to the unknown token.
    #[arg(long, default_value_t = 1)]
    pub min_freq: usize,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// One whitespace-tokenized input per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// dpage, beam, noise, vae or greedy; defaults to the checkpoint's mode.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = dpage_core::decoding::DEFAULT_BEAM)]
    pub beam: usize,
    #[arg(long, default_value_t = dpage_core::decoding::DEFAULT_MAX_LEN)]
    pub max_len: usize,
    /// Seed of the fixed noise vectors (noise and vae modes).
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory holding `decoder_0.txt ..` and, optionally, `decode_meta.json`.
    #[arg(long)]
    pub outputs: PathBuf,
    /// Reference files, one per rewriting pattern.
    #[arg(long, num_args = 1.., required = true)]
    pub refs: Vec<PathBuf>,
    /// Source file the outputs were decoded from.
    #[arg(long)]
    pub src: PathBuf,
    /// Where to write `report.json` and `confusion.csv`; defaults to `--outputs`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Recorded in the report; defaults to the seed in `decode_meta.json`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Words listed per decoder pair in the divergence breakdown.
    #[arg(long, default_value_t = 10)]
    pub top_words: usize,
}
