//! Command-line surface. Baseline defaults: 100 filters per width over
//! widths 3,4,5, CNN dropout 0.4, hidden size 900, 2 recurrent layers,
//! recurrent dropout 0.15, pooling p=2, 300-dimensional embeddings, Adam
//! at 0.001, decision threshold 0.5.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cdarec_core::model::{CellKind, Variant};

use crate::formats::Format;

#[derive(Parser, Debug)]
#[command(
    name = "cdarec",
    version,
    about = "Concurrent dialogue-act recognition: train, evaluate, and analyze"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write a checkpoint directory plus logs
    Train(TrainArgs),
    /// Score a checkpoint on labeled data, optionally against a second one
    Evaluate(EvaluateArgs),
    /// Print predicted label sets, one line per utterance
    Predict(PredictArgs),
    /// Estimate and print the dialogue-act transition table
    AnalyzeTransitions(AnalyzeArgs),
    /// Sample a synthetic labeled corpus from a planted transition chain
    GenSynthetic(GenArgs),
    /// Verify every gradient path with finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    #[value(alias = "crnn_v1")]
    CrnnV1,
    #[value(alias = "crnn_v2")]
    CrnnV2,
    #[value(alias = "crnn_v3")]
    CrnnV3,
    #[value(alias = "cnn_kim")]
    CnnKim,
    #[value(alias = "cnn_cr")]
    CnnCr,
}

impl VariantArg {
    pub fn to_core(self) -> Variant {
        match self {
            VariantArg::CrnnV1 => Variant::CrnnV1,
            VariantArg::CrnnV2 => Variant::CrnnV2,
            VariantArg::CrnnV3 => Variant::CrnnV3,
            VariantArg::CnnKim => Variant::CnnKim,
            VariantArg::CnnCr => Variant::CnnCr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CellArg {
    Lstm,
    Gru,
}

impl CellArg {
    pub fn to_core(self) -> CellKind {
        match self {
            CellArg::Lstm => CellKind::Lstm,
            CellArg::Gru => CellKind::Gru,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

/// Flags that override single model settings; unset means the default.
#[derive(Args, Debug)]
pub struct ModelOverrides {
    /// Filters per convolution width
    #[arg(long)]
    pub filters: Option<usize>,
    /// Comma-separated convolution widths (baselines use the first)
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    /// Recurrent hidden size per direction
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Stacked recurrent layers
    #[arg(long)]
    pub layers: Option<usize>,
    /// Embedding dimension
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Chunks kept by dynamic pooling (v3)
    #[arg(long)]
    pub pool_p: Option<usize>,
    /// Dropout after pooling
    #[arg(long)]
    pub cnn_dropout: Option<f64>,
    /// Dropout between stacked recurrent layers
    #[arg(long)]
    pub rnn_dropout: Option<f64>,
    /// Context window of the windowed CNN baseline (odd)
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Labeled corpus file
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Native)]
    pub format: Format,
    /// Pretrained embedding text file (token then vector per line)
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Keep the embedding table fixed during training
    #[arg(long)]
    pub freeze_embeddings: bool,
    #[arg(long, value_enum, default_value_t = VariantArg::CrnnV3)]
    pub variant: VariantArg,
    #[arg(long, value_enum, default_value_t = CellArg::Lstm)]
    pub cell: CellArg,
    /// Seed for the split, parameter init, shuffling, and dropout
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Stop after this many epochs without validation improvement
    #[arg(long)]
    pub patience: Option<usize>,
    /// Probability threshold for turning scores into labels
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Minimum token frequency for the vocabulary
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    /// Output directory (checkpoint/, training_log.txt, metrics.json)
    #[arg(long, default_value = "cdarec-run")]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: ModelOverrides,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Checkpoint directory written by `train`
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Native)]
    pub format: Format,
    /// Score only this part of the seeded 8:1:1 split (seed from the
    /// checkpoint); default scores the whole corpus
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Second checkpoint: runs the paired t-test on per-utterance accuracy
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Write the metrics JSON here as well
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus file; labels may be empty
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Native)]
    pub format: Format,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Also write the prediction lines to this file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Native)]
    pub format: Format,
    /// Decimal places in the rendered percentages
    #[arg(long, default_value_t = 1)]
    pub decimals: usize,
    /// Write the machine-readable matrix here
    #[arg(long)]
    pub matrix_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Native corpus file to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub dialogues: usize,
    #[arg(long, default_value_t = 3)]
    pub min_len: usize,
    #[arg(long, default_value_t = 12)]
    pub max_len: usize,
    /// Probability of each extra noise token after the keywords
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Planted transition matrix file; defaults to a built-in chain
    #[arg(long)]
    pub matrix: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    /// Maximum allowed normalized error
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}
