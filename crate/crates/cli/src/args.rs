use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use refertriage::model::ModelKind;
use refertriage::perturb::NoiseKind;
use refertriage::{Strategy, Variant};

#[derive(Debug, Parser)]
#[command(
    name = "refertriage",
    version,
    about = "Referral-to-procedure prediction experiments",
    propagate_version = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Corpus statistics (counts, class balance, text lengths)
    Stats,
    /// Write an embedding file for the corpus
    Embed,
    /// Stratified cross-validation with train-only rebalancing
    Cv,
    /// ROC-AUC per noise kind and level
    NoiseSweep,
    /// Cross-validate each balancing strategy with paired tests
    BalanceCompare,
    /// Cross-validate each model family with paired tests
    ModelCompare,
    /// Precision, recall and F1 over decision thresholds
    ThresholdSweep,
    /// Two-dimensional projection of the embeddings
    Project,
    /// Capture-efficiency economics and rate comparison
    Simulate,
    /// Generate a synthetic corpus and code dictionary
    Synth,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Stats => "stats",
            Command::Embed => "embed",
            Command::Cv => "cv",
            Command::NoiseSweep => "noise-sweep",
            Command::BalanceCompare => "balance-compare",
            Command::ModelCompare => "model-compare",
            Command::ThresholdSweep => "threshold-sweep",
            Command::Project => "project",
            Command::Simulate => "simulate",
            Command::Synth => "synth",
        }
    }
}

/// Flags that override the JSON config file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// JSON run configuration
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; every random component derives from it
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Referral CSV
    #[arg(long, global = true, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// ICD-10 description CSV (`code,description`)
    #[arg(long, global = true, value_name = "PATH")]
    pub dictionary: Option<PathBuf>,
    /// Precomputed embedding file instead of the built-in embedder
    #[arg(long, global = true, value_name = "PATH")]
    pub embeddings: Option<PathBuf>,
    /// Number of cross-validation folds (default 5)
    #[arg(long, global = true)]
    pub k_folds: Option<usize>,
    /// Balancing strategy; a comma list for balance-compare
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_strategy)]
    pub balance: Option<Vec<Strategy>>,
    /// Model family; a comma list for model-compare
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_model)]
    pub model: Option<Vec<ModelKind>>,
    /// Nested grid search over forest hyperparameters
    #[arg(long, global = true)]
    pub grid: bool,
    /// Text variant to embed: base or hyde (needs --dictionary)
    #[arg(long, global = true, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Noise kind(s): char_sub, char_del, word_swap, word_del
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_noise)]
    pub noise_kind: Option<Vec<NoiseKind>>,
    /// Noise level(s) in [0, 0.5]
    #[arg(long, global = true, value_delimiter = ',')]
    pub noise_level: Option<Vec<f64>>,
    /// Spacing of the threshold grid on [0, 1] (default 0.01)
    #[arg(long, global = true)]
    pub threshold_grid_step: Option<f64>,
    /// Externally computed coordinates (`record_id,x,y`) for project
    #[arg(long, global = true, value_name = "PATH")]
    pub coordinates: Option<PathBuf>,
    /// Group size behind the baseline rate in the rate comparison
    #[arg(long, global = true)]
    pub n_baseline: Option<u64>,
    /// Group size behind the model rate in the rate comparison
    #[arg(long, global = true)]
    pub n_model: Option<u64>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: refertriage::Error| e.to_string())
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: refertriage::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: refertriage::Error| e.to_string())
}

fn parse_noise(s: &str) -> Result<NoiseKind, String> {
    s.parse().map_err(|e: refertriage::Error| e.to_string())
}
