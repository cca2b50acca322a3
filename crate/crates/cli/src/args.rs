use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use wincel_core::losses::{AlphaGrad, Direction, PadMode};
use wincel_core::simmap::RasterFormat;
use wincel_core::train::{HeadInit, LossKind};
use wincel_datapipe::geo::ProjectionSpec;
use wincel_datapipe::TextType;

/// Parses a snake_case enum value through its serde representation.
pub fn serde_value<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "wincel", version, about = "Weighted contrastive learning from weak text supervision for remote sensing")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Base random seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// JSON config file; CLI flags take precedence over its values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Worker threads (defaults to all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a triplet dataset from GBIF, Wikipedia and EUNIS inputs
    BuildDataset(BuildDatasetArgs),
    /// Generate the synthetic benchmark
    Synth(SynthArgs),
    /// Train a projection head
    Train(TrainArgs),
    /// Zero-shot or linear-probe evaluation
    Eval(EvalArgs),
    /// Finite-difference check of the training gradients
    Gradcheck(GradcheckArgs),
    /// Prompt-similarity raster over gridded image embeddings
    Simmap(SimmapArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    /// Text embeddings: `pseudo` or `file:<path.eemb>`
    #[arg(long)]
    pub provider: Option<String>,

    /// Dimension of pseudo embeddings
    #[arg(long)]
    pub text_dim: Option<usize>,

    /// Seed of pseudo embeddings
    #[arg(long)]
    pub pseudo_seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct BuildDatasetArgs {
    /// GBIF occurrence table (tab-separated)
    #[arg(long, value_name = "FILE")]
    pub gbif: PathBuf,

    /// MediaWiki XML export or directory of wikitext files
    #[arg(long, value_name = "PATH")]
    pub wiki: PathBuf,

    /// EUNIS labels CSV `tile_id,eunis_code`
    #[arg(long, value_name = "FILE")]
    pub eunis: PathBuf,

    /// Keyword list, one per line
    #[arg(long, value_name = "FILE")]
    pub keywords: PathBuf,

    /// Merge table CSV `from_code,to_code_or_REMOVE`
    #[arg(long, value_name = "FILE")]
    pub merge_map: Option<PathBuf>,

    /// Sentence set used for the manifest
    #[arg(long, value_parser = |s: &str| s.parse::<TextType>())]
    pub text_type: Option<TextType>,

    /// `lv95`, `utm<zone>` or a JSON projection object
    #[arg(long, value_parser = |s: &str| s.parse::<ProjectionSpec>())]
    pub projection: Option<ProjectionSpec>,

    /// Grid origin easting in meters
    #[arg(long, allow_hyphen_values = true)]
    pub origin_e: Option<i64>,

    /// Grid origin northing in meters
    #[arg(long, allow_hyphen_values = true)]
    pub origin_n: Option<i64>,

    /// Grid width in meters
    #[arg(long)]
    pub extent_e: Option<i64>,

    /// Grid height in meters
    #[arg(long)]
    pub extent_n: Option<i64>,

    /// Classes with fewer tiles are removed
    #[arg(long)]
    pub min_count: Option<usize>,

    /// Larger classes are subsampled to this many tiles
    #[arg(long)]
    pub cap: Option<usize>,

    /// Spatial block edge in meters
    #[arg(long)]
    pub block_size: Option<i64>,

    /// Train, validation and test fractions, comma separated
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub fractions: Option<Vec<f64>>,

    /// Expected number of final classes
    #[arg(long)]
    pub target_classes: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Sentences per sample
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub informative_fraction: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub informative_spread: Option<f64>,
    #[arg(long)]
    pub distractor_spread: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Manifest JSONL
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,

    /// Sentence bank JSONL
    #[arg(long, value_name = "FILE")]
    pub sentences: PathBuf,

    /// Visual features keyed by tile id
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,

    #[command(flatten)]
    pub provider: ProviderArgs,

    #[arg(long, value_parser = |s: &str| s.parse::<LossKind>())]
    pub loss_kind: Option<LossKind>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Sentences per sample
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub weight_tau: Option<f64>,
    #[arg(long, value_parser = serde_value::<PadMode>)]
    pub pad_mode: Option<PadMode>,
    #[arg(long, value_parser = serde_value::<AlphaGrad>)]
    pub alpha_grad: Option<AlphaGrad>,
    #[arg(long)]
    pub normalize_g: Option<bool>,
    #[arg(long, value_parser = serde_value::<Direction>)]
    pub direction: Option<Direction>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub scheduler_step: Option<usize>,
    #[arg(long)]
    pub scheduler_gamma: Option<f64>,
    /// Bootstrap mixing weight
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub bias: Option<bool>,
    #[arg(long, value_parser = serde_value::<HeadInit>)]
    pub init: Option<HeadInit>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,

    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,

    /// Class names, one per line, in label order
    #[arg(long, value_name = "FILE")]
    pub classes: PathBuf,

    /// Trained head; raw features are evaluated when absent
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,

    #[command(flatten)]
    pub provider: ProviderArgs,

    /// Prompt template with one `{}` placeholder, or empty for bare names
    #[arg(long)]
    pub template: Option<String>,

    /// Class descriptions `name<TAB>text` used in place of names
    #[arg(long, value_name = "FILE")]
    pub descriptions: Option<PathBuf>,

    /// Split to evaluate
    #[arg(long)]
    pub split: Option<String>,

    /// Fit a linear probe on the train split instead of zero-shot prompts
    #[arg(long)]
    pub supervised: bool,

    #[arg(long)]
    pub probe_lr: Option<f64>,
    #[arg(long)]
    pub probe_epochs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// Loss to check; all kinds when absent
    #[arg(long, value_parser = |s: &str| s.parse::<LossKind>())]
    pub loss_kind: Option<LossKind>,

    /// Weight-gradient mode; both when absent
    #[arg(long, value_parser = serde_value::<AlphaGrad>)]
    pub alpha_grad: Option<AlphaGrad>,

    /// Perturb the analytic gradient (negative control)
    #[arg(long)]
    pub corrupt_gradient: bool,

    #[arg(long)]
    pub batches: Option<usize>,
    /// Samples per batch
    #[arg(long)]
    pub n: Option<usize>,
    /// Sentence slots per sample
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub d_in: Option<usize>,
    #[arg(long)]
    pub d_out: Option<usize>,
    /// Finite-difference step
    #[arg(long)]
    pub step: Option<f64>,
    /// Pass threshold on the maximum relative error
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long, value_parser = serde_value::<PadMode>)]
    pub pad_mode: Option<PadMode>,
}

#[derive(Debug, Clone, Args)]
pub struct SimmapArgs {
    /// Raster descriptor JSON
    #[arg(long, value_name = "FILE")]
    pub raster: PathBuf,

    /// Text prompt
    #[arg(long)]
    pub prompt: String,

    /// Head applied to the cell features before scoring
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,

    #[command(flatten)]
    pub provider: ProviderArgs,

    #[arg(long, value_parser = serde_value::<RasterFormat>)]
    pub format: Option<RasterFormat>,

    /// Write raw cosine scores without min-max scaling
    #[arg(long)]
    pub raw: bool,
}
