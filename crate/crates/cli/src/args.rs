use std::path::PathBuf;

use ccgan_core::trainer::EMBEDDER_ACCURACY_FLOOR;
use clap::{Args, Parser, Subcommand};

/// Conditional CycleGAN: attribute- and identity-guided super-resolution.
#[derive(Debug, Parser)]
#[command(name = "ccgan", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the four networks; writes checkpoints, a loss log and sample grids.
    Train(TrainArgs),
    /// Generate high-res images from low-res inputs under chosen conditions.
    Generate(GenerateArgs),
    /// Generate one input under conditions interpolated between two endpoints.
    Interpolate(InterpolateArgs),
    /// Evaluate a checkpoint on a held-out set.
    Eval(EvalArgs),
    /// Finite-difference check of every differentiable primitive and the
    /// composite losses, at 64-bit.
    Gradcheck(GradcheckArgs),
    /// Train the classifier used as identity embedder or fidelity oracle.
    PretrainEmbedder(PretrainArgs),
    /// Validate a dataset and write a summary and preview grid.
    Ingest(IngestArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// INI-style run configuration; built-in defaults when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// `section.key=value` override applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Where to write the embedder checkpoint [default: <output_dir>/embedder.ccgn].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Minimum held-out accuracy.
    #[arg(long, default_value_t = EMBEDDER_ACCURACY_FLOOR)]
    pub floor: f64,
}

/// Dataset to draw inputs from; the checkpoint's test set when omitted.
#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// IDX image file, or a directory of face images.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// IDX label file, or the attribute table of a face directory.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Dataset indices of the inputs, one grid row each.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub inputs: Vec<usize>,
    /// Conditions, one grid column each: a class label, `all` (every class),
    /// `self` (the input's own condition), `@N` (the condition of sample N)
    /// or an explicit vector `[v1 v2 ...]`.
    #[arg(long, value_delimiter = ',')]
    pub conditions: Vec<String>,
    /// Put the low-res input in front of each row.
    #[arg(long)]
    pub with_input: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Dataset index of the input.
    #[arg(long, default_value_t = 0)]
    pub input: usize,
    /// Start condition, same forms as `generate --conditions` except `all`.
    #[arg(long)]
    pub from: String,
    /// End condition.
    #[arg(long)]
    pub to: String,
    /// Columns, endpoints included.
    #[arg(long, default_value_t = 9)]
    pub steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Classifier checkpoint for label fidelity [default: embedder.oracle_checkpoint].
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// Embedder checkpoint for the identity distance; identity-mode
    /// checkpoints carry their own.
    #[arg(long)]
    pub embedder: Option<PathBuf>,
    /// Evaluate only the first N samples.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Run only checks whose name contains this.
    #[arg(long)]
    pub filter: Option<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// IDX image file, or a directory of face images.
    #[arg(long)]
    pub images: PathBuf,
    /// IDX label file, or the attribute table of a face directory.
    #[arg(long)]
    pub labels: PathBuf,
    /// Side length face images are resized to.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Low-res factor to preview.
    #[arg(long, default_value_t = 4)]
    pub factor: usize,
    /// Images in the preview grid.
    #[arg(long, default_value_t = 16)]
    pub preview: usize,
    #[arg(long)]
    pub out: PathBuf,
}
