//! Command-line interface definition.

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "stylevec",
    version,
    about = "Style-difference extraction and anomaly detection on text embeddings",
    long_about = None
)]
pub struct Cli {
    /// TOML manifest providing defaults; explicit flags win.
    #[arg(short, long, global = true, value_name = "FILE")]
    pub config: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Parse per-version verse files and align them into a corpus file
    Ingest(IngestArgs),
    /// Compute embeddings for a corpus (remote service or synthetic generator)
    Embed(EmbedArgs),
    /// Build difference vectors and a deterministic train/test split
    Dataset(DatasetArgs),
    /// Train one autoencoder on a dataset
    Train(TrainArgs),
    /// Evaluate a trained model against anomaly versions
    Eval(EvalArgs),
    /// Run the hyperparameter grid described by a manifest
    Sweep(SweepArgs),
    /// Emit figures and tables from sweep results
    Report(ReportArgs),
    /// Generate a synthetic corpus with embeddings
    Synth(SynthArgs),
}

#[derive(clap::Args)]
pub struct IngestArgs {
    /// Version files (JSON exports), one per version
    #[arg(required = true)]
    pub files: Vec<String>,
    /// Version ids matching the files; defaults to the file stems
    #[arg(long, value_delimiter = ',')]
    pub versions: Vec<String>,
    /// Field-mapping TOML for nonstandard export shapes
    #[arg(long)]
    pub mapping: Option<String>,
    /// Output corpus file
    #[arg(long)]
    pub out: String,
}

#[derive(clap::Args)]
pub struct EmbedArgs {
    /// Corpus file
    #[arg(long)]
    pub corpus: Option<String>,
    /// Embedding provider
    #[arg(long, value_parser = ["remote", "synthetic"])]
    pub provider: Option<String>,
    /// Embedding model id
    #[arg(long)]
    pub model_id: Option<String>,
    /// Embedding cache directory (remote provider)
    #[arg(long)]
    pub cache_dir: Option<String>,
    /// Embedding dimension
    #[arg(long)]
    pub d: Option<usize>,
    /// Remote endpoint base URL, e.g. https://api.openai.com
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Synthetic generator spec (TOML); defaults to the manifest's
    /// [synthetic] section
    #[arg(long)]
    pub synthetic_spec: Option<String>,
    /// Generator seed (synthetic provider)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output embeddings directory
    #[arg(long)]
    pub out: String,
}

#[derive(clap::Args)]
pub struct DatasetArgs {
    #[arg(long)]
    pub corpus: Option<String>,
    #[arg(long)]
    pub embeddings: Option<String>,
    /// Subtraction reference version
    #[arg(long)]
    pub reference: Option<String>,
    /// Trained (normal) version
    #[arg(long)]
    pub target: Option<String>,
    /// Test fraction in (0,1)
    #[arg(long)]
    pub split: Option<f64>,
    /// Split seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train on raw target embeddings instead of difference vectors
    #[arg(long)]
    pub no_subtract: bool,
    /// Input range policy
    #[arg(long, value_parser = ["assert", "scale"])]
    pub range_policy: Option<String>,
    /// Output dataset directory
    #[arg(long)]
    pub out: String,
}

#[derive(clap::Args)]
pub struct TrainArgs {
    /// Dataset directory from `dataset`
    #[arg(long)]
    pub dataset: String,
    /// Hidden layer count
    #[arg(long)]
    pub layers: Option<usize>,
    /// Latent feature dimension
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Use the variational model
    #[arg(long)]
    pub variational: bool,
    /// KL weight (variational mode)
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Training seed (init, shuffling, sampling)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Loss history CSV path
    #[arg(long)]
    pub loss_csv: Option<String>,
    /// Output checkpoint path
    #[arg(long)]
    pub out: String,
}

#[derive(clap::Args)]
pub struct EvalArgs {
    /// Model checkpoint
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub corpus: Option<String>,
    #[arg(long)]
    pub embeddings: Option<String>,
    /// Dataset directory (provides the split and the normal test vectors)
    #[arg(long)]
    pub dataset: String,
    /// Anomaly version ids
    #[arg(long, value_delimiter = ',')]
    pub anomalies: Vec<String>,
    /// Threshold grid; defaults to 0.1..=1.4 step 0.1
    #[arg(long, value_delimiter = ',')]
    pub alphas: Vec<f64>,
    /// Balanced accuracy-set size
    #[arg(long)]
    pub balanced: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: String,
}

#[derive(clap::Args)]
pub struct SweepArgs {
    /// Run manifest (TOML)
    #[arg(long)]
    pub manifest: String,
    /// Worker thread count
    #[arg(long)]
    pub workers: Option<usize>,
    /// Results directory (overrides the manifest)
    #[arg(long)]
    pub out_dir: Option<String>,
}

#[derive(clap::Args)]
pub struct ReportArgs {
    /// Sweep results directory
    #[arg(long)]
    pub results: String,
    /// Which figure to emit
    #[arg(long, default_value = "all", value_parser = ["all", "loss_curves", "error_histograms", "fld_grid", "accuracy_table"])]
    pub kind: String,
    /// Which ablation arm to report
    #[arg(long, default_value = "subtraction", value_parser = ["subtraction", "no_subtraction"])]
    pub ablation: String,
    /// Output directory
    #[arg(long)]
    pub out: String,
}

#[derive(clap::Args)]
pub struct SynthArgs {
    /// Verse count
    #[arg(long)]
    pub verses: Option<usize>,
    /// Embedding dimension
    #[arg(long)]
    pub d: Option<usize>,
    /// Generator seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-component noise standard deviation
    #[arg(long)]
    pub noise: Option<f64>,
    /// Per-component content standard deviation
    #[arg(long)]
    pub content_scale: Option<f64>,
    /// Reference version id (zero style)
    #[arg(long, default_value = "REF")]
    pub reference: String,
    /// Trained version id
    #[arg(long, default_value = "A")]
    pub trained: String,
    /// Norm of the trained version's style vector
    #[arg(long)]
    pub style_norm: Option<f64>,
    /// Anomaly versions as `id=gap` pairs; gaps are multiples of the
    /// expected diff-noise norm sqrt(2 d) * noise
    #[arg(long, value_delimiter = ',')]
    pub style_gaps: Vec<String>,
    /// Full synthetic spec TOML (overrides the flags above)
    #[arg(long)]
    pub spec: Option<String>,
    /// Output directory (corpus.jsonl + emb/)
    #[arg(long)]
    pub out: String,
}
