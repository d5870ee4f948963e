mod commands;
mod config;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use utd_core::biaseval::BiasMode;
use utd_core::corpus::Concept;
use utd_core::represent::{ConceptKind, Temporal};

/// Measure representation biases in video benchmarks and build debiased splits.
#[derive(Debug, Parser)]
#[command(name = "utd", version)]
struct Cli {
    /// TOML file with endpoint, training and seed settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use the built-in deterministic endpoints (no network).
    #[arg(long, global = true)]
    stub: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Describe every frame with the vision-language endpoint.
    Annotate(AnnotateArgs),
    /// Derive objects, activities, verbs and short summaries from frame descriptions.
    Extract(ExtractArgs),
    /// Precompute embeddings for the requested representations.
    Embed(EmbedArgs),
    /// Evaluate the concept x temporal bias grid.
    Bias(BiasArgs),
    /// Build a debiased evaluation split.
    Split(SplitArgs),
    /// Fleiss' kappa of a saved verdict matrix.
    Kappa(KappaArgs),
    /// Score model predictions on the full test set and on splits.
    Benchmark(BenchmarkArgs),
    /// Check a manifest and, optionally, description completeness.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct Inputs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    descriptions: PathBuf,
}

#[derive(Debug, Args)]
struct AnnotateArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Directory for cached endpoint responses.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_delimiter = ',', default_values = ["objects", "activities", "verbs", "obj_comp_act_15w"])]
    concepts: Vec<Concept>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// TOML file replacing the bundled few-shot exemplars.
    #[arg(long)]
    exemplars: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long, value_delimiter = ',', default_values = ["objects", "activities", "verbs", "obj_comp_act"])]
    concepts: Vec<ConceptKind>,
    #[arg(long, value_delimiter = ',', default_values = ["middle_frame", "max_score_frame", "avg_over_frames", "seq_of_frames"])]
    temporals: Vec<Temporal>,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    embed_cache: PathBuf,
    /// Also embed the debiasing panel's prompt variants.
    #[arg(long)]
    panel: bool,
}

#[derive(Debug, Args)]
struct BiasArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    grid: GridArgs,
    /// cs (zero-shot) or ds (probe trained on the train split).
    #[arg(long, default_value = "cs")]
    mode: BiasMode,
    #[arg(long)]
    embed_cache: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Defaults to ds for classification and cs for retrieval.
    #[arg(long)]
    mode: Option<BiasMode>,
    /// Keep the original class proportions (classification).
    #[arg(long)]
    balanced: bool,
    /// Three bootstrap seeds for the classification panel.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    embed_cache: Option<PathBuf>,
    /// Split file to write; verdicts, stats and provenance go next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct KappaArgs {
    #[arg(long)]
    verdicts: PathBuf,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Line-delimited prediction files, one per model.
    #[arg(long, value_delimiter = ',', required = true)]
    preds: Vec<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    splits: Vec<PathBuf>,
    /// CSV report; Markdown and JSON versions are written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    descriptions: Option<PathBuf>,
    /// Concepts that must be complete; defaults to those present.
    #[arg(long, value_delimiter = ',')]
    concepts: Option<Vec<Concept>>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("UTD_LOG", "warn")).init();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
