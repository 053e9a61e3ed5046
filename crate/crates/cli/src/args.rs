//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use crosswalk_core::crosswalk::Mode;
use crosswalk_core::prompt::PromptPack;

#[derive(Debug, Parser)]
#[command(name = "crosswalk", version, about = "Aspect-by-aspect crosswalks of policy document pairs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract activity items from every document with every model.
    Extract(ExtractArgs),
    /// Compare document pairs and assemble the score tensor.
    Crosswalk(CrosswalkArgs),
    /// Heatmaps, model-pair distances, ensembles and annotator agreement.
    Analyze(AnalyzeArgs),
    /// Serve the review API over finished runs.
    Serve(ServeArgs),
    /// Manage recorded model responses.
    #[command(subcommand)]
    Fixtures(FixturesCommand),
}

fn at_least_one(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Corpus manifest (JSON listing label, title, entity, path).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Taxonomy JSON; the built-in 15-aspect taxonomy when omitted.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Model config file.
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long, default_value = "en")]
    pub pack: PromptPack,
    #[arg(long, default_value = "repair")]
    pub mode: Mode,
    #[arg(long, default_value_t = 4, value_parser = at_least_one)]
    pub parallelism: usize,
    /// Output root; each run writes to `<out>/<run-id>/`.
    #[arg(long)]
    pub out: PathBuf,
    /// Fail on any request without a recorded response.
    #[arg(long, conflicts_with = "record")]
    pub replay_only: bool,
    /// Store live responses in the fixture directory.
    #[arg(long)]
    pub record: bool,
    /// Fixture directory; `<out>/fixtures` when omitted.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Run id; derived from the configuration when omitted.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Base delay before retrying a transient backend failure.
    #[arg(long, default_value_t = 1000)]
    pub retry_delay_ms: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub common: PipelineArgs,
    /// Validate precomputed extractions from this directory instead of
    /// calling models. Accepts `<label>.xml` or `extraction_<label>_*.json`.
    #[arg(long)]
    pub extractions_from: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct Pairing {
    /// Pair this document with every other one.
    #[arg(long)]
    pub anchor: Option<String>,
    /// Compare every unordered pair.
    #[arg(long)]
    pub all_pairs: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CrosswalkArgs {
    #[command(flatten)]
    pub common: PipelineArgs,
    #[command(flatten)]
    pub pairing: Pairing,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Run to analyze. Optional when `--out` holds a single run or when
    /// `--tensor` is given.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Score tensor CSV; the run's `tensors/scores.csv` when omitted.
    #[arg(long)]
    pub tensor: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Annotation files; `<out>/annotations` when omitted and present.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum FixturesCommand {
    /// Copy recorded responses from another fixture directory.
    Import {
        /// Source fixture directory.
        from: PathBuf,
        #[arg(long)]
        fixtures: PathBuf,
    },
    /// Print one line per recorded response.
    List {
        #[arg(long)]
        fixtures: PathBuf,
    },
}
