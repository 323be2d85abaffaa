//! `vlat` — annotate forum corpora with a violence taxonomy through a
//! batched chat-completion backend, measure agreement against human coders,
//! calibrate the batch size, and analyze temporal trends.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Exit codes: 1 usage/config, 2 I/O, 3 backend exhaustion, 4 partial
/// annotation failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Backend(String),
    Partial { failed: usize },
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Backend(_) => 3,
            CliError::Partial { .. } => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Backend(m) => m.clone(),
            CliError::Partial { failed } => {
                format!("{failed} posts could not be annotated; see failures.jsonl")
            }
        }
    }
}

#[derive(Parser)]
#[command(name = "vlat", version, about = "Violent-language annotation toolkit")]
struct Cli {
    /// TOML config file; command-line flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic step (sampling, permutation tests)
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a JSONL/CSV post file into a normalized corpus
    Ingest(IngestArgs),
    /// Annotate corpus posts through a backend
    Annotate(AnnotateArgs),
    /// Sweep batch sizes and select the one closest to the human reference
    Sweep(SweepArgs),
    /// Pairwise agreement matrix over annotation files
    Agree(AgreeArgs),
    /// Segment user timelines into sessions by inactivity threshold
    Sessions(SessionsArgs),
    /// Fit OLS trends to violent-share series
    Regress(RegressArgs),
    /// Project annotation input costs
    Cost(CostArgs),
    /// Assemble a combined Markdown report
    Report(ReportArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    /// Input posts file (JSONL or CSV)
    pub input: PathBuf,
    /// Input format; inferred from the extension when omitted
    #[arg(long)]
    pub format: Option<String>,
    /// Output directory (writes corpus.jsonl and ingest.json)
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AnnotateArgs {
    /// Corpus file (JSONL or CSV)
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Backend kind: remote, mock, or replay
    #[arg(long)]
    pub backend: Option<String>,
    /// Prompt template file with front-matter header
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Built-in template id (baseline, context-hint, give-reason, few-shot, final)
    #[arg(long)]
    pub builtin_template: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Annotate a deterministic sample of this many posts
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub token_budget: Option<u64>,
    #[arg(long)]
    pub price_per_1000: Option<f64>,
    #[arg(long)]
    pub run_id: Option<String>,
    /// Mock backend rules file (JSON)
    #[arg(long)]
    pub mock_rules: Option<PathBuf>,
    /// Replay backend fixture file
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long)]
    pub builtin_template: Option<String>,
    /// Comma-separated batch sizes (default 10,20,50,100,200)
    #[arg(long)]
    pub sizes: Option<String>,
    /// Human annotation files; enable the reference distribution and
    /// per-size agreement reports
    #[arg(long)]
    pub human: Vec<PathBuf>,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub mock_rules: Option<PathBuf>,
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AgreeArgs {
    /// Annotation files (JSONL or CSV); annotators are discovered inside
    #[arg(required = true)]
    pub annotations: Vec<PathBuf>,
    /// Annotator ids to treat as human baselines (affects row markers)
    #[arg(long)]
    pub human: Vec<String>,
    /// coarse (3-class) or full (7-label)
    #[arg(long, default_value = "coarse")]
    pub granularity: String,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SessionsArgs {
    pub corpus: PathBuf,
    /// Inactivity threshold, e.g. 1h, 12h, 24h, 14d, 180d
    #[arg(long, default_value = "24h")]
    pub threshold: String,
    /// Restrict to one user
    #[arg(long)]
    pub user: Option<String>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct RegressArgs {
    /// Fit a series file directly (CSV: bin_start,share,n_posts)
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Annotation file supplying the labels
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// forum, user, or window:<duration>
    #[arg(long)]
    pub scope: Option<String>,
    /// combined, explicit, implicit, non-violent, directed, general, self-directed
    #[arg(long)]
    pub category: Option<String>,
    #[arg(long)]
    pub bin_width: Option<String>,
    /// Weight bins by post count instead of equally
    #[arg(long)]
    pub weighted: bool,
    /// Emit per-subfigure series CSVs and a regressions table to this directory
    #[arg(long)]
    pub figure_data: Option<PathBuf>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CostArgs {
    #[arg(long)]
    pub posts: u64,
    #[arg(long)]
    pub batch_size: u64,
    #[arg(long)]
    pub prompt_tokens: Option<u64>,
    #[arg(long)]
    pub post_tokens: Option<u64>,
    /// Price per 1,000 input tokens
    #[arg(long)]
    pub price: Option<f64>,
    /// Print the projection as JSON
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Model annotation file
    #[arg(long)]
    pub annotations: PathBuf,
    /// Human annotation files
    #[arg(long)]
    pub human: Vec<PathBuf>,
    /// Corpus file; adds the engagement section
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let file_config = match config::FileConfig::load(cli.config.as_deref()) {
        Ok(config) => config,
        Err(error) => exit_with(error),
    };
    let seed = cli.seed.or(file_config.seed).unwrap_or(0);
    let result = match cli.command {
        Command::Ingest(args) => commands::ingest::run(&args, &file_config),
        Command::Annotate(args) => commands::annotate::run(&args, &file_config, seed),
        Command::Sweep(args) => commands::sweep::run(&args, &file_config, seed),
        Command::Agree(args) => commands::agree::run(&args, &file_config, seed),
        Command::Sessions(args) => commands::sessions::run(&args, &file_config, seed),
        Command::Regress(args) => commands::regress::run(&args, &file_config, seed),
        Command::Cost(args) => commands::cost::run(&args),
        Command::Report(args) => commands::report::run(&args, &file_config, seed),
    };
    if let Err(error) = result {
        exit_with(error);
    }
}

fn exit_with(error: CliError) -> ! {
    eprintln!("error: {}", error.message());
    std::process::exit(error.exit_code());
}
