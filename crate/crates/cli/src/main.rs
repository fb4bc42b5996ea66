//! Batch CLI for reference-free MT evaluation: the debate pipeline,
//! single-call baselines, meta-evaluation statistics, span matching,
//! quality-bucket reports, and deterministic replay. Every command is
//! a client of the HTTP service; without --server an ephemeral server
//! is embedded in-process.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod config;
mod run;
mod stats;

#[derive(Parser)]
#[command(name = "mmad", version, about = "Multidimensional multi-agent debate MT evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the three-stage debate pipeline over a segments file.
    Evaluate(RunArgs),
    /// Run a single-call judge baseline over a segments file.
    Baseline(RunArgs),
    /// Meta-evaluation report from metric and gold score tables.
    MetaEval(MetaEvalArgs),
    /// Corpus span precision/recall/F1 against gold annotations.
    SpanEval(SpanEvalArgs),
    /// Quality-bucket distribution of a scores table.
    Report(ReportArgs),
    /// Re-execute a manifest against its cache and verify outputs.
    Replay(ReplayArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Segments table (lp, system, doc, seg_id, source, target, reference).
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// Gold annotations table; when given, gold_scores.tsv is written
    /// next to the run outputs.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Output directory for the run.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Chat backend: remote, mock, or replay.
    #[arg(long)]
    pub backend: Option<String>,
    /// Mock script (JSONL of {"content": ...} / {"digest": ..., "content": ...}).
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Model identifier sent to the chat endpoint.
    #[arg(long)]
    pub model: Option<String>,
    /// OpenAI-compatible API base, e.g. https://api.openai.com/v1.
    #[arg(long)]
    pub api_base: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Debate strategy: consensus, deliberation, interactive_review,
    /// consultancy_review.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Debate topic: severity, category, entirety.
    #[arg(long)]
    pub topic: Option<String>,
    /// Maximum debate rounds per dimension.
    #[arg(long)]
    pub max_rounds: Option<u32>,
    /// Comma list of dimensions (accuracy,fluency,terminology,style).
    #[arg(long)]
    pub dimensions: Option<String>,
    /// Few-shot examples per Stage-1 call (0 = zero-shot).
    #[arg(long)]
    pub shots: Option<usize>,
    /// Sampling temperature (default 0 for reproducibility).
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Units evaluated concurrently.
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Baseline method: gemba or eaprompt.
    #[arg(long)]
    pub method: Option<String>,
    /// Restrict the run to one language pair.
    #[arg(long)]
    pub lang_pair: Option<String>,
    /// External service URL; omitted embeds a server in-process.
    #[arg(long)]
    pub server: Option<String>,
}

#[derive(Args)]
pub struct MetaEvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Metric scores table (lp, system, seg_id, score).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Gold scores table, or a gold annotations table to score.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Directory to write meta_report.json into.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fixed tie threshold for segment-level accuracy; omitted
    /// calibrates it.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Also report a pooled view across language pairs.
    #[arg(long)]
    pub pool: bool,
    #[arg(long)]
    pub lang_pair: Option<String>,
    #[arg(long)]
    pub server: Option<String>,
}

#[derive(Args)]
pub struct SpanEvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Predicted annotations (annotations.jsonl).
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Gold annotations (gold.tsv or annotations.jsonl).
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Directory to write span_report.json into.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub lang_pair: Option<String>,
    #[arg(long)]
    pub server: Option<String>,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scores table (lp, system, seg_id, score).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Directory to write bucket_report.json into.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub lang_pair: Option<String>,
    #[arg(long)]
    pub server: Option<String>,
}

#[derive(Args)]
pub struct ReplayArgs {
    /// Manifest of the run to replay.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the replayed outputs (default: <run>/replay).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub server: Option<String>,
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Evaluate(args) => run::cmd_run(args, "evaluate").await,
        Command::Baseline(args) => run::cmd_run(args, "baseline").await,
        Command::MetaEval(args) => stats::cmd_meta_eval(args).await,
        Command::SpanEval(args) => stats::cmd_span_eval(args).await,
        Command::Report(args) => stats::cmd_report(args).await,
        Command::Replay(args) => {
            run::cmd_replay(&args.manifest, args.out.as_deref(), args.server.as_deref()).await
        }
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
