//! `visperf`: design, simulate, serve, analyze, fit and score graphical
//! perception studies.

mod commands;
mod manifest;
mod posterior_cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "visperf", version, about = "Graphical perception study toolkit")]
pub struct Cli {
    /// Seed for every random choice this invocation makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Only report warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a study design (8 training + 1200 main trials).
    Design(DesignArgs),
    /// Simulate participants' responses to a design.
    Simulate(SimulateArgs),
    /// Run the study service.
    Serve(ServeArgs),
    /// Bootstrapped means of midmeans per chart.
    AnalyzeClassical(ClassicalArgs),
    /// Fit the hierarchical model and write posterior draws.
    Fit(FitArgs),
    /// Summaries computed from a fit directory.
    AnalyzePosterior(PosteriorArgs),
    /// Score fitted participants (same as `analyze-posterior --what score`).
    Score(ScoreArgs),
    /// Export responses from a service data directory without running it.
    Export(ExportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DesignArgs {
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Population parameters JSON; built-in defaults when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub participants: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the realized parameters as `parameter,value` CSV.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// Defaults to $VISPERF_PORT, then 8080.
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Static UI bundle served at `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Listen on all interfaces instead of loopback.
    #[arg(long)]
    pub public: bool,
    /// Skip fsync after journal appends.
    #[arg(long)]
    pub no_fsync: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassicalArgs {
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the exclusion report.
    #[arg(long)]
    pub exclusions: Option<PathBuf>,
    /// Analyze participants who fail the attention checks too.
    #[arg(long)]
    pub keep_excluded: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 1000)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 0.8)]
    pub target_accept: f64,
    #[arg(long, default_value_t = 10)]
    pub max_tree_depth: usize,
    /// Model config in `key = value` form; the final model when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub keep_excluded: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum What {
    Cdf,
    Diff,
    Sd,
    Corr,
    Rank,
    Score,
}

#[derive(Debug, Args, Serialize)]
pub struct PosteriorArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long, value_enum)]
    pub what: What,
    #[arg(long)]
    pub out: PathBuf,
    /// Simulated people per draw for `sd` and `rank`.
    #[arg(long)]
    pub n_people: Option<usize>,
    /// Participants for `cdf` (one) or `score` (any number; all when omitted).
    #[arg(long = "participant")]
    pub participants: Vec<String>,
    /// Observed responses, for empirical means in `score`.
    #[arg(long, requires = "design")]
    pub responses: Option<PathBuf>,
    #[arg(long, requires = "responses")]
    pub design: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long = "participant")]
    pub participants: Vec<String>,
    #[arg(long, requires = "design")]
    pub responses: Option<PathBuf>,
    #[arg(long, requires = "responses")]
    pub design: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub include_training: bool,
    #[arg(long)]
    pub include_partial: bool,
}

fn init_logging(quiet: bool) {
    use tracing_subscriber::EnvFilter;
    let default = if quiet { "warn" } else { "info" };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .with_target(false)
        .without_time()
        .try_init();
}

fn main() -> ExitCode {
    // Usage errors exit with 2 (clap's convention); help and version with 0.
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    init_logging(cli.quiet);
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
