//! `mar`: run, evaluate and benchmark the agent, and build its knowledge base.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mar", version, about = "Hierarchical retrieval-augmented mobile automation agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one task and write its trajectory.
    Run(RunArgs),
    /// Score a saved trajectory against completion criteria.
    Eval(EvalArgs),
    /// Run every task of a suite and write an aggregate report.
    Bench(BenchArgs),
    /// Knowledge-base construction.
    #[command(subcommand)]
    Kb(KbCommand),
}

#[derive(Debug, Args)]
struct RetrievalArgs {
    /// Knowledge-base directory (manager.jsonl, operator/, screenshots/).
    #[arg(long)]
    kb: Option<PathBuf>,
    /// `fallback`, `http` (uses MAR_EMBEDDER_URL) or `http:<url>`.
    #[arg(long, default_value = "fallback")]
    embedder: String,
    /// Fail instead of degrading when the embedding service is unreachable.
    #[arg(long)]
    strict_embedder: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Task instruction, or a file containing it.
    #[arg(long)]
    task: String,
    #[arg(long)]
    task_id: Option<String>,
    /// Simulated device scenario.
    #[arg(long, conflicts_with = "device")]
    scenario: Option<PathBuf>,
    /// Real device: `adb` or `adb:<serial>`.
    #[arg(long, required_unless_present = "scenario")]
    device: Option<String>,
    /// JSON map of app name to Android package, for `--device`.
    #[arg(long, requires = "device")]
    apps: Option<PathBuf>,
    /// `scripted:<script.json>`, `http` (uses MAR_PROVIDER_URL) or `http:<url>`.
    #[arg(long)]
    provider: String,
    #[command(flatten)]
    retrieval: RetrievalArgs,
    #[arg(long, default_value_t = 30)]
    max_steps: usize,
    #[arg(long, default_value_t = 5)]
    repeat_cap: usize,
    /// Manager exemplars retrieved at the first step.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also record the run as a raw trace under this staging directory.
    #[arg(long)]
    log_kb: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    criteria: PathBuf,
    /// JSON map of 0-based item index to verdict for manual items.
    #[arg(long)]
    judgments: Option<PathBuf>,
    /// Scenario the run used; enables screen/app predicates and oracle OA/RA.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Per-step human annotations for OA/RA.
    #[arg(long)]
    annotations: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Provider for tasks without a script.
    #[arg(long)]
    provider: Option<String>,
    #[command(flatten)]
    retrieval: RetrievalArgs,
    #[arg(long, default_value_t = 30)]
    max_steps: usize,
    #[arg(long, default_value_t = 5)]
    repeat_cap: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
}

#[derive(Debug, Subcommand)]
enum KbCommand {
    /// Record a saved trajectory as a raw trace in a staging directory.
    Log {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        staging: PathBuf,
        /// Mark the trace as a failed run.
        #[arg(long)]
        failed: bool,
    },
    /// Keep the shortest successful trace per task and stage its entries.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build manager.jsonl from a TSV or JSON source.
    BuildManager {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply accept/reject/edit decisions to staged entries.
    Curate {
        #[arg(long)]
        staging: PathBuf,
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Prompt for entries without a decision before curating.
        #[arg(long)]
        interactive: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
        Command::Kb(k) => commands::kb(k),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
