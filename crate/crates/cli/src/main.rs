//! `pba`: collect persona corpora, canonicalize them, score bias dimensions
//! and compare audits across models and conditions.

mod commands;
mod context;
mod error;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use crate::context::{Context, Format};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "pba",
    version,
    about = "Persona brainstorm audits of language models"
)]
struct Cli {
    /// Taxonomy file mapping raw terms to categories (default: bundled reference).
    #[arg(long, global = true)]
    taxonomy: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "pba-out")]
    out: PathBuf,
    /// Seed for synthetic corpora and subsampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Format of summary tables.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More logging on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Collect a corpus from a chat-completion endpoint or recorded payloads.
    Generate(commands::generate::GenerateArgs),
    /// Write a seeded synthetic corpus with controllable bias.
    Synth(commands::synth::SynthArgs),
    /// Parse saved model responses into a corpus.
    Ingest(commands::ingest::IngestArgs),
    /// Score the bias dimensions of one or more corpora.
    Audit(commands::audit::AuditArgs),
    /// Pairwise significance of differences between audited models.
    Compare(commands::compare::CompareArgs),
    /// Agreement of audits across conditions or sample sizes.
    Robustness(commands::robustness::RobustnessArgs),
    /// Trajectories, heatmaps, drill-downs and L1 gaps.
    Report(commands::report::ReportArgs),
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .try_init();
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let ctx = Context {
        out: cli.out,
        format: cli.format,
        seed: cli.seed,
        taxonomy: cli.taxonomy,
    };
    match cli.command {
        Command::Generate(args) => commands::generate::run(&ctx, args),
        Command::Synth(args) => commands::synth::run(&ctx, args),
        Command::Ingest(args) => commands::ingest::run(&ctx, args),
        Command::Audit(args) => commands::audit::run(&ctx, args),
        Command::Compare(args) => commands::compare::run(&ctx, args),
        Command::Robustness(args) => commands::robustness::run(&ctx, args),
        Command::Report(args) => commands::report::run(&ctx, args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
