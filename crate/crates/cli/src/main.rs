//! `bds` — bandit-driven detector selection.
//!
//! Subcommands: `validate` (ingestion checks), `eval` (criteria sweeps),
//! `select` (UCB / brute-force / consensus runs), `simulate` (synthetic
//! corpus generation), `report` (re-render saved reports). Log level comes
//! from the `BDS_LOG` environment variable.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::CliError;

#[derive(Parser)]
#[command(name = "bds", version, about = "Select the best object detector with a UCB bandit")]
struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Emit machine-readable errors as JSON on stderr.
    #[arg(long, global = true)]
    json: bool,

    /// Output directory for generated files and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for parallel evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and cross-check annotations and the prediction pool.
    Validate(commands::ValidateArgs),
    /// Per-model precision/recall/F1 tables over criteria combinations.
    Eval(commands::EvalArgs),
    /// Run a selection strategy (or all of them) and write the run report.
    Select(commands::SelectArgs),
    /// Generate a synthetic COCO corpus with a known-quality arm pool.
    Simulate(commands::SimulateArgs),
    /// Render a saved JSON report as a table or CSV.
    Report(commands::ReportArgs),
}

fn exit_code_for(err: &CliError) -> u8 {
    match err {
        CliError::Core(core) => match core {
            bds_core::Error::PlacementFailure { .. } => 3,
            bds_core::Error::Internal { .. } => 4,
            _ => 2,
        },
        _ => 2,
    }
}

fn report_error(err: &CliError, as_json: bool) {
    if as_json {
        let kind = match err {
            CliError::Core(core) => core.kind(),
            CliError::Config(_) => "Config",
            CliError::Io(_) => "Io",
        };
        let payload = serde_json::json!({
            "error": { "kind": kind, "message": err.to_string() }
        });
        eprintln!("{payload}");
    } else {
        eprintln!("error: {err}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BDS_LOG", "warn")).init();
    let cli = Cli::parse();

    if let Some(threads) = cli.threads {
        // Best effort; the pool can only be configured once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }

    let file_config = match config::load_file_config(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(err) => {
            report_error(&err, cli.json);
            return ExitCode::from(exit_code_for(&err));
        }
    };
    let out_dir = cli.out.clone().or_else(|| file_config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));

    let result = match &cli.command {
        Command::Validate(args) => commands::run_validate(args, &file_config, cli.json),
        Command::Eval(args) => commands::run_eval(args, &file_config, &out_dir),
        Command::Select(args) => commands::run_select(args, &file_config, &out_dir),
        Command::Simulate(args) => commands::run_simulate(args, &file_config, &out_dir),
        Command::Report(args) => commands::run_report(args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            report_error(&err, cli.json);
            ExitCode::from(exit_code_for(&err))
        }
    }
}
