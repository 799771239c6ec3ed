//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde::Serialize;

use bds_core::bandit::ScoringMode;
use bds_core::dataset;
use bds_core::eval::{self, Averaging, EvalCriteria, SweepRow};
use bds_core::harness::{self, RunConfig, RunSummary, Strategy};
use bds_core::report::{self, EvalReport, ModelCoverage, SelectReport, ValidationReport};
use bds_core::synthetic::{self, SimulationSpec};

use crate::config::{parse_mode, require_path, CliError, CliResult, FileConfig};

const DEFAULT_RHO: f64 = 0.5;
const DEFAULT_TAU: f64 = 0.5;
const DEFAULT_EXPLORATION: f64 = 0.1;
const DEFAULT_SPLIT: f64 = 0.9;
const DEFAULT_SEEDS: [u64; 4] = [1, 2, 3, 4];
const DEFAULT_CONSENSUS_K: usize = 2;

fn default_classes() -> Vec<String> {
    eval::DEFAULT_ANIMAL_CLASSES.iter().map(|s| s.to_string()).collect()
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(CliError::Io)
}

fn ensure_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(CliError::Io)
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct ValidateArgs {
    /// COCO annotation document.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Pool manifest listing (model, predictions) pairs.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn run_validate(args: &ValidateArgs, file: &FileConfig, _json: bool) -> CliResult<()> {
    let annotations = require_path(args.annotations.as_ref(), file.annotations.as_ref(), "annotations")?;
    let manifest = require_path(args.manifest.as_ref(), file.manifest.as_ref(), "manifest")?;

    let ds = dataset::load_annotations(&annotations)?;
    let pool = dataset::load_pool(&manifest, &ds)?;

    let validation = ValidationReport {
        images: ds.images.len(),
        ground_truth: ds.total_ground_truth(),
        categories: ds.categories.len(),
        models: pool
            .iter()
            .map(|set| ModelCoverage {
                model: set.model_name.clone(),
                images_covered: set.images_covered(),
                total_images: ds.images.len(),
                detections: set.total_detections(),
            })
            .collect(),
    };
    print!("{}", report::validation_text(&validation));
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// IoU threshold; repeat the flag to sweep several values.
    #[arg(long = "rho")]
    pub rho: Vec<f64>,
    /// Confidence threshold; repeat the flag to sweep several values.
    #[arg(long = "tau")]
    pub tau: Vec<f64>,
    /// Accepted class names (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Also evaluate the k-model consensus ensemble as an extra row.
    #[arg(long)]
    pub consensus_k: Option<usize>,
    /// Average per-image metrics instead of pooling counts.
    #[arg(long = "macro")]
    pub macro_averaging: bool,
}

pub fn run_eval(args: &EvalArgs, file: &FileConfig, out_dir: &Path) -> CliResult<()> {
    let annotations = require_path(args.annotations.as_ref(), file.annotations.as_ref(), "annotations")?;
    let manifest = require_path(args.manifest.as_ref(), file.manifest.as_ref(), "manifest")?;

    let rho_list = if !args.rho.is_empty() {
        args.rho.clone()
    } else {
        file.rho.as_ref().map(|v| v.to_vec()).unwrap_or_else(|| vec![DEFAULT_RHO])
    };
    let tau_list = if !args.tau.is_empty() {
        args.tau.clone()
    } else {
        file.tau.as_ref().map(|v| v.to_vec()).unwrap_or_else(|| vec![DEFAULT_TAU])
    };
    let classes = args
        .classes
        .clone()
        .or_else(|| file.classes.clone())
        .unwrap_or_else(default_classes);
    let averaging = if args.macro_averaging || file.macro_averaging.unwrap_or(false) {
        Averaging::Macro
    } else {
        Averaging::Micro
    };
    let consensus_k = args.consensus_k.or(file.consensus_k);

    let mut criteria_list = Vec::with_capacity(rho_list.len() * tau_list.len());
    for &rho in &rho_list {
        for &tau in &tau_list {
            criteria_list.push(EvalCriteria::new(rho, tau, classes.iter().cloned())?);
        }
    }

    let ds = dataset::load_annotations(&annotations)?;
    let pool = dataset::load_pool(&manifest, &ds)?;

    let mut rows = eval::criteria_sweep_with(&ds, &pool, &criteria_list, averaging)?;
    if let Some(k) = consensus_k {
        for criteria in &criteria_list {
            let outcomes: Result<Vec<_>, bds_core::Error> = ds
                .images
                .iter()
                .map(|img| {
                    let per_model: Vec<Vec<bds_core::Detection>> =
                        pool.iter().map(|set| set.detections_for(img.id).to_vec()).collect();
                    let fused = eval::consensus_fuse(&per_model, k, criteria.rho)?;
                    Ok(eval::evaluate_image(&fused, &img.ground_truth, criteria))
                })
                .collect();
            rows.push(SweepRow {
                model: format!("consensus(k={k})"),
                rho: criteria.rho,
                tau: criteria.tau,
                metrics: eval::aggregate_metrics_with(&outcomes?, averaging)?,
            });
        }
    }

    let eval_report = EvalReport { averaging, rows };
    ensure_dir(out_dir)?;
    write_file(
        &out_dir.join("eval.json"),
        &serde_json::to_string_pretty(&eval_report).expect("report serializes"),
    )?;
    write_file(&out_dir.join("eval.csv"), &report::eval_csv(&eval_report))?;
    print!("{}", report::eval_text(&eval_report));
    Ok(())
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliStrategy {
    Ucb,
    BruteForce,
    Consensus,
    All,
}

impl CliStrategy {
    fn parse_name(name: &str) -> CliResult<Self> {
        match name.to_lowercase().as_str() {
            "ucb" => Ok(Self::Ucb),
            "brute-force" | "bruteforce" => Ok(Self::BruteForce),
            "consensus" => Ok(Self::Consensus),
            "all" => Ok(Self::All),
            other => Err(CliError::Config(format!(
                "unknown strategy `{other}` (expected ucb|brute-force|consensus|all)"
            ))),
        }
    }

    fn expand(self) -> Vec<Strategy> {
        match self {
            Self::Ucb => vec![Strategy::Ucb],
            Self::BruteForce => vec![Strategy::BruteForce],
            Self::Consensus => vec![Strategy::Consensus],
            Self::All => vec![Strategy::Ucb, Strategy::BruteForce, Strategy::Consensus],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Ucb => "ucb",
            Self::BruteForce => "brute-force",
            Self::Consensus => "consensus",
            Self::All => "all",
        }
    }
}

#[derive(Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Selection strategy, or `all` for a table with every strategy.
    #[arg(long, value_enum)]
    pub strategy: Option<CliStrategy>,
    /// Run seeds (comma separated); one independent run per seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Train fraction of the train/test split.
    #[arg(long)]
    pub split: Option<f64>,
    /// UCB exploration constant.
    #[arg(long = "c", alias = "C")]
    pub exploration: Option<f64>,
    /// UCB scoring mode: mean | cumulative.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Agreement threshold for the consensus baseline.
    #[arg(long)]
    pub consensus_k: Option<usize>,
    /// Compute brute-force rewards over all images, not just the train split.
    #[arg(long)]
    pub brute_force_full_dataset: bool,
}

/// The fully resolved configuration embedded in every run report. The output
/// directory is deliberately not part of it so reports stay byte-identical
/// across re-runs into different directories.
#[derive(Debug, Clone, Serialize)]
struct SelectConfigEcho {
    annotations: String,
    manifest: String,
    strategy: String,
    rho: f64,
    tau: f64,
    classes: Vec<String>,
    exploration: f64,
    mode: String,
    split_ratio: f64,
    seeds: Vec<u64>,
    consensus_k: usize,
    brute_force_full_dataset: bool,
}

pub fn run_select(args: &SelectArgs, file: &FileConfig, out_dir: &Path) -> CliResult<()> {
    let annotations = require_path(args.annotations.as_ref(), file.annotations.as_ref(), "annotations")?;
    let manifest = require_path(args.manifest.as_ref(), file.manifest.as_ref(), "manifest")?;

    let strategy = match (args.strategy, file.strategy.as_deref()) {
        (Some(s), _) => s,
        (None, Some(name)) => CliStrategy::parse_name(name)?,
        (None, None) => CliStrategy::Ucb,
    };
    let rho = args.rho.or_else(|| file.rho.as_ref().and_then(|v| v.to_vec().first().copied())).unwrap_or(DEFAULT_RHO);
    let tau = args.tau.or_else(|| file.tau.as_ref().and_then(|v| v.to_vec().first().copied())).unwrap_or(DEFAULT_TAU);
    let classes = args
        .classes
        .clone()
        .or_else(|| file.classes.clone())
        .unwrap_or_else(default_classes);
    let exploration = args.exploration.or(file.c).unwrap_or(DEFAULT_EXPLORATION);
    let mode_name = args.mode.clone().or_else(|| file.mode.clone()).unwrap_or_else(|| "mean".into());
    let mode: ScoringMode = parse_mode(&mode_name)?;
    let split_ratio = args.split.or(file.split).unwrap_or(DEFAULT_SPLIT);
    let seeds = args.seeds.clone().or_else(|| file.seeds.clone()).unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
    let consensus_k = args.consensus_k.or(file.consensus_k).unwrap_or(DEFAULT_CONSENSUS_K);
    let brute_full = args.brute_force_full_dataset || file.brute_force_full_dataset.unwrap_or(false);

    let criteria = EvalCriteria::new(rho, tau, classes.iter().cloned())?;
    let echo = SelectConfigEcho {
        annotations: annotations.display().to_string(),
        manifest: manifest.display().to_string(),
        strategy: strategy.name().into(),
        rho,
        tau,
        classes: criteria.animal_classes.iter().cloned().collect(),
        exploration,
        mode: mode.to_string(),
        split_ratio,
        seeds: seeds.clone(),
        consensus_k,
        brute_force_full_dataset: brute_full,
    };

    let ds = dataset::load_annotations(&annotations)?;
    let pool = dataset::load_pool(&manifest, &ds)?;

    let started = Instant::now();
    let mut summaries: Vec<RunSummary> = Vec::new();
    for strat in strategy.expand() {
        let config = RunConfig {
            criteria: criteria.clone(),
            exploration,
            mode,
            split_ratio,
            seeds: seeds.clone(),
            strategy: strat,
            consensus_k,
            brute_force_full_dataset: brute_full,
            pool_manifest: Some(manifest.clone()),
        };
        summaries.push(harness::repeat_and_average(&config, &ds, &pool)?);
    }
    let elapsed = started.elapsed();

    let select_report: SelectReport = report::select_report(
        serde_json::to_value(&echo).expect("config echo serializes"),
        &summaries,
    );
    ensure_dir(out_dir)?;
    write_file(
        &out_dir.join("report.json"),
        &serde_json::to_string_pretty(&select_report).expect("report serializes"),
    )?;
    write_file(&out_dir.join("report.csv"), &report::select_csv(&select_report))?;
    report::write_trace_jsonl(&out_dir.join("trace.jsonl"), &summaries)?;

    print!("{}", report::select_text(&select_report));
    println!("wall time: {:.3} s", elapsed.as_secs_f64());
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct SimulateArgs {
    /// Simulation spec (JSON: scene + arms); built-in default when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

pub fn run_simulate(args: &SimulateArgs, file: &FileConfig, out_dir: &Path) -> CliResult<()> {
    let spec = match args.spec.as_ref().or(file.spec.as_ref()) {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<SimulationSpec>(&text)
                .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))?
        }
        None => SimulationSpec::default(),
    };

    ensure_dir(out_dir)?;
    write_file(
        &out_dir.join("spec.json"),
        &serde_json::to_string_pretty(&spec).expect("spec serializes"),
    )?;
    let paths = synthetic::write_corpus(&spec.scene, &spec.arms, out_dir)?;

    println!("annotations: {}", paths.annotations.display());
    println!("manifest:    {}", paths.manifest.display());
    println!("arms:        {}", paths.predictions.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct ReportArgs {
    /// Saved report file (`report.json` or `eval.json`).
    pub file: PathBuf,
    /// Render as CSV instead of a table.
    #[arg(long)]
    pub csv: bool,
}

pub fn run_report(args: &ReportArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.file)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.file.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", args.file.display())))?;

    if value.get("strategies").is_some() {
        let parsed: SelectReport = serde_json::from_value(value)
            .map_err(|e| CliError::Config(format!("not a valid run report: {e}")))?;
        if args.csv {
            print!("{}", report::select_csv(&parsed));
        } else {
            print!("{}", report::select_text(&parsed));
        }
        Ok(())
    } else if value.get("rows").is_some() {
        let parsed: EvalReport = serde_json::from_value(value)
            .map_err(|e| CliError::Config(format!("not a valid eval report: {e}")))?;
        if args.csv {
            print!("{}", report::eval_csv(&parsed));
        } else {
            print!("{}", report::eval_text(&parsed));
        }
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{} is neither a run report nor an eval report",
            args.file.display()
        )))
    }
}
