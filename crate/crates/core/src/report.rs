//! Deterministic report rendering: JSON and CSV tables for sweeps and
//! selection runs, plus the JSON-lines trace writer.
//!
//! Output is diffable by construction: struct fields serialize in a fixed
//! order, metrics are presented at three decimal places, and nothing
//! volatile (timing, absolute output paths) is embedded.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Averaging, SweepRow};
use crate::harness::{MeanMetrics, ModalWinner, RunSummary, Strategy, TraceEntry};

/// Fixed three-decimal presentation used across tables.
pub fn fmt3(value: f64) -> String {
    format!("{value:.3}")
}

/// Round half away from zero to three decimals (presentation values stored
/// in JSON reports).
pub fn round3(value: f64) -> f64 {
    (value * 1000.0).round() / 1000.0
}

// ---------------------------------------------------------------------------
// Evaluation sweep reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub averaging: Averaging,
    pub rows: Vec<SweepRow>,
}

pub fn eval_csv(report: &EvalReport) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["model", "rho", "tau", "precision", "recall", "f1", "sum_g", "sum_d", "sum_b"])
        .expect("csv header");
    for row in &report.rows {
        wtr.write_record([
            row.model.clone(),
            row.rho.to_string(),
            row.tau.to_string(),
            fmt3(row.metrics.precision),
            fmt3(row.metrics.recall),
            fmt3(row.metrics.f1),
            row.metrics.total_g.to_string(),
            row.metrics.total_d.to_string(),
            row.metrics.total_b.to_string(),
        ])
        .expect("csv row");
    }
    String::from_utf8(wtr.into_inner().expect("csv flush")).expect("csv utf-8")
}

pub fn eval_text(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("averaging: {}\n", report.averaging));
    out.push_str(&format!(
        "{:<24} {:>5} {:>5} {:>10} {:>8} {:>8} {:>7} {:>7} {:>7}\n",
        "model", "rho", "tau", "precision", "recall", "f1", "sum_g", "sum_d", "sum_b"
    ));
    for row in &report.rows {
        out.push_str(&format!(
            "{:<24} {:>5} {:>5} {:>10} {:>8} {:>8} {:>7} {:>7} {:>7}\n",
            row.model,
            row.rho,
            row.tau,
            fmt3(row.metrics.precision),
            fmt3(row.metrics.recall),
            fmt3(row.metrics.f1),
            row.metrics.total_g,
            row.metrics.total_d,
            row.metrics.total_b,
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Selection run reports
// ---------------------------------------------------------------------------

/// One seed's line in the report (trace lives in the separate trace file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub winner: Option<String>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub inference_count: u64,
}

/// Per-strategy block: per-seed rows, three-decimal averages, modal winner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyBlock {
    pub strategy: Strategy,
    pub per_seed: Vec<SeedRow>,
    pub mean: MeanMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modal_winner: Option<ModalWinner>,
}

/// Full selection report: the resolved configuration echo plus one block per
/// strategy that ran.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectReport {
    pub config: serde_json::Value,
    pub strategies: Vec<StrategyBlock>,
}

impl StrategyBlock {
    pub fn from_summary(summary: &RunSummary) -> Self {
        StrategyBlock {
            strategy: summary.strategy,
            per_seed: summary
                .per_seed
                .iter()
                .map(|run| SeedRow {
                    seed: run.seed,
                    winner: run.result.winner_model.clone(),
                    precision: run.result.metrics.precision,
                    recall: run.result.metrics.recall,
                    f1: run.result.metrics.f1,
                    train_size: run.result.train_size,
                    test_size: run.result.test_size,
                    inference_count: run.result.inference_count,
                })
                .collect(),
            mean: MeanMetrics {
                precision: round3(summary.mean.precision),
                recall: round3(summary.mean.recall),
                f1: round3(summary.mean.f1),
            },
            modal_winner: summary.modal_winner.clone(),
        }
    }
}

pub fn select_report(config: serde_json::Value, summaries: &[RunSummary]) -> SelectReport {
    SelectReport {
        config,
        strategies: summaries.iter().map(StrategyBlock::from_summary).collect(),
    }
}

pub fn select_csv(report: &SelectReport) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "strategy",
        "seed",
        "winner",
        "precision",
        "recall",
        "f1",
        "train_size",
        "test_size",
        "inference_count",
    ])
    .expect("csv header");
    for block in &report.strategies {
        for row in &block.per_seed {
            wtr.write_record([
                block.strategy.to_string(),
                row.seed.to_string(),
                row.winner.clone().unwrap_or_else(|| "(ensemble)".into()),
                fmt3(row.precision),
                fmt3(row.recall),
                fmt3(row.f1),
                row.train_size.to_string(),
                row.test_size.to_string(),
                row.inference_count.to_string(),
            ])
            .expect("csv row");
        }
        let modal = block
            .modal_winner
            .as_ref()
            .map(|m| format!("{} ({}/{})", m.model, m.wins, m.runs))
            .unwrap_or_else(|| "(ensemble)".into());
        wtr.write_record([
            block.strategy.to_string(),
            "mean".into(),
            modal,
            fmt3(block.mean.precision),
            fmt3(block.mean.recall),
            fmt3(block.mean.f1),
            String::new(),
            String::new(),
            String::new(),
        ])
        .expect("csv mean row");
    }
    String::from_utf8(wtr.into_inner().expect("csv flush")).expect("csv utf-8")
}

pub fn select_text(report: &SelectReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:>10} {:>8} {:>8}  {}\n",
        "strategy", "precision", "recall", "f1", "winner"
    ));
    for block in &report.strategies {
        let winner = block
            .modal_winner
            .as_ref()
            .map(|m| format!("{} ({}/{} runs)", m.model, m.wins, m.runs))
            .unwrap_or_else(|| "(ensemble)".into());
        out.push_str(&format!(
            "{:<14} {:>10} {:>8} {:>8}  {}\n",
            block.strategy.to_string(),
            fmt3(block.mean.precision),
            fmt3(block.mean.recall),
            fmt3(block.mean.f1),
            winner,
        ));
    }
    out
}

/// One line of the trace file: a pull tagged with its strategy and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub strategy: Strategy,
    pub seed: u64,
    #[serde(flatten)]
    pub entry: TraceEntry,
}

/// Write all runs' pulls as JSON lines, one pull per line, in
/// (strategy, seed, step) order.
pub fn write_trace_jsonl(path: &Path, summaries: &[RunSummary]) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let mut out = std::io::BufWriter::new(file);
    for summary in summaries {
        for run in &summary.per_seed {
            for entry in &run.result.trace {
                let line = TraceLine {
                    strategy: summary.strategy,
                    seed: run.seed,
                    entry: entry.clone(),
                };
                serde_json::to_writer(&mut out, &line)
                    .map_err(|e| Error::Internal { detail: format!("trace serialization: {e}") })?;
                out.write_all(b"\n")
                    .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
            }
        }
    }
    out.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

// ---------------------------------------------------------------------------
// Validation reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ModelCoverage {
    pub model: String,
    pub images_covered: usize,
    pub total_images: usize,
    pub detections: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub images: usize,
    pub ground_truth: usize,
    pub categories: usize,
    pub models: Vec<ModelCoverage>,
}

pub fn validation_text(report: &ValidationReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "annotations: {} images, {} ground-truth boxes, {} categories\n",
        report.images, report.ground_truth, report.categories
    ));
    for model in &report.models {
        out.push_str(&format!(
            "model {:<24} covers {:>4}/{} images, {:>6} detections\n",
            model.model, model.images_covered, model.total_images, model.detections
        ));
    }
    out.push_str("OK\n");
    out
}
