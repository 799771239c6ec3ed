//! Bandit-driven selection of pre-trained object detectors.
//!
//! Given a pool of detectors represented by their prediction files, this
//! library scores each detector image by image (IoU matching against ground
//! truth, confidence and class gates) and uses a UCB bandit to converge on
//! the best one while running only a single detector per image. Brute-force
//! and consensus baselines, a synthetic corpus generator, and deterministic
//! run reports round out the toolkit.
//!
//! Geometry and bandit arithmetic are generic over the scalar type (any
//! [`scalar::Scalar`], i.e. `f32` or `f64`); the ingestion, evaluation and
//! harness layers work in `f64` through the aliases below, matching the
//! JSON file formats.

pub mod bandit;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod harness;
pub mod report;
pub mod scalar;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Axis-aligned box in absolute pixel coordinates (`f64`).
pub type BoundingBox = geometry::BoundingBox<f64>;
/// One detection-to-ground-truth assignment (`f64`).
pub type MatchPair = geometry::MatchPair<f64>;
/// Scored box fed into the matcher (`f64`).
pub type ScoredBox = geometry::ScoredBox<f64>;
/// UCB reward/selection ledger (`f64`).
pub type BanditState = bandit::BanditState<f64>;

pub use dataset::{Dataset, DatasetSplit, Detection, GroundTruthInstance, ImageRecord, PredictionSet};
pub use eval::{Averaging, EvalCriteria, MatchOutcome, MetricsReport};
pub use harness::{RunConfig, RunResult, RunSummary, Strategy};
