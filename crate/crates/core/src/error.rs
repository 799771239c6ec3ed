//! Error type shared across the library.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {path}")]
    MissingFile { path: PathBuf },

    #[error("malformed document {path}: {detail}")]
    MalformedDocument { path: PathBuf, detail: String },

    #[error("dangling reference: {detail}")]
    DanglingReference { detail: String },

    #[error("invalid box: {detail}")]
    InvalidBox { detail: String },

    #[error("score out of range: {score} for image {image_id}")]
    ScoreOutOfRange { image_id: u64, score: f64 },

    #[error("duplicate model name in pool: {name}")]
    DuplicateModel { name: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("cannot aggregate an empty outcome list")]
    EmptyOutcomeList,

    #[error("consensus requires at least {required} prediction sets, got {available}")]
    InsufficientModels { available: usize, required: usize },

    #[error("bandit has no arms")]
    NoArms,

    #[error("arm index {index} out of range for {arms} arms")]
    ArmOutOfRange { index: usize, arms: usize },

    #[error("invalid criteria: {detail}")]
    InvalidCriteria { detail: String },

    #[error("invalid run config: {detail}")]
    InvalidConfig { detail: String },

    #[error("could not place {failed} of {requested} boxes (image {image_id}); spec too crowded")]
    PlacementFailure {
        image_id: u64,
        requested: usize,
        failed: usize,
    },

    #[error("unsupported spec for closed-form reward: {detail}")]
    UnsupportedSpec { detail: String },

    #[error("instance too large for exhaustive matching: {detections} detections x {ground_truth} ground truth (limit {limit})")]
    InstanceTooLarge {
        detections: usize,
        ground_truth: usize,
        limit: usize,
    },

    #[error("rasterized IoU requires integer coordinates: {detail}")]
    NonIntegerInput { detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal invariant violated: {detail}")]
    Internal { detail: String },
}

impl Error {
    /// Stable machine-readable tag for each error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile { .. } => "MissingFile",
            Error::MalformedDocument { .. } => "MalformedDocument",
            Error::DanglingReference { .. } => "DanglingReference",
            Error::InvalidBox { .. } => "InvalidBox",
            Error::ScoreOutOfRange { .. } => "ScoreOutOfRange",
            Error::DuplicateModel { .. } => "DuplicateModel",
            Error::EmptyDataset => "EmptyDataset",
            Error::EmptyOutcomeList => "EmptyOutcomeList",
            Error::InsufficientModels { .. } => "InsufficientModels",
            Error::NoArms => "NoArms",
            Error::ArmOutOfRange { .. } => "ArmOutOfRange",
            Error::InvalidCriteria { .. } => "InvalidCriteria",
            Error::InvalidConfig { .. } => "InvalidConfig",
            Error::PlacementFailure { .. } => "PlacementFailure",
            Error::UnsupportedSpec { .. } => "UnsupportedSpec",
            Error::InstanceTooLarge { .. } => "InstanceTooLarge",
            Error::NonIntegerInput { .. } => "NonIntegerInput",
            Error::Io { .. } => "Io",
            Error::Internal { .. } => "Internal",
        }
    }
}
