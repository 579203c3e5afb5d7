//! Error types shared across the crate.
//!
//! Each subsystem has its own enum so callers can match on the failures they
//! can actually handle; [`Error`] is the catch-all used at the CLI boundary.

use std::path::PathBuf;

use thiserror::Error;

/// Errors from dataset loading, validation, and splitting.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("no samples found under {0}")]
    NoSamples(PathBuf),

    #[error("frame {id}: expected {expected_rows}x{expected_cols}, found {rows}x{cols}")]
    DimensionMismatch {
        id: String,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("invalid sample {id}: {message}")]
    InvalidSample { id: String, message: String },

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("unknown subject {0:?}")]
    UnknownSubject(String),
}

/// Errors from the preprocessing and augmentation pipeline.
#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Errors from model construction and forward evaluation.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("non-finite values produced by layer {layer}")]
    NonFinite { layer: String },

    #[error("zero-norm vector ahead of embedding normalization")]
    ZeroNormEmbedding,
}

/// Errors from loss evaluation.
#[derive(Debug, Error)]
pub enum LossError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),
}

/// Errors from checkpoint serialization.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("not a checkpoint file (bad magic)")]
    BadMagic,

    #[error("checkpoint version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error("checkpoint tensor {path}: expected {expected} values, found {found}")]
    TensorSize {
        path: String,
        expected: usize,
        found: usize,
    },

    #[error("unknown tensor path in checkpoint: {0}")]
    UnknownTensor(String),

    #[error("missing tensor in checkpoint: {0}")]
    MissingTensor(String),
}

/// Errors from the training loop.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Loss(#[from] LossError),

    #[error(transparent)]
    Preprocess(#[from] PreprocessError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Errors from metrics and baselines.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Preprocess(#[from] PreprocessError),

    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Errors from the synthetic generator.
#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    Config(String),

    #[error("body segment outside frame: {0}")]
    SegmentOutOfFrame(String),
}

/// Errors from time-series segmentation and aggregation.
#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no static frames: cannot aggregate a session weight")]
    NoStaticFrames,
}

/// Errors from experiment config parsing and validation.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path} not found")]
    NotFound { path: PathBuf },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid config {path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

/// Top-level error, used at the CLI boundary.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Other(String),
}

impl Error {
    /// Whether the error is a usage/config problem (CLI exit code 2) rather
    /// than a runtime failure (exit code 1).
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
