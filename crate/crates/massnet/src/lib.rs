//! Body-weight regression from a single bed-pressure image.
//!
//! The centerpiece is a dual-branch network: a deep feature extractor built
//! from stacked sensing layers (bottleneck blocks with 3-way parallel
//! convolutions plus channel/spatial attention) and an auxiliary MLP over 2D
//! joint positions, fused by a single linear regressor. Training couples the
//! MAE regression loss with a weight-penalized supervised contrastive loss on
//! projected embeddings, so images of the same subject (and of similar-weight
//! subjects) cluster in embedding space.
//!
//! Everything is CPU-only `f64` with hand-written forward and backward
//! passes, which keeps gradients checkable against finite differences.
//!
//! Module map:
//!
//! - [`data`]: domain types, on-disk formats, loaders, splits
//! - [`preprocess`]: upsample/smooth/pad/normalize pipeline, augmentation,
//!   joint-noise injection
//! - [`nn`]: low-level layers (conv, batch norm, linear, attention)
//! - [`network`]: the dual-branch model, parameter counting, checkpoints
//! - [`losses`]: MAE, supervised contrastive loss and its weight-penalized
//!   variant, overall weighted objective
//! - [`training`]: Adam, LR schedule with warm-up and step decay, train loop
//! - [`evaluation`]: MAE/MAPE reports, classical baselines, ablation harness
//! - [`synthetic`]: parametric pressure-image generator with sensor
//!   non-idealities
//! - [`timeseries`]: gradient-based active/static segmentation and session
//!   weight aggregation
//! - [`config`]: experiment config files driving the CLI
//!
//! See the `examples/` directory for one runnable walkthrough per capability,
//! and the `massnet` binary for the command-line interface.

pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod network;
pub mod nn;
pub mod preprocess;
pub mod synthetic;
pub mod timeseries;
pub mod training;

pub use error::Error;
