//! Detection and conditioned repair of generation artifacts in virtual
//! try-on and pose-transfer images.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`detector::detect`] flags artifacts with four independent strategies
//!    (feature confidence, palette comparison, edge matching against the
//!    aligned reference, pose keypoint matching) and fuses them into
//!    classified reports.
//! 2. [`conditioning::build_bundle`] turns the reports into conditioning
//!    images, prompts and per-condition scales.
//! 3. [`orchestrator::repair`] sends one inpainting request per seed to a
//!    [`orchestrator::Backend`], composites the result back inside the mask
//!    and keeps the best candidate.
//!
//! [`datasets`] and [`metrics`] provide corpus tooling and the before/after
//! evaluation harness; [`cli`] backs the `artifact-repair` binary.

pub mod cli;
pub mod conditioning;
pub mod config;
pub mod datasets;
pub mod detector;
pub mod error;
pub mod fsutil;
pub mod image;
pub mod metrics;
pub mod orchestrator;
pub mod parsing;
pub mod pose;
pub mod rng;
pub mod vision;
pub mod warp;

pub use error::{Error, Result};
