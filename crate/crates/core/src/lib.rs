//! Counterfactual bias auditing for human-action-recognition (HAR) models.
//!
//! The crate works on a factorial synthetic-video dataset in which every clip is
//! identified by its action, motion clip, actor skin tone, camera viewpoint and
//! background. Given a dataset manifest and a log of model predictions it can:
//!
//! - validate that the manifest covers the factor product exactly once ([`manifest`]),
//! - match the dataset's action names to a model's label vocabulary ([`labelmatch`]),
//! - expand render jobs and pick the best scene setting per action ([`jobgen`]),
//! - compute ablation accuracies and pairwise skin-tone divergence rates ([`metrics`]),
//! - test every skin-tone pair for elevated divergence with a within-group
//!   permutation test and Bonferroni correction ([`stats`]),
//! - simulate prediction logs with known, injectable bias ([`simulator`]),
//! - render deterministic CSV/JSON tables and SVG figures ([`report`]).
//!
//! The `examples/` directory has one runnable program per capability, and the
//! `ctrl-audit` binary wraps the whole workflow ([`cli`]).

pub mod audit;
pub mod cli;
pub mod error;
pub mod jobgen;
pub mod labelmatch;
pub mod manifest;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use error::{AuditError, Result};
pub use manifest::{FactorSpace, Manifest, MotionGroup, SkinTone, Variant, VideoRecord};
