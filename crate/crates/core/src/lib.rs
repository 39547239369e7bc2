//! Black-box out-of-distribution detection by comparing how a target and
//! same-class exemplars react to shared Mixup perturbations.
//!
//! The crate is organised bottom-up:
//!
//! - [`types`], [`config`], [`dataset`], [`oracle`]: shared data model and I/O.
//! - [`scoring`]: output-only OOD scores (higher means more OOD).
//! - [`perturb`]: Mixup and label encoding.
//! - [`backend`]: the classifier abstraction, a local linear model and an HTTP client.
//! - [`engine`]: the detector itself plus a PGD attack for robustness sweeps.
//! - [`theory`]: numerical checks of the Taylor decomposition on synthetic data.
//! - [`benchmark`]: a synthetic detection benchmark used by tests and benches.
//! - [`metrics`]: AUROC, FPR@TPR, AUCPR and score analyses.
//! - [`server`]: an HTTP service exposing a model at a single access level.

pub mod backend;
pub mod benchmark;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod perturb;
pub mod scoring;
pub mod server;
pub mod theory;
pub mod types;

pub use backend::{Backend, GradLoss, LinearSoftmaxModel};
pub use config::{mixup_ratio_grid, AuxStrategy, MixDiffConfig, OracleSelection};
pub use dataset::{load_dataset, DataFormat, LabelTable, LabeledDataset, Record};
pub use error::{Error, Result};
pub use oracle::OracleSet;
pub use scoring::{ScoreFn, ScoreKind};
pub use types::{AccessLevel, FeatureVector, ModelOutput, OutputKind, Sample};
