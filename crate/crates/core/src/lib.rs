//! Integration and classification of mixed cross-sectional/longitudinal
//! multiview data.
//!
//! The crate implements a three-stage analysis pipeline:
//!
//! 1. **Variable selection/ranking** ([`select`]): per-variable linear
//!    mixed-model tests with Fisher combination, a sparse joint principal
//!    trend decomposition for paired longitudinal views, and a
//!    bootstrap-permutation importance ranking driven by the full model.
//! 2. **Feature extraction** ([`features`]): Euler-characteristic curves of
//!    thresholded association graphs, discretized functional PCA scores, and
//!    time means, each reducing a longitudinal view to cross-sectional form.
//! 3. **Integration and classification** ([`ida`], [`nets`], [`pipeline`]):
//!    per-view networks (GRU for longitudinal, dense for cross-sectional)
//!    trained end-to-end against a trace objective that jointly maximizes
//!    between-class separation and between-view association, with a nearest
//!    centroid classifier on the projected outputs.
//!
//! [`synth`] generates the two-view ARMA(1,1) benchmark used to compare the
//! feature extractors, and [`dataset`] holds the tensor data model plus CSV
//! ingestion and preprocessing transforms.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod features;
pub mod ida;
pub mod nets;
pub mod output;
pub mod pipeline;
pub mod select;
pub mod synth;

pub use error::{Error, Result};
