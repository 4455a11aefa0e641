//! Online just-in-time defect prediction under delayed and human-in-the-loop
//! labeling.
//!
//! The crate is organised bottom-up:
//!
//! * [`dataset`] ingests commit streams from CSV and synthesizes streams with
//!   controllable defect rate, fix-delay distribution and drift.
//! * [`learners`] holds the online classifiers (Hoeffding tree, baselines,
//!   Poisson bagging, resampling ensembles, prediction-noise filter).
//! * [`prequential`] accumulates fading-factor confusion counts and the
//!   R0/R1/FPR/G-mean indicators.
//! * [`labeling`] simulates when and how each commit's observed label arrives
//!   under ideal, BFC-window and SQA-assisted regimes.
//! * [`validation`] assigns k-fold distributed roles and drives the
//!   test-then-train loop.
//! * [`stats`] provides McNemar, Wilcoxon signed-rank and sign tests.
//! * [`harness`] composes the above into the validity, error-rate,
//!   comparison and resampling experiments.

pub mod dataset;
pub mod harness;
pub mod labeling;
pub mod learners;
pub mod prequential;
pub mod seed;
pub mod stats;
pub mod validation;

pub use dataset::{CommitInstance, CommitStream, Label};

/// Seconds in one day; durations are carried as integer seconds throughout.
pub const DAY: i64 = 86_400;
