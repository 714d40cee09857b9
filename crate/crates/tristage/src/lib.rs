//! Three-stage network intrusion detection.
//!
//! The pipeline distills probable-normal traffic with k-means cluster
//! filtering (stage 1), trains a 1-D adversarial encoder-decoder-encoder
//! anomaly scorer on it (stage 2), and classifies detected anomalies into
//! attack categories with a 1-D CNN balanced by ADASYN oversampling
//! (stage 3). The crate also ships the evaluation protocol around it:
//! SampleSet construction, stratified cross-validation, KMeans-only / OCSVM
//! / scorer-alone baselines, ROC/AUC metrics, and a reproducible run
//! harness.
//!
//! Start from the runnable examples (`cargo run --release --example
//! full_pipeline`) or the [`harness`] module; the `tristage` binary exposes
//! the same flows as subcommands.

pub mod adasyn;
pub mod baselines;
pub mod classifier;
pub mod cluster;
pub mod data;
pub mod error;
pub mod ganomaly;
pub mod harness;
pub mod ingest;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod sampling;
pub mod schema;
pub mod synth;

pub use data::DataMatrix;
pub use error::{Error, Result};
