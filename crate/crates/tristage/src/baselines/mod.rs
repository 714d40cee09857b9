//! Comparison baselines, each trained on the full (unlabeled) training fold:
//! KMeans-only anomaly labeling with a cluster-size-threshold sweep, a
//! one-class SVM scored by its decision function, and the stage-2 scorer
//! trained without stage-1 filtering.

pub mod ocsvm;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub use ocsvm::{ocsvm_fit, OcsvmConfig, OcsvmModel};

use crate::cluster::fit_kmeans;
use crate::error::Result;
use crate::ganomaly::{train_scorer, AnomalyScorer, ScorerConfig};
use crate::metrics::{roc_from_label_sets, RocCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    KmeansOnly,
    Ocsvm,
    GanomalyAlone,
}

impl BaselineMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineMethod::KmeansOnly => "kmeans",
            BaselineMethod::Ocsvm => "ocsvm",
            BaselineMethod::GanomalyAlone => "ganomaly",
        }
    }
}

/// Output of one baseline on one test split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineResult {
    pub method: BaselineMethod,
    pub roc: RocCurve,
    /// Continuous scores, when the method produces them.
    pub scores: Option<Vec<f64>>,
    /// Per-threshold hard labelings for sweep-based methods.
    pub label_sets: Option<Vec<(f64, Vec<u8>)>>,
}

/// KMeans-only detection: cluster the data, then for each size threshold
/// label every member of a cluster strictly smaller than the threshold as
/// anomalous. Sweeping the thresholds yields the attainable ROC.
///
/// `size_thresholds` must be ascending; None uses every distinct cluster
/// size plus the 0 and n+1 sentinels (the complete attainable curve).
pub fn kmeans_only_detect(
    features: ArrayView2<f64>,
    truth: &[u8],
    k: usize,
    size_thresholds: Option<Vec<usize>>,
    seed: u64,
) -> Result<BaselineResult> {
    let model = fit_kmeans(features, k, seed)?;
    let thresholds = match size_thresholds {
        Some(t) => t,
        None => {
            let mut t: Vec<usize> = model.cluster_sizes.clone();
            t.push(0);
            t.push(features.nrows() + 1);
            t.sort_unstable();
            t.dedup();
            t
        }
    };

    let label_sets: Vec<(f64, Vec<u8>)> = thresholds
        .iter()
        .map(|&th| {
            let labels: Vec<u8> = model
                .assignments
                .iter()
                .map(|&c| u8::from(model.cluster_sizes[c] < th))
                .collect();
            (th as f64, labels)
        })
        .collect();

    let roc = roc_from_label_sets(&label_sets, truth)?;
    Ok(BaselineResult {
        method: BaselineMethod::KmeansOnly,
        roc,
        scores: None,
        label_sets: Some(label_sets),
    })
}

/// Hard labels for one specific cluster-size threshold (the operating
/// point).
pub fn kmeans_size_threshold_labels(
    assignments: &[usize],
    cluster_sizes: &[usize],
    threshold: f64,
) -> Vec<u8> {
    assignments
        .iter()
        .map(|&c| u8::from((cluster_sizes[c] as f64) < threshold))
        .collect()
}

/// OCSVM baseline: fit on the (unlabeled) training fold, return continuous
/// anomaly scores on the test fold.
pub fn ocsvm_detect(
    train: ArrayView2<f64>,
    test: ArrayView2<f64>,
    config: &OcsvmConfig,
) -> Result<(OcsvmModel, Vec<f64>)> {
    let model = ocsvm_fit(&train.to_owned(), config)?;
    let scores = model.score(&test.to_owned())?;
    Ok((model, scores))
}

/// Scorer-alone baseline: the stage-2 trainer and scorer, same code path,
/// just fed the whole training fold instead of stage-1's selection.
pub fn ganomaly_alone(
    train: ArrayView2<f64>,
    test: ArrayView2<f64>,
    config: &ScorerConfig,
) -> Result<(AnomalyScorer, Vec<f64>)> {
    let scorer = train_scorer(&train.to_owned(), config)?;
    let scores = scorer.score(&test.to_owned())?;
    Ok((scorer, scores))
}
