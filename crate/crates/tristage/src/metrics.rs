//! Detection metrics: TPR/FPR, ROC curves, trapezoidal AUC, confusion
//! matrices, and the two-level fold/sample-set aggregation used by the
//! evaluation protocol.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One point on an ROC curve, produced at a given decision threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve plus its trapezoidal area.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

fn count_classes(truth: &[u8]) -> Result<(usize, usize)> {
    let pos = truth.iter().filter(|&&y| y == 1).count();
    let neg = truth.len() - pos;
    if pos == 0 {
        return Err(Error::DegenerateLabels(
            "no positive (anomaly) samples in truth".into(),
        ));
    }
    if neg == 0 {
        return Err(Error::DegenerateLabels(
            "no negative (normal) samples in truth".into(),
        ));
    }
    Ok((pos, neg))
}

/// True-positive and false-positive rates of a hard labeling.
///
/// TPR = TP / (TP + FN), FPR = FP / (FP + TN). Requires both classes in the
/// truth vector.
pub fn tpr_fpr(predicted: &[u8], truth: &[u8]) -> Result<(f64, f64)> {
    if predicted.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "prediction/truth length mismatch: {} vs {}",
            predicted.len(),
            truth.len()
        )));
    }
    let (pos, neg) = count_classes(truth)?;
    let mut tp = 0usize;
    let mut fp = 0usize;
    for (&p, &y) in predicted.iter().zip(truth) {
        if p == 1 {
            if y == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    Ok((tp as f64 / pos as f64, fp as f64 / neg as f64))
}

/// ROC curve by sweeping every distinct score as a threshold (ties grouped
/// into a single step), anchored at (0,0) and (1,1).
pub fn roc_curve(scores: &[f64], truth: &[u8]) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "score/truth length mismatch: {} vs {}",
            scores.len(),
            truth.len()
        )));
    }
    let (pos, neg) = count_classes(truth)?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        // Consume the whole tie group before emitting a point.
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }

    let auc = trapezoid_area(&points);
    Ok(RocCurve { points, auc })
}

/// Trapezoidal area under a sequence of ROC points ordered by ascending FPR.
pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// ROC and AUC from continuous scores (higher score = more anomalous).
pub fn roc_auc(scores: &[f64], truth: &[u8]) -> Result<(Vec<RocPoint>, f64)> {
    let curve = roc_curve(scores, truth)?;
    Ok((curve.points.clone(), curve.auc))
}

/// ROC assembled from per-threshold hard label sets (the KMeans-only
/// baseline produces these instead of continuous scores). Thresholds must be
/// ordered so the positive set grows monotonically.
pub fn roc_from_label_sets(label_sets: &[(f64, Vec<u8>)], truth: &[u8]) -> Result<RocCurve> {
    count_classes(truth)?;
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    for (th, labels) in label_sets {
        // An all-zero labeling is the (0,0) anchor already present.
        if labels.iter().all(|&p| p == 0) {
            continue;
        }
        let (tpr, fpr) = tpr_fpr(labels, truth)?;
        points.push(RocPoint {
            threshold: *th,
            fpr,
            tpr,
        });
    }
    if points.last().map(|p| (p.fpr, p.tpr)) != Some((1.0, 1.0)) {
        points.push(RocPoint {
            threshold: f64::NEG_INFINITY,
            fpr: 1.0,
            tpr: 1.0,
        });
    }
    points.sort_by(|a, b| {
        a.fpr
            .partial_cmp(&b.fpr)
            .unwrap()
            .then(a.tpr.partial_cmp(&b.tpr).unwrap())
    });
    let auc = trapezoid_area(&points);
    Ok(RocCurve { points, auc })
}

/// N x N confusion matrix; rows are true categories, columns predictions.
pub fn confusion_matrix(truth: &[usize], predicted: &[usize], n_classes: usize) -> Array2<u64> {
    let mut m = Array2::zeros((n_classes, n_classes));
    for (&t, &p) in truth.iter().zip(predicted) {
        m[[t, p]] += 1;
    }
    m
}

/// Metrics of one (method, sample set, fold) evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldRecord {
    pub method: String,
    pub sample_set: usize,
    pub fold: usize,
    pub auc: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub n_test: usize,
}

/// Per-method mean metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub auc: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Aggregated evaluation: per-fold records, per-sample-set means, and the
/// grand mean (mean of sample-set means). The resolved run configuration is
/// embedded so every artifact is self-describing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_fold: Vec<FoldRecord>,
    /// method -> sample set index -> mean over folds
    pub per_sample_set: BTreeMap<String, BTreeMap<usize, MeanMetrics>>,
    /// method -> mean of sample-set means
    pub grand_mean: BTreeMap<String, MeanMetrics>,
    pub partial: bool,
    pub config_snapshot: serde_json::Value,
}

/// Two-level aggregation: fold records average within each sample set, then
/// sample-set means average into the grand mean.
///
/// `expected` is (sample_sets, folds); a missing (method, sample set, fold)
/// combination is a hard error unless `allow_partial` is set, in which case
/// the report is flagged partial and missing cells are skipped.
pub fn aggregate(
    records: &[FoldRecord],
    expected: (usize, usize),
    allow_partial: bool,
    config_snapshot: serde_json::Value,
) -> Result<EvaluationReport> {
    let (n_sets, n_folds) = expected;
    let methods: Vec<String> = {
        let mut m: Vec<String> = records.iter().map(|r| r.method.clone()).collect();
        m.sort();
        m.dedup();
        m
    };
    if methods.is_empty() {
        return Err(Error::IncompleteRun("no fold records to aggregate".into()));
    }

    let mut missing = Vec::new();
    for method in &methods {
        for s in 0..n_sets {
            for f in 0..n_folds {
                let present = records
                    .iter()
                    .any(|r| r.method == *method && r.sample_set == s && r.fold == f);
                if !present {
                    missing.push(format!("{method}/sampleset{s}/fold{f}"));
                }
            }
        }
    }
    if !missing.is_empty() && !allow_partial {
        return Err(Error::IncompleteRun(format!(
            "missing fold runs: {}",
            missing.join(", ")
        )));
    }

    let mut per_sample_set: BTreeMap<String, BTreeMap<usize, MeanMetrics>> = BTreeMap::new();
    let mut grand_mean = BTreeMap::new();
    for method in &methods {
        let mut set_means = BTreeMap::new();
        for s in 0..n_sets {
            let folds: Vec<&FoldRecord> = records
                .iter()
                .filter(|r| r.method == *method && r.sample_set == s)
                .collect();
            if folds.is_empty() {
                continue;
            }
            let k = folds.len() as f64;
            set_means.insert(
                s,
                MeanMetrics {
                    auc: folds.iter().map(|r| r.auc).sum::<f64>() / k,
                    tpr: folds.iter().map(|r| r.tpr).sum::<f64>() / k,
                    fpr: folds.iter().map(|r| r.fpr).sum::<f64>() / k,
                },
            );
        }
        let k = set_means.len() as f64;
        if k > 0.0 {
            grand_mean.insert(
                method.clone(),
                MeanMetrics {
                    auc: set_means.values().map(|m| m.auc).sum::<f64>() / k,
                    tpr: set_means.values().map(|m| m.tpr).sum::<f64>() / k,
                    fpr: set_means.values().map(|m| m.fpr).sum::<f64>() / k,
                },
            );
        }
        per_sample_set.insert(method.clone(), set_means);
    }

    let mut per_fold = records.to_vec();
    per_fold.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.sample_set.cmp(&b.sample_set))
            .then(a.fold.cmp(&b.fold))
    });

    Ok(EvaluationReport {
        per_fold,
        per_sample_set,
        grand_mean,
        partial: !missing.is_empty(),
        config_snapshot,
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn tpr_fpr_perfect_and_all_anomaly() {
        let truth = vec![1, 1, 0, 0];
        assert_eq!(tpr_fpr(&truth, &truth).unwrap(), (1.0, 0.0));
        assert_eq!(tpr_fpr(&[1, 1, 1, 1], &truth).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn tpr_fpr_half_half() {
        // TP=1 FN=1 FP=1 TN=1.
        let got = tpr_fpr(&[1, 0, 1, 0], &[1, 1, 0, 0]).unwrap();
        assert_eq!(got, (0.5, 0.5));
    }

    #[test]
    fn tpr_fpr_rejects_one_class_truth() {
        assert!(matches!(
            tpr_fpr(&[1, 0], &[1, 1]),
            Err(Error::DegenerateLabels(msg)) if msg.contains("negative")
        ));
        assert!(matches!(
            tpr_fpr(&[1, 0], &[0, 0]),
            Err(Error::DegenerateLabels(msg)) if msg.contains("positive")
        ));
    }

    #[test]
    fn auc_separated_is_one_and_constant_is_half() {
        let truth = vec![0, 0, 1, 1];
        let (_, auc) = roc_auc(&[0.1, 0.2, 0.8, 0.9], &truth).unwrap();
        assert_eq!(auc, 1.0);
        let (pts, auc) = roc_auc(&[0.5, 0.5, 0.5, 0.5], &truth).unwrap();
        assert_eq!(auc, 0.5);
        // Single diagonal segment: anchor plus one tie-group point.
        assert_eq!(pts.len(), 2);
    }

    #[test]
    fn auc_known_value() {
        // Pairs: (0.35 vs 0.1, 0.4) -> 1 + 0, (0.8 vs 0.1, 0.4) -> 2 of 4.
        let (_, auc) = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
        assert!((auc - 0.75).abs() < 1e-12);
    }

    #[test]
    fn auc_matches_concordance_oracle_on_random_instances() {
        let mut rng = rng_from_seed(99);
        for case in 0..100 {
            let n = rng.gen_range(2..=200);
            let mut truth: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
            truth[0] = 1;
            truth[1] = 0;
            // Coarse grid forces plenty of ties.
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..10) as f64 / 10.0).collect();
            let (_, auc) = roc_auc(&scores, &truth).unwrap();
            let want = oracle::concordance_auc(&scores, &truth);
            assert!(
                (auc - want).abs() < 1e-9,
                "case {case}: sweep {auc} vs oracle {want}"
            );
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transforms() {
        let mut rng = rng_from_seed(3);
        let n = 150;
        let truth: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let (_, base) = roc_auc(&scores, &truth).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s + 7.0).collect();
        let cubic: Vec<f64> = scores.iter().map(|s| s.powi(3)).collect();
        assert!((roc_auc(&affine, &truth).unwrap().1 - base).abs() < 1e-12);
        assert!((roc_auc(&cubic, &truth).unwrap().1 - base).abs() < 1e-12);
    }

    #[test]
    fn confusion_matrix_row_sums_match_class_counts() {
        let truth = vec![0, 0, 1, 2, 2, 2];
        let pred = vec![0, 1, 1, 2, 0, 2];
        let m = confusion_matrix(&truth, &pred, 3);
        assert_eq!(m.row(0).sum(), 2);
        assert_eq!(m.row(1).sum(), 1);
        assert_eq!(m.row(2).sum(), 3);
        // TPR/FPR recomputed from the binary confusion equals the direct path.
        let bt: Vec<u8> = vec![1, 1, 0, 0];
        let bp: Vec<u8> = vec![1, 0, 1, 0];
        let m2 = confusion_matrix(
            &bt.iter().map(|&x| x as usize).collect::<Vec<_>>(),
            &bp.iter().map(|&x| x as usize).collect::<Vec<_>>(),
            2,
        );
        let tp = m2[[1, 1]] as f64;
        let fn_ = m2[[1, 0]] as f64;
        let fp = m2[[0, 1]] as f64;
        let tn = m2[[0, 0]] as f64;
        assert_eq!(
            tpr_fpr(&bp, &bt).unwrap(),
            (tp / (tp + fn_), fp / (fp + tn))
        );
    }

    #[test]
    fn aggregate_two_level_mean() {
        let mut records = Vec::new();
        let set_means = [0.8, 0.9, 1.0, 0.9, 0.9];
        for (s, &m) in set_means.iter().enumerate() {
            for f in 0..3 {
                records.push(FoldRecord {
                    method: "proposed".into(),
                    sample_set: s,
                    fold: f,
                    auc: m,
                    tpr: 0.5,
                    fpr: 0.1,
                    n_test: 10,
                });
            }
        }
        let report = aggregate(&records, (5, 3), false, serde_json::Value::Null).unwrap();
        assert!((report.grand_mean["proposed"].auc - 0.9).abs() < 1e-12);
        assert!(!report.partial);
    }

    #[test]
    fn aggregate_rejects_missing_folds() {
        let records = vec![FoldRecord {
            method: "proposed".into(),
            sample_set: 0,
            fold: 0,
            auc: 0.9,
            tpr: 0.5,
            fpr: 0.1,
            n_test: 10,
        }];
        let err = aggregate(&records, (1, 3), false, serde_json::Value::Null).unwrap_err();
        assert!(err.to_string().contains("fold1"));
        let report = aggregate(&records, (1, 3), true, serde_json::Value::Null).unwrap();
        assert!(report.partial);
    }

    #[test]
    fn label_set_roc_has_anchors_and_is_monotone() {
        let truth = vec![0, 0, 0, 1, 1];
        let sets = vec![
            (0.0, vec![0, 0, 0, 0, 0]),
            (2.0, vec![0, 0, 0, 1, 0]),
            (6.0, vec![1, 0, 0, 1, 1]),
        ];
        let curve = roc_from_label_sets(&sets, &truth).unwrap();
        assert_eq!(
            (curve.points[0].fpr, curve.points[0].tpr),
            (0.0, 0.0)
        );
        let last = curve.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in curve.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
    }
}
