//! Stage 1: k-means clustering and probable-normal selection.
//!
//! Normal traffic is assumed to form large, tight clusters. After Lloyd's
//! algorithm converges, only clusters larger than a size threshold are
//! eligible, and within each eligible cluster the fraction of samples
//! closest to its center is kept as the training set for the stage-2
//! scorer.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, sample_distinct};

const MAX_ITERATIONS: usize = 300;

/// Fitted k-means state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    /// k x n centers.
    pub centers: Array2<f64>,
    /// Assigned cluster per sample.
    pub assignments: Vec<usize>,
    pub cluster_sizes: Vec<usize>,
    /// Euclidean distance from each sample to its assigned center.
    pub distances: Vec<f64>,
    pub iterations: usize,
    /// Final within-cluster sum of squared distances.
    pub sse: f64,
    /// Post-assignment SSE per iteration (non-increasing).
    pub sse_trajectory: Vec<f64>,
}

/// Minimum eligible cluster size: an absolute count or a fraction of the
/// clustered rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeThreshold {
    Absolute(usize),
    Fraction(f64),
}

impl SizeThreshold {
    fn resolve(&self, n_samples: usize) -> Result<f64> {
        match *self {
            SizeThreshold::Absolute(v) => Ok(v as f64),
            SizeThreshold::Fraction(f) => {
                if !(0.0..=1.0).contains(&f) {
                    return Err(Error::InvalidParameter(format!(
                        "size threshold fraction {f} outside [0, 1]"
                    )));
                }
                Ok(f * n_samples as f64)
            }
        }
    }
}

/// Probable-normal selection policy: cluster-size eligibility plus the
/// per-cluster keep fraction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SelectionPolicy {
    pub th_sz: SizeThreshold,
    /// Fraction in (0, 1] of each eligible cluster to keep, closest first.
    pub th_var: f64,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            th_sz: SizeThreshold::Fraction(0.05),
            th_var: 0.9,
        }
    }
}

/// Per-cluster selection accounting, emitted as JSON into run directories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub k: usize,
    pub threshold_samples: f64,
    pub th_var: f64,
    pub clusters: Vec<ClusterSelection>,
    pub selected_total: usize,
    pub input_total: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSelection {
    pub cluster: usize,
    pub size: usize,
    pub eligible: bool,
    pub kept: usize,
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Lloyd's algorithm with uniform random initialization from the data.
///
/// Assignment ties break toward the lowest cluster id; empty clusters are
/// reseeded to the sample farthest from its center. Converges when
/// assignments stop changing (or at the iteration cap). Deterministic in
/// `seed`.
pub fn fit_kmeans(features: ArrayView2<f64>, k: usize, seed: u64) -> Result<ClusterModel> {
    let n = features.nrows();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds sample count {n}"
        )));
    }

    let mut rng = rng_from_seed(seed);
    let init = sample_distinct(&mut rng, n, k);
    let mut centers = Array2::zeros((k, features.ncols()));
    for (c, &row) in init.iter().enumerate() {
        centers.row_mut(c).assign(&features.row(row));
    }

    let mut assignments = vec![usize::MAX; n];
    let mut sq_dists = vec![0.0f64; n];
    let mut iterations = 0;
    let mut sse_trajectory = Vec::new();

    for iter in 0..MAX_ITERATIONS {
        iterations = iter + 1;
        // Assignment step.
        let mut changed = false;
        for i in 0..n {
            let row = features.row(i);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = squared_distance(row, centers.row(c));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            sq_dists[i] = best_d;
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        sse_trajectory.push(sq_dists.iter().sum());

        // Empty-cluster repair: reseed to the farthest sample.
        let mut sizes = vec![0usize; k];
        for &a in &assignments {
            sizes[a] += 1;
        }
        let mut repaired = false;
        for c in 0..k {
            if sizes[c] == 0 {
                let (far, _) = sq_dists
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| {
                        if d > acc.1 {
                            (i, d)
                        } else {
                            acc
                        }
                    });
                centers.row_mut(c).assign(&features.row(far));
                sizes[assignments[far]] -= 1;
                assignments[far] = c;
                sizes[c] = 1;
                sq_dists[far] = 0.0;
                repaired = true;
            }
        }

        if !changed && !repaired && iter > 0 {
            break;
        }

        // Update step: means of assigned samples.
        let mut sums = Array2::<f64>::zeros((k, features.ncols()));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignments[i];
            let mut dst = sums.row_mut(c);
            dst += &features.row(i);
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mut row = sums.row_mut(c);
                row /= counts[c] as f64;
                centers.row_mut(c).assign(&sums.row(c));
            }
        }
    }

    // Final assignment pass against the converged centers.
    let mut cluster_sizes = vec![0usize; k];
    let mut distances = vec![0.0f64; n];
    let mut sse = 0.0;
    for i in 0..n {
        let row = features.row(i);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let d = squared_distance(row, centers.row(c));
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        assignments[i] = best;
        cluster_sizes[best] += 1;
        distances[i] = best_d.sqrt();
        sse += best_d;
    }

    Ok(ClusterModel {
        k,
        centers,
        assignments,
        cluster_sizes,
        distances,
        iterations,
        sse,
        sse_trajectory,
    })
}

/// Best-of-`restarts` k-means by final SSE, with per-restart derived seeds.
pub fn fit_kmeans_restarts(
    features: ArrayView2<f64>,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<ClusterModel> {
    let mut best: Option<ClusterModel> = None;
    for r in 0..restarts.max(1) {
        let model = fit_kmeans(features, k, seed.wrapping_add(r as u64))?;
        if best.as_ref().map_or(true, |b| model.sse < b.sse) {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Applies the selection policy: for each cluster with size strictly greater
/// than the threshold, keep the floor(th_var * size) samples nearest its
/// center (at least one). Returns sorted row indices plus the summary.
pub fn select_probable_normals(
    model: &ClusterModel,
    policy: &SelectionPolicy,
) -> Result<(Vec<usize>, SelectionSummary)> {
    if !(policy.th_var > 0.0 && policy.th_var <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "th_var {} outside (0, 1]",
            policy.th_var
        )));
    }
    let n = model.assignments.len();
    let threshold = policy.th_sz.resolve(n)?;

    let mut selected = Vec::new();
    let mut clusters = Vec::with_capacity(model.k);
    for c in 0..model.k {
        let size = model.cluster_sizes[c];
        let eligible = (size as f64) > threshold;
        let mut kept = 0usize;
        if eligible && size > 0 {
            let mut members: Vec<usize> = (0..n).filter(|&i| model.assignments[i] == c).collect();
            // Distance rank ties break toward the lower row index.
            members.sort_by(|&a, &b| {
                model.distances[a]
                    .partial_cmp(&model.distances[b])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            kept = ((policy.th_var * size as f64).floor() as usize).max(1);
            selected.extend_from_slice(&members[..kept]);
        }
        clusters.push(ClusterSelection {
            cluster: c,
            size,
            eligible,
            kept,
        });
    }

    if selected.is_empty() {
        return Err(Error::NoEligibleCluster(format!(
            "no cluster exceeds size threshold {threshold:.1}; lower th_sz or inspect the clustering"
        )));
    }
    selected.sort_unstable();

    let summary = SelectionSummary {
        k: model.k,
        threshold_samples: threshold,
        th_var: policy.th_var,
        selected_total: selected.len(),
        input_total: n,
        clusters,
    };
    Ok((selected, summary))
}
