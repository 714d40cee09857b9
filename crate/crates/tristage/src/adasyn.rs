//! ADASYN oversampling: adaptively generates synthetic minority-class
//! samples, allocating more synthesis effort to minority samples whose
//! neighborhoods are dominated by other classes. Originals are preserved
//! unchanged; synthetic samples are interpolations between same-class
//! neighbor pairs.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Per-class resampling accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassResample {
    pub class: usize,
    pub before: usize,
    pub synthetic: usize,
    pub after: usize,
    /// True when the class had too few samples for k-NN interpolation and
    /// fell back to plain duplication.
    pub fallback_duplication: bool,
    /// True when no minority sample had majority-class neighbors and the
    /// allocation degraded to uniform.
    pub uniform_weights: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResampleLog {
    pub target: usize,
    pub neighbors: usize,
    pub classes: Vec<ClassResample>,
}

/// Squared distances between every row of `a` and every row of `b`.
fn pairwise_sq_dists(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let a_sq: Vec<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
    let b_sq: Vec<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut d = a.dot(&b.t());
    for (i, mut row) in d.rows_mut().into_iter().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (a_sq[i] + b_sq[j] - 2.0 * *v).max(0.0);
        }
    }
    d
}

/// Indices of the k smallest entries (ties by index), skipping `skip`.
fn k_smallest(dists: &[f64], k: usize, skip: Option<usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dists.len()).filter(|&i| Some(i) != skip).collect();
    let k = k.min(idx.len());
    idx.select_nth_unstable_by(k.saturating_sub(1), |&a, &b| {
        dists[a].partial_cmp(&dists[b]).unwrap().then(a.cmp(&b))
    });
    idx.truncate(k);
    idx.sort_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap().then(a.cmp(&b)));
    idx
}

/// Largest-remainder apportionment of `total` into weighted shares.
fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 || weights.is_empty() {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut shares: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = shares.iter().sum();
    let mut rema: Vec<(usize, f64)> = quotas
        .iter()
        .enumerate()
        .map(|(i, q)| (i, q - q.floor()))
        .collect();
    rema.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in rema.into_iter().take(total - assigned) {
        shares[i] += 1;
    }
    shares
}

const BLOCK: usize = 128;

/// Oversamples every class below `target` up to it. Returns the augmented
/// (features, labels) with originals first and unchanged, plus the log.
///
/// Allocation follows the ADASYN rule: each minority sample's share of the
/// deficit is proportional to the fraction of its `neighbors` nearest
/// neighbors (over the whole set) that belong to a different class. Each
/// synthetic sample is x_i + lambda * (x_nn - x_i) for a same-class
/// neighbor x_nn and lambda ~ U[0,1].
pub fn adasyn_resample(
    features: &Array2<f64>,
    labels: &[usize],
    target: usize,
    neighbors: usize,
    seed: u64,
) -> Result<(Array2<f64>, Vec<usize>, ResampleLog)> {
    if features.nrows() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if neighbors == 0 {
        return Err(Error::InvalidParameter("neighbors must be positive".into()));
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    if n_classes < 2 {
        return Err(Error::DegenerateLabels(
            "resampling needs at least two classes".into(),
        ));
    }

    let mut class_rows: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        class_rows[l].push(i);
    }

    let mut rng = rng_from_seed(seed);
    let mut synth_rows: Vec<Vec<f64>> = Vec::new();
    let mut synth_labels: Vec<usize> = Vec::new();
    let mut log = ResampleLog {
        target,
        neighbors,
        classes: Vec::new(),
    };

    for (class, rows) in class_rows.iter().enumerate() {
        let before = rows.len();
        if before == 0 {
            continue;
        }
        let deficit = target.saturating_sub(before);
        if deficit == 0 {
            log.classes.push(ClassResample {
                class,
                before,
                synthetic: 0,
                after: before,
                fallback_duplication: false,
                uniform_weights: false,
            });
            continue;
        }

        if before <= neighbors {
            // Too few samples for neighborhood interpolation.
            log::warn!(
                "class {class}: {before} samples <= {neighbors} neighbors; duplicating instead of interpolating"
            );
            for _ in 0..deficit {
                let pick = rows[rng.gen_range(0..before)];
                synth_rows.push(features.row(pick).to_vec());
                synth_labels.push(class);
            }
            log.classes.push(ClassResample {
                class,
                before,
                synthetic: deficit,
                after: before + deficit,
                fallback_duplication: true,
                uniform_weights: false,
            });
            continue;
        }

        // Majority-ratio weights and within-class neighbor lists, in blocks.
        let class_feats = features.select(Axis(0), rows);
        let mut weights = vec![0.0f64; before];
        let mut class_nn: Vec<Vec<usize>> = vec![Vec::new(); before];
        for (block_no, block) in rows.chunks(BLOCK).enumerate() {
            let q = features.select(Axis(0), block);
            let d_all = pairwise_sq_dists(q.view(), features.view());
            let d_class = pairwise_sq_dists(q.view(), class_feats.view());
            for (bi, &row_id) in block.iter().enumerate() {
                let local = block_no * BLOCK + bi;
                let all_nn = k_smallest(d_all.row(bi).as_slice().unwrap(), neighbors, Some(row_id));
                let foreign = all_nn.iter().filter(|&&j| labels[j] != class).count();
                weights[local] = foreign as f64 / neighbors as f64;
                class_nn[local] =
                    k_smallest(d_class.row(bi).as_slice().unwrap(), neighbors, Some(local));
            }
        }

        let uniform = weights.iter().all(|&w| w == 0.0);
        if uniform {
            weights.iter_mut().for_each(|w| *w = 1.0);
        }
        let shares = apportion(&weights, deficit);

        for (local, &count) in shares.iter().enumerate() {
            let base = class_feats.row(local);
            for _ in 0..count {
                let nn_local = class_nn[local][rng.gen_range(0..class_nn[local].len())];
                let nn = class_feats.row(nn_local);
                let lambda: f64 = rng.gen();
                let row: Vec<f64> = base
                    .iter()
                    .zip(nn.iter())
                    .map(|(&a, &b)| a + lambda * (b - a))
                    .collect();
                synth_rows.push(row);
                synth_labels.push(class);
            }
        }
        log.classes.push(ClassResample {
            class,
            before,
            synthetic: deficit,
            after: before + deficit,
            fallback_duplication: false,
            uniform_weights: uniform,
        });
    }

    let d = features.ncols();
    let mut out = Array2::zeros((features.nrows() + synth_rows.len(), d));
    out.slice_mut(ndarray::s![..features.nrows(), ..])
        .assign(features);
    for (i, row) in synth_rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[[features.nrows() + i, j]] = v;
        }
    }
    let mut out_labels = labels.to_vec();
    out_labels.extend(synth_labels);
    Ok((out, out_labels, log))
}
