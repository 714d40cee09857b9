//! Experiment sampling: 5 disjoint SampleSets at ~10% anomaly rate, each with
//! stratified 3-fold cross-validation assignments.

use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, shuffle};

/// Anomaly fraction window accepted per SampleSet ("around 10%", covering
/// the published 10.02-10.03 values).
pub const ANOMALY_FRACTION_RANGE: (f64, f64) = (0.095, 0.105);

/// One experiment subset: row indices into the source matrix plus a fold id
/// per position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSet {
    /// Source row indices, ascending.
    pub indices: Vec<usize>,
    /// Fold id (0..k) aligned with `indices`.
    pub folds: Vec<u8>,
    pub normal_count: usize,
    pub anomaly_count: usize,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn anomaly_fraction(&self) -> f64 {
        self.anomaly_count as f64 / self.len() as f64
    }

    pub fn n_folds(&self) -> usize {
        self.folds.iter().map(|&f| f as usize + 1).max().unwrap_or(0)
    }

    /// (train indices, test indices) for one held-out fold.
    pub fn split(&self, fold: u8) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (&idx, &f) in self.indices.iter().zip(&self.folds) {
            if f == fold {
                test.push(idx);
            } else {
                train.push(idx);
            }
        }
        (train, test)
    }
}

/// The full sampling plan for one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSetBundle {
    pub sample_sets: Vec<SampleSet>,
    pub seed: u64,
    pub n_folds: usize,
}

impl SampleSetBundle {
    pub fn to_json_file(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Builds `n_sets` pairwise-disjoint SampleSets of `normal_count` normals and
/// `anomaly_count` anomalies each, picked uniformly without replacement, then
/// assigns stratified `n_folds`-fold CV labels. Deterministic in `seed`.
pub fn make_samplesets(
    source: &DataMatrix,
    normal_count: usize,
    anomaly_count: usize,
    n_sets: usize,
    n_folds: usize,
    seed: u64,
) -> Result<SampleSetBundle> {
    if normal_count == 0 || anomaly_count == 0 {
        return Err(Error::InvalidParameter(
            "sampleset counts must be positive".into(),
        ));
    }
    if n_folds < 2 {
        return Err(Error::InvalidParameter("need at least 2 folds".into()));
    }
    let frac = anomaly_count as f64 / (normal_count + anomaly_count) as f64;
    if frac < ANOMALY_FRACTION_RANGE.0 || frac > ANOMALY_FRACTION_RANGE.1 {
        return Err(Error::InvalidParameter(format!(
            "anomaly fraction {frac:.4} outside the accepted window [{}, {}]",
            ANOMALY_FRACTION_RANGE.0, ANOMALY_FRACTION_RANGE.1
        )));
    }

    let labels = source.binary_labels().ok_or_else(|| {
        Error::InvalidParameter("sampleset construction needs binary labels".into())
    })?;
    let mut normal_pool: Vec<usize> = Vec::new();
    let mut anomaly_pool: Vec<usize> = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        if y == 0 {
            normal_pool.push(i);
        } else {
            anomaly_pool.push(i);
        }
    }

    let need_normal = normal_count * n_sets;
    let need_anomaly = anomaly_count * n_sets;
    if normal_pool.len() < need_normal {
        return Err(Error::InsufficientSamples {
            required: need_normal,
            available: normal_pool.len(),
            context: "normal rows".into(),
        });
    }
    if anomaly_pool.len() < need_anomaly {
        return Err(Error::InsufficientSamples {
            required: need_anomaly,
            available: anomaly_pool.len(),
            context: "anomalous rows".into(),
        });
    }

    let mut rng = rng_from_seed(seed);
    shuffle(&mut rng, &mut normal_pool);
    shuffle(&mut rng, &mut anomaly_pool);

    let mut sample_sets = Vec::with_capacity(n_sets);
    for s in 0..n_sets {
        let normals = &normal_pool[s * normal_count..(s + 1) * normal_count];
        let anomalies = &anomaly_pool[s * anomaly_count..(s + 1) * anomaly_count];
        let mut indices: Vec<usize> = normals.iter().chain(anomalies).cloned().collect();
        indices.sort_unstable();
        let is_anomaly: Vec<bool> = {
            let set: std::collections::BTreeSet<usize> = anomalies.iter().cloned().collect();
            indices.iter().map(|i| set.contains(i)).collect()
        };
        let folds = stratified_folds(&is_anomaly, n_folds, seed.wrapping_add(s as u64 + 1));
        sample_sets.push(SampleSet {
            indices,
            folds,
            normal_count,
            anomaly_count,
        });
    }

    Ok(SampleSetBundle {
        sample_sets,
        seed,
        n_folds,
    })
}

/// Stratified fold assignment: shuffle each class, deal round-robin. Normal
/// remainders land in the first folds and anomaly remainders in the last so
/// total fold sizes never differ by more than one.
fn stratified_folds(is_anomaly: &[bool], n_folds: usize, seed: u64) -> Vec<u8> {
    let mut rng = rng_from_seed(seed);
    let mut normal_pos: Vec<usize> = Vec::new();
    let mut anomaly_pos: Vec<usize> = Vec::new();
    for (i, &a) in is_anomaly.iter().enumerate() {
        if a {
            anomaly_pos.push(i);
        } else {
            normal_pos.push(i);
        }
    }
    shuffle(&mut rng, &mut normal_pos);
    shuffle(&mut rng, &mut anomaly_pos);

    let mut folds = vec![0u8; is_anomaly.len()];
    for (j, &pos) in normal_pos.iter().enumerate() {
        folds[pos] = (j % n_folds) as u8;
    }
    // Anomalies deal from the last fold backwards.
    for (j, &pos) in anomaly_pos.iter().enumerate() {
        folds[pos] = (n_folds - 1 - (j % n_folds)) as u8;
    }
    folds
}

/// Stratified k-fold assignment for an existing SampleSet (exposed for
/// replaying a bundle with a different fold count).
pub fn cv_folds(sample_set: &SampleSet, is_anomaly: &[bool], k: usize, seed: u64) -> Result<Vec<u8>> {
    if sample_set.is_empty() {
        return Err(Error::InvalidParameter("empty sample set".into()));
    }
    if is_anomaly.len() != sample_set.len() {
        return Err(Error::InvalidParameter(
            "anomaly mask length does not match sample set".into(),
        ));
    }
    Ok(stratified_folds(is_anomaly, k, seed))
}
