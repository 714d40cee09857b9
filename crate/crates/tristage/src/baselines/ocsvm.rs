//! One-class SVM (nu-parameterized, RBF kernel) solved with SMO-style
//! maximal-violating-pair updates on the dual:
//!
//!   min 1/2 a' Q a   s.t.  0 <= a_i <= 1,  sum a = nu * l
//!
//! Decision value of a test point is `sum_i a_i k(x_i, x) - rho`; the
//! returned anomaly score is its negation, so higher means more anomalous.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, sample_distinct};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OcsvmConfig {
    /// Upper bound on the training-set outlier fraction.
    pub nu: f64,
    /// RBF width; None uses 1 / n_features.
    pub gamma: Option<f64>,
    pub tol: f64,
    /// Pair updates before giving up (0 = automatic).
    pub max_iter: usize,
    /// Training rows beyond this are deterministically subsampled so the
    /// kernel matrix stays desk-sized.
    pub max_train: usize,
    pub seed: u64,
}

impl Default for OcsvmConfig {
    fn default() -> Self {
        Self {
            nu: 0.1,
            gamma: None,
            tol: 1e-3,
            max_iter: 0,
            max_train: 2048,
            seed: 0,
        }
    }
}

/// Fitted model: support vectors with their dual weights and the offset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OcsvmModel {
    support: Array2<f64>,
    alpha: Vec<f64>,
    rho: f64,
    gamma: f64,
    /// Rows actually used for training (after any subsampling).
    pub trained_on: usize,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn ocsvm_fit(train: &Array2<f64>, config: &OcsvmConfig) -> Result<OcsvmModel> {
    if !(0.0 < config.nu && config.nu <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "nu {} outside (0, 1]",
            config.nu
        )));
    }
    if train.nrows() < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            available: train.nrows(),
            context: "one-class SVM training".into(),
        });
    }

    let rows: Array2<f64> = if train.nrows() > config.max_train {
        let mut rng = rng_from_seed(config.seed);
        let mut keep = sample_distinct(&mut rng, train.nrows(), config.max_train);
        keep.sort_unstable();
        train.select(Axis(0), &keep)
    } else {
        train.clone()
    };
    let l = rows.nrows();
    let gamma = config.gamma.unwrap_or(1.0 / rows.ncols().max(1) as f64);

    // Dense kernel matrix; max_train bounds the footprint.
    let mut q = Array2::zeros((l, l));
    for i in 0..l {
        for j in i..l {
            let k = (-gamma * sq_dist(rows.row(i), rows.row(j))).exp();
            q[[i, j]] = k;
            q[[j, i]] = k;
        }
    }

    // libsvm-style initialization: sum alpha = nu * l.
    let budget = config.nu * l as f64;
    let mut alpha = vec![0.0f64; l];
    let full = budget.floor() as usize;
    for a in alpha.iter_mut().take(full.min(l)) {
        *a = 1.0;
    }
    if full < l {
        alpha[full] = budget - full as f64;
    }

    // Gradient g = Q alpha.
    let mut g = vec![0.0f64; l];
    for i in 0..l {
        let mut acc = 0.0;
        for j in 0..l {
            if alpha[j] > 0.0 {
                acc += q[[i, j]] * alpha[j];
            }
        }
        g[i] = acc;
    }

    let eps = 1e-12;
    let max_iter = if config.max_iter > 0 {
        config.max_iter
    } else {
        (100 * l).max(10_000)
    };

    for _ in 0..max_iter {
        // Maximal violating pair: raise the smallest gradient, lower the
        // largest.
        let mut up = None;
        let mut down = None;
        for i in 0..l {
            if alpha[i] < 1.0 - eps && up.map_or(true, |(_, gv)| g[i] < gv) {
                up = Some((i, g[i]));
            }
            if alpha[i] > eps && down.map_or(true, |(_, gv)| g[i] > gv) {
                down = Some((i, g[i]));
            }
        }
        let (Some((i, gi)), Some((j, gj))) = (up, down) else {
            break;
        };
        if gj - gi < config.tol || i == j {
            break;
        }
        let eta = (q[[i, i]] + q[[j, j]] - 2.0 * q[[i, j]]).max(1e-12);
        let delta = ((gj - gi) / eta).min(1.0 - alpha[i]).min(alpha[j]);
        if delta <= 0.0 {
            break;
        }
        alpha[i] += delta;
        alpha[j] -= delta;
        for t in 0..l {
            g[t] += delta * (q[[t, i]] - q[[t, j]]);
        }
    }

    // Offset from free support vectors, midpoint of the bound gradients as
    // the fallback.
    let free: Vec<usize> = (0..l)
        .filter(|&i| alpha[i] > eps && alpha[i] < 1.0 - eps)
        .collect();
    let rho = if !free.is_empty() {
        free.iter().map(|&i| g[i]).sum::<f64>() / free.len() as f64
    } else {
        let lo = (0..l)
            .filter(|&i| alpha[i] < 1.0 - eps)
            .map(|i| g[i])
            .fold(f64::INFINITY, f64::min);
        let hi = (0..l)
            .filter(|&i| alpha[i] > eps)
            .map(|i| g[i])
            .fold(f64::NEG_INFINITY, f64::max);
        (lo + hi) / 2.0
    };

    // Keep only the support vectors.
    let sv: Vec<usize> = (0..l).filter(|&i| alpha[i] > eps).collect();
    let support = rows.select(Axis(0), &sv);
    let alpha: Vec<f64> = sv.iter().map(|&i| alpha[i]).collect();
    Ok(OcsvmModel {
        support,
        alpha,
        rho,
        gamma,
        trained_on: l,
    })
}

impl OcsvmModel {
    /// Anomaly scores for test points: rho - sum_i a_i k(x_i, x). Higher is
    /// more anomalous; the sign flip normalizes the SVM decision function.
    pub fn score(&self, test: &Array2<f64>) -> Result<Vec<f64>> {
        if test.nrows() == 0 {
            return Ok(Vec::new());
        }
        if test.ncols() != self.support.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.support.ncols(),
                got: test.ncols(),
            });
        }
        Ok(test
            .rows()
            .into_iter()
            .map(|x| {
                let f: f64 = self
                    .support
                    .rows()
                    .into_iter()
                    .zip(&self.alpha)
                    .map(|(s, &a)| a * (-self.gamma * sq_dist(s, x)).exp())
                    .sum();
                self.rho - f
            })
            .collect())
    }
}
