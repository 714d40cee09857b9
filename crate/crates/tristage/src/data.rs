//! Sample matrices and normalization.
//!
//! [`DataMatrix`] carries the real-valued feature matrix plus optional
//! binary and attack-category labels. Labels are only reachable through
//! accessor methods so the [`audit`] hook can prove that no label flows into
//! the unsupervised training stages.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column (min, max) from a normalization fit.
pub type NormParams = Vec<(f64, f64)>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataMatrix {
    features: Array2<f64>,
    binary_labels: Option<Vec<u8>>,
    /// Per-row attack category id; None for normal rows.
    attack_labels: Option<Vec<Option<u32>>>,
    norm_params: Option<NormParams>,
}

impl DataMatrix {
    pub fn new(
        features: Array2<f64>,
        binary_labels: Option<Vec<u8>>,
        attack_labels: Option<Vec<Option<u32>>>,
    ) -> Result<Self> {
        let rows = features.nrows();
        if let Some(b) = &binary_labels {
            if b.len() != rows {
                return Err(Error::InvalidParameter(format!(
                    "binary label count {} does not match {} rows",
                    b.len(),
                    rows
                )));
            }
        }
        if let Some(a) = &attack_labels {
            if a.len() != rows {
                return Err(Error::InvalidParameter(format!(
                    "attack label count {} does not match {} rows",
                    a.len(),
                    rows
                )));
            }
        }
        Ok(Self {
            features,
            binary_labels,
            attack_labels,
            norm_params: None,
        })
    }

    pub fn unlabeled(features: Array2<f64>) -> Self {
        Self {
            features,
            binary_labels: None,
            attack_labels: None,
            norm_params: None,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn norm_params(&self) -> Option<&NormParams> {
        self.norm_params.as_ref()
    }

    pub fn has_labels(&self) -> bool {
        self.binary_labels.is_some() || self.attack_labels.is_some()
    }

    /// Binary ground truth (0 normal, 1 anomaly). Audited.
    pub fn binary_labels(&self) -> Option<&[u8]> {
        audit::record_access();
        self.binary_labels.as_deref()
    }

    /// Attack category ids. Audited.
    pub fn attack_labels(&self) -> Option<&[Option<u32>]> {
        audit::record_access();
        self.attack_labels.as_deref()
    }

    /// Drops every label, keeping features and norm params bit-identical.
    /// Idempotent; applied before the unsupervised training stages.
    pub fn strip_labels(&self) -> DataMatrix {
        DataMatrix {
            features: self.features.clone(),
            binary_labels: None,
            attack_labels: None,
            norm_params: self.norm_params.clone(),
        }
    }

    /// Row-subset copy (labels follow their rows).
    pub fn select_rows(&self, indices: &[usize]) -> DataMatrix {
        let features = self.features.select(Axis(0), indices);
        let binary_labels = self
            .binary_labels
            .as_ref()
            .map(|b| indices.iter().map(|&i| b[i]).collect());
        let attack_labels = self
            .attack_labels
            .as_ref()
            .map(|a| indices.iter().map(|&i| a[i]).collect());
        DataMatrix {
            features,
            binary_labels,
            attack_labels,
            norm_params: self.norm_params.clone(),
        }
    }

    /// Min-max normalizes each column to [0,1], fitting (min, max) on this
    /// matrix. Constant columns map to 0 so column indices stay aligned with
    /// the schema.
    pub fn normalize(&self) -> DataMatrix {
        let params = fit_norm_params(&self.features);
        let features = apply_norm_params(&self.features, &params);
        DataMatrix {
            features,
            binary_labels: self.binary_labels.clone(),
            attack_labels: self.attack_labels.clone(),
            norm_params: Some(params),
        }
    }

    /// Scales with previously fitted parameters (training-fold min/max) and
    /// clips to [0,1]; held-out values beyond the fitted range saturate.
    pub fn normalize_with(&self, params: &NormParams) -> Result<DataMatrix> {
        if params.len() != self.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                got: self.n_cols(),
            });
        }
        let features = apply_norm_params(&self.features, params);
        Ok(DataMatrix {
            features,
            binary_labels: self.binary_labels.clone(),
            attack_labels: self.attack_labels.clone(),
            norm_params: Some(params.clone()),
        })
    }

    /// Inverts normalization using the stored parameters.
    pub fn denormalize(&self) -> Result<Array2<f64>> {
        let params = self.norm_params.as_ref().ok_or_else(|| {
            Error::InvalidParameter("matrix carries no normalization parameters".into())
        })?;
        let mut out = self.features.clone();
        for (j, &(min, max)) in params.iter().enumerate() {
            let span = max - min;
            for v in out.column_mut(j) {
                *v = if span > 0.0 { *v * span + min } else { min };
            }
        }
        Ok(out)
    }
}

/// Fits per-column (min, max).
pub fn fit_norm_params(features: &Array2<f64>) -> NormParams {
    (0..features.ncols())
        .map(|j| {
            let col = features.column(j);
            let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (min, max)
        })
        .collect()
}

/// v -> (v - min) / (max - min), clipped to [0,1]; constant columns map to 0.
pub fn apply_norm_params(features: &Array2<f64>, params: &NormParams) -> Array2<f64> {
    let mut out = features.clone();
    for (j, &(min, max)) in params.iter().enumerate() {
        let span = max - min;
        for v in out.column_mut(j) {
            *v = if span > 0.0 {
                ((*v - min) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
    }
    out
}

/// Label-access audit for the unsupervised contract.
///
/// While a thread holds an armed guard, every label-accessor call on that
/// thread counts as a violation (against a process-wide counter). Each fold
/// job arms its own guard around stage-1/stage-2 training, which must only
/// ever see label-stripped matrices; the harness asserts zero violations
/// afterwards.
pub mod audit {
    use std::cell::Cell;

    thread_local! {
        static ARMED: Cell<usize> = const { Cell::new(0) };
        static VIOLATIONS: Cell<u64> = const { Cell::new(0) };
    }

    /// Arms the audit on the current thread for the guard's lifetime and
    /// measures the violations it witnessed. Nestable.
    pub struct AuditGuard {
        start: u64,
    }

    impl AuditGuard {
        pub fn arm() -> Self {
            ARMED.with(|a| a.set(a.get() + 1));
            AuditGuard {
                start: thread_violations(),
            }
        }

        /// Violations recorded on this thread since the guard was armed.
        pub fn violations(&self) -> u64 {
            thread_violations() - self.start
        }
    }

    impl Drop for AuditGuard {
        fn drop(&mut self) {
            ARMED.with(|a| a.set(a.get() - 1));
        }
    }

    pub(super) fn record_access() {
        if ARMED.with(|a| a.get()) > 0 {
            VIOLATIONS.with(|v| v.set(v.get() + 1));
        }
    }

    /// Total violations recorded on the current thread.
    pub fn thread_violations() -> u64 {
        VIOLATIONS.with(|v| v.get())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn normalize_maps_endpoints() {
        let m = DataMatrix::unlabeled(array![[2.0], [4.0], [6.0]]).normalize();
        assert_eq!(m.features().column(0).to_vec(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let m = DataMatrix::unlabeled(array![[5.0], [5.0], [5.0]]).normalize();
        assert_eq!(m.features().column(0).to_vec(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn held_out_values_are_clipped() {
        let train = DataMatrix::unlabeled(array![[2.0], [6.0]]).normalize();
        let held = DataMatrix::unlabeled(array![[8.0], [0.0], [4.0]])
            .normalize_with(train.norm_params().unwrap())
            .unwrap();
        assert_eq!(held.features().column(0).to_vec(), vec![1.0, 0.0, 0.5]);
    }

    #[test]
    fn normalize_denormalize_round_trip() {
        let raw = array![[2.0, 1.0], [4.0, -3.0], [6.0, 10.0]];
        let m = DataMatrix::unlabeled(raw.clone()).normalize();
        let back = m.denormalize().unwrap();
        for (a, b) in raw.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn normalization_is_deterministic() {
        let raw = array![[2.0, 1.0], [4.0, -3.0], [6.0, 10.0]];
        let a = DataMatrix::unlabeled(raw.clone()).normalize();
        let b = DataMatrix::unlabeled(raw).normalize();
        assert_eq!(a.features(), b.features());
        assert_eq!(a.norm_params(), b.norm_params());
    }

    #[test]
    fn strip_labels_removes_both_kinds_and_is_idempotent() {
        let m = DataMatrix::new(
            array![[1.0], [2.0]],
            Some(vec![0, 1]),
            Some(vec![None, Some(3)]),
        )
        .unwrap();
        let stripped = m.strip_labels();
        assert!(!stripped.has_labels());
        assert_eq!(stripped.features(), m.features());
        let again = stripped.strip_labels();
        assert_eq!(again.features(), m.features());

        // Attack labels alone are removed too.
        let only_attack =
            DataMatrix::new(array![[1.0]], None, Some(vec![Some(0)])).unwrap();
        assert!(!only_attack.strip_labels().has_labels());
    }

    #[test]
    fn mismatched_label_length_is_rejected() {
        assert!(DataMatrix::new(array![[1.0], [2.0]], Some(vec![0]), None).is_err());
    }

    #[test]
    fn audit_counts_label_reads_only_while_armed() {
        let m = DataMatrix::new(array![[1.0]], Some(vec![1]), None).unwrap();
        let before = audit::thread_violations();
        let _ = m.binary_labels();
        assert_eq!(audit::thread_violations(), before);
        let guard = audit::AuditGuard::arm();
        let _ = m.binary_labels();
        let _ = m.attack_labels();
        assert_eq!(guard.violations(), 2);
        drop(guard);
        let _ = m.binary_labels();
        assert_eq!(audit::thread_violations(), before + 2);
    }
}
