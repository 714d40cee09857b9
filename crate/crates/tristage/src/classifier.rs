//! Stage 3: attack-category classification.
//!
//! A 1-D CNN trained offline on labeled anomaly samples only (conv -> ReLU
//! -> max-pool blocks, then dense layers into an N_att-way distribution),
//! with Adam and categorical cross-entropy. Class imbalance is handled
//! upstream by ADASYN (see [`crate::adasyn`]).

use std::collections::BTreeMap;

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::nn::{relu, relu_grad, Adam, Conv1d, Dense, Init, MaxPool1d};
use crate::rng::{rng_from_seed, shuffle};
use crate::schema::FeatureSchema;

/// Probability floor for log-loss, keeping confident mistakes finite.
pub const PROB_CLIP: f64 = 1e-15;

/// Attack categories and the raw-label mapping into them. Normal/benign raw
/// values never appear here.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackTaxonomy {
    categories: Vec<String>,
    raw_to_category: BTreeMap<String, usize>,
}

impl AttackTaxonomy {
    pub fn new(categories: Vec<String>, raw_to_category: BTreeMap<String, usize>) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::Config("taxonomy has no attack categories".into()));
        }
        for (raw, &id) in &raw_to_category {
            if id >= categories.len() {
                return Err(Error::Config(format!(
                    "raw label '{raw}' maps to category id {id} out of range"
                )));
            }
        }
        Ok(Self {
            categories,
            raw_to_category,
        })
    }

    /// Builds the taxonomy from a schema's configured category map, or as the
    /// identity over raw labels observed on anomalous rows.
    pub fn from_schema_and_observed(
        schema: &FeatureSchema,
        attack_raws: &[String],
        binary_raws: &[String],
    ) -> Result<Self> {
        match &schema.attack_categories {
            Some(map) => {
                let categories: Vec<String> = map.keys().cloned().collect();
                let mut raw_to_category = BTreeMap::new();
                for (cat, raws) in map {
                    let id = categories.iter().position(|c| c == cat).unwrap();
                    for raw in raws {
                        if raw_to_category.insert(raw.clone(), id).is_some() {
                            return Err(Error::Config(format!(
                                "raw label '{raw}' mapped to more than one category"
                            )));
                        }
                    }
                }
                Self::new(categories, raw_to_category)
            }
            None => {
                let mut distinct: Vec<String> = attack_raws
                    .iter()
                    .zip(binary_raws)
                    .filter(|(_, b)| !schema.is_normal_value(b))
                    .map(|(a, _)| a.clone())
                    .collect();
                distinct.sort();
                distinct.dedup();
                if distinct.is_empty() {
                    return Err(Error::Config(
                        "no anomalous rows observed; cannot build a taxonomy".into(),
                    ));
                }
                let raw_to_category = distinct
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v.clone(), i))
                    .collect();
                Self::new(distinct, raw_to_category)
            }
        }
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn id_of_raw(&self, raw: &str) -> Option<usize> {
        self.raw_to_category.get(raw).copied()
    }
}

/// CNN hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// (kernel count, kernel size) per convolution block.
    pub conv_blocks: Vec<(usize, usize)>,
    pub pool_size: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            conv_blocks: vec![(32, 3), (64, 3)],
            pool_size: 2,
            hidden: 128,
            epochs: 30,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Trained attack-category classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CnnClassifier {
    pub taxonomy: AttackTaxonomy,
    pub n_features: usize,
    pub config: ClassifierConfig,
    convs: Vec<Conv1d>,
    pool: MaxPool1d,
    fc1: Dense,
    fc2: Dense,
    flat_dim: usize,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

struct ForwardCache {
    conv_in: Vec<Array3<f64>>,
    conv_pre: Vec<Array3<f64>>,
    pool_arg: Vec<Array3<usize>>,
    pool_in_len: Vec<usize>,
    flat: Array2<f64>,
    fc1_pre: Array2<f64>,
    fc1_out: Array2<f64>,
    logits: Array2<f64>,
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

impl CnnClassifier {
    fn build(
        taxonomy: AttackTaxonomy,
        n_features: usize,
        config: ClassifierConfig,
    ) -> Result<Self> {
        let mut rng = rng_from_seed(config.seed);
        let mut convs = Vec::new();
        let mut channels = 1usize;
        let mut length = n_features;
        for &(kernels, ksize) in &config.conv_blocks {
            if length < ksize {
                return Err(Error::InvalidParameter(format!(
                    "feature length {length} too short for kernel size {ksize}; \
                     reduce conv depth or kernel size"
                )));
            }
            convs.push(Conv1d::new(
                channels,
                kernels,
                ksize,
                1,
                0,
                Init::GlorotUniform,
                &mut rng,
            ));
            channels = kernels;
            length = length - ksize + 1;
            if length < config.pool_size {
                return Err(Error::InvalidParameter(format!(
                    "length {length} too short for pool size {}",
                    config.pool_size
                )));
            }
            length /= config.pool_size;
        }
        let flat_dim = channels * length;
        let fc1 = Dense::new(flat_dim, config.hidden, Init::GlorotUniform, &mut rng);
        let fc2 = Dense::new(
            config.hidden,
            taxonomy.n_categories(),
            Init::GlorotUniform,
            &mut rng,
        );
        Ok(Self {
            taxonomy,
            n_features,
            pool: MaxPool1d {
                size: config.pool_size,
            },
            config,
            convs,
            fc1,
            fc2,
            flat_dim,
            epoch_losses: Vec::new(),
        })
    }

    fn forward(&self, x: &Array2<f64>) -> ForwardCache {
        let b = x.nrows();
        let x3 = x
            .to_owned()
            .into_shape_with_order((b, 1, self.n_features))
            .unwrap();
        let mut cur = x3;
        let mut conv_in = Vec::new();
        let mut conv_pre = Vec::new();
        let mut pool_arg = Vec::new();
        let mut pool_in_len = Vec::new();
        for conv in &self.convs {
            conv_in.push(cur.clone());
            let pre = conv.forward(&cur);
            conv_pre.push(pre.clone());
            let act = relu(&pre);
            pool_in_len.push(act.dim().2);
            let (pooled, arg) = self.pool.forward(&act);
            pool_arg.push(arg);
            cur = pooled;
        }
        let flat = cur.into_shape_with_order((b, self.flat_dim)).unwrap();
        let fc1_pre = self.fc1.forward(&flat);
        let fc1_out = relu(&fc1_pre);
        let logits = self.fc2.forward(&fc1_out);
        ForwardCache {
            conv_in,
            conv_pre,
            pool_arg,
            pool_in_len,
            flat,
            fc1_pre,
            fc1_out,
            logits,
        }
    }

    fn backward(&mut self, cache: &ForwardCache, glogits: &Array2<f64>) {
        let b = cache.flat.nrows();
        let g_fc1_out = self.fc2.backward(&cache.fc1_out, glogits);
        let g_fc1_pre = relu_grad(&cache.fc1_pre, &g_fc1_out);
        let g_flat = self.fc1.backward(&cache.flat, &g_fc1_pre);
        let last_c = self.convs.last().unwrap().w.dim().0;
        let mut g3 = g_flat
            .into_shape_with_order((b, last_c, self.flat_dim / last_c))
            .unwrap();
        for i in (0..self.convs.len()).rev() {
            let g_act = self
                .pool
                .backward(&cache.pool_arg[i], &g3, cache.pool_in_len[i]);
            let g_pre = relu_grad(&cache.conv_pre[i], &g_act);
            g3 = self.convs[i].backward(&cache.conv_in[i], &g_pre);
        }
    }

    fn zero_grad(&mut self) {
        for c in &mut self.convs {
            c.zero_grad();
        }
        self.fc1.zero_grad();
        self.fc2.zero_grad();
    }

    fn params(&mut self) -> Vec<crate::nn::ParamView<'_>> {
        let mut views = Vec::new();
        for c in &mut self.convs {
            views.extend(c.params());
        }
        views.extend(self.fc1.params());
        views.extend(self.fc2.params());
        views
    }

    /// Per-row category distributions: nonnegative, each row sums to 1.
    pub fn predict_proba(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: features.ncols(),
            });
        }
        if features.nrows() == 0 {
            return Ok(Array2::zeros((0, self.taxonomy.n_categories())));
        }
        let cache = self.forward(features);
        Ok(softmax_rows(&cache.logits))
    }

    /// Argmax category per row.
    pub fn predict(&self, features: &Array2<f64>) -> Result<Vec<usize>> {
        let probs = self.predict_proba(features)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap()
            })
            .collect())
    }

    pub fn to_json_file(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Trains the CNN on labeled anomaly samples. Labels are taxonomy category
/// ids; at least two distinct classes must be present. Stops early (keeping
/// the best weights) when the epoch loss fails to improve for 5 epochs.
pub fn train_classifier(
    features: &Array2<f64>,
    labels: &[usize],
    taxonomy: &AttackTaxonomy,
    config: &ClassifierConfig,
) -> Result<CnnClassifier> {
    if features.nrows() == 0 {
        return Err(Error::EmptyDataset("classifier training set".into()));
    }
    if features.nrows() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let n_att = taxonomy.n_categories();
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_att) {
        return Err(Error::InvalidParameter(format!(
            "label id {bad} outside taxonomy of {n_att} categories"
        )));
    }
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::DegenerateLabels(
            "classifier training needs at least two attack categories".into(),
        ));
    }

    let mut model = CnnClassifier::build(taxonomy.clone(), features.ncols(), config.clone())?;
    let mut opt = Adam::new(config.learning_rate, 0.9, 0.999);
    let mut rng = rng_from_seed(config.seed ^ 0x5ca1_ab1e);

    let n = features.nrows();
    let batch = config.batch_size.max(1).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, CnnClassifier)> = None;
    let mut stall = 0usize;

    for _epoch in 0..config.epochs {
        shuffle(&mut rng, &mut order);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(batch) {
            let xb = features.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let cache = model.forward(&xb);
            let probs = softmax_rows(&cache.logits);
            let m = chunk.len() as f64;
            let mut loss = 0.0;
            let mut glogits = probs.clone();
            for (r, &cls) in yb.iter().enumerate() {
                loss -= probs[[r, cls]].max(PROB_CLIP).ln();
                glogits[[r, cls]] -= 1.0;
            }
            loss /= m;
            glogits.mapv_inplace(|v| v / m);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "classifier loss became {loss}"
                )));
            }
            model.zero_grad();
            model.backward(&cache, &glogits);
            opt.step(model.params());
            epoch_loss += loss * m;
            seen += chunk.len();
        }
        epoch_loss /= seen as f64;
        model.epoch_losses.push(epoch_loss);

        let improved = best.as_ref().map_or(true, |(b, _)| epoch_loss < *b);
        if improved {
            best = Some((epoch_loss, model.clone()));
            stall = 0;
        } else {
            stall += 1;
            if stall >= 5 {
                break;
            }
        }
    }

    let losses = model.epoch_losses.clone();
    let (_, mut best_model) = best.expect("at least one epoch ran");
    best_model.epoch_losses = losses;
    Ok(best_model)
}

/// Pulls (features, category labels) for the anomalous rows of a labeled
/// matrix. An anomalous row without a mapped category is a contract
/// violation.
pub fn anomaly_training_set(matrix: &DataMatrix) -> Result<(Array2<f64>, Vec<usize>)> {
    let binary = matrix
        .binary_labels()
        .ok_or_else(|| Error::InvalidParameter("matrix has no binary labels".into()))?;
    let attack = matrix
        .attack_labels()
        .ok_or_else(|| Error::InvalidParameter("matrix has no attack labels".into()))?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..matrix.n_rows() {
        if binary[i] == 0 {
            continue;
        }
        match attack[i] {
            Some(cat) => {
                rows.push(i);
                labels.push(cat as usize);
            }
            None => {
                return Err(Error::InvalidParameter(format!(
                    "anomalous row {i} has no attack category; fix the taxonomy or drop it upstream"
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset("no anomalous rows for stage 3".into()));
    }
    Ok((matrix.features().select(Axis(0), &rows), labels))
}

/// Guards the stage-3 contract: the training set must not contain normal
/// samples.
pub fn reject_normal_rows(matrix: &DataMatrix) -> Result<()> {
    if let Some(binary) = matrix.binary_labels() {
        if binary.iter().any(|&b| b == 0) {
            return Err(Error::InvalidParameter(
                "stage-3 training input contains normal samples".into(),
            ));
        }
    }
    Ok(())
}

/// Mean categorical cross-entropy of predicted distributions against true
/// category ids, with probabilities clipped to [1e-15, 1 - 1e-15].
pub fn multiclass_log_loss(probabilities: &Array2<f64>, truth: &[usize]) -> Result<f64> {
    if probabilities.nrows() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "{} probability rows but {} labels",
            probabilities.nrows(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::EmptyDataset("log-loss input".into()));
    }
    let mut total = 0.0;
    for (row, &cls) in probabilities.rows().into_iter().zip(truth) {
        let p = row[cls].clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        total -= p.ln();
    }
    Ok(total / truth.len() as f64)
}

/// Log-loss of the constant predictor that always answers with the training
/// class priors.
pub fn base_log_loss(priors: &[f64], truth: &[usize]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyDataset("log-loss input".into()));
    }
    let mut total = 0.0;
    for &cls in truth {
        if cls >= priors.len() {
            return Err(Error::InvalidParameter(format!(
                "label {cls} outside prior vector of length {}",
                priors.len()
            )));
        }
        let p = priors[cls].clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        total -= p.ln();
    }
    Ok(total / truth.len() as f64)
}

/// Class frequency vector over `n_classes`.
pub fn class_priors(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
        .into_iter()
        .map(|c| c as f64 / labels.len() as f64)
        .collect()
}
