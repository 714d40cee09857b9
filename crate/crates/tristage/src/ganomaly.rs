//! Stage 2: adversarial encoder-decoder-encoder anomaly scoring over 1-D
//! feature vectors.
//!
//! Three sub-networks: a generator (encoder G_E compressing a sample to a
//! latent vector, decoder G_D reconstructing it), a second encoder E that
//! re-compresses the reconstruction and is architecturally identical to G_E,
//! and a discriminator whose penultimate feature map drives the adversarial
//! feature-matching loss. Network traffic features carry no spatial
//! adjacency, so every convolution is 1-dimensional along the feature axis.
//!
//! Training minimizes `w_adv * L_adv + w_con * L_con + w_enc * L_enc` on the
//! generator side (all mean-reduced: L_adv the squared difference of
//! discriminator features of input and reconstruction, L_con the L1
//! reconstruction error, L_enc the squared difference of the two latent
//! codes) while the discriminator trains on real/fake cross-entropy. At
//! inference the anomaly score of a sample is the Euclidean distance between
//! its two latent codes, scaled into [0,1] over the scored set.

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    leaky_relu, leaky_relu_grad, relu, relu_grad, sigmoid, sigmoid_grad_from_output, Adam, Conv1d,
    ConvTranspose1d, Dense, Init, ParamView,
};
use crate::rng::{rng_from_seed, shuffle};

const LEAK: f64 = 0.2;

/// Scorer hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScorerConfig {
    /// Latent code width.
    pub latent_dim: usize,
    /// Channel counts of the stacked stride-2 convolutions.
    pub conv_widths: Vec<usize>,
    /// Convolution kernel size (even, >= 2).
    pub kernel_size: usize,
    /// (w_adv, w_con, w_enc).
    pub loss_weights: (f64, f64, f64),
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            conv_widths: vec![16, 32, 64],
            kernel_size: 4,
            loss_weights: (1.0, 50.0, 1.0),
            epochs: 50,
            batch_size: 64,
            learning_rate: 2e-4,
            seed: 0,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::InvalidParameter("latent_dim must be >= 1".into()));
        }
        if self.conv_widths.is_empty() {
            return Err(Error::InvalidParameter(
                "conv_widths must be nonempty".into(),
            ));
        }
        let (wa, wc, we) = self.loss_weights;
        if wa < 0.0 || wc < 0.0 || we < 0.0 || (wa == 0.0 && wc == 0.0 && we == 0.0) {
            return Err(Error::InvalidParameter(
                "loss weights must be nonnegative and not all zero".into(),
            ));
        }
        if self.kernel_size < 2 || self.kernel_size % 2 != 0 {
            return Err(Error::InvalidParameter(
                "kernel_size must be even and >= 2 for stride-2 geometry".into(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "epochs and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Input length after zero-padding to the nearest multiple of 2^depth.
    pub fn padded_len(&self, n_features: usize) -> usize {
        let unit = 1usize << self.conv_widths.len();
        n_features.div_ceil(unit) * unit
    }
}

/// Encoder: stacked stride-2 1-D convolutions with LeakyReLU, then a linear
/// projection to the latent code.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Encoder {
    convs: Vec<Conv1d>,
    proj: Dense,
}

struct EncoderCache {
    conv_in: Vec<Array3<f64>>,
    conv_pre: Vec<Array3<f64>>,
    flat: Array2<f64>,
}

impl Encoder {
    fn new(cfg: &ScorerConfig, padded_len: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        let k = cfg.kernel_size;
        let pad = (k - 2) / 2;
        let mut convs = Vec::new();
        let mut channels = 1;
        let mut length = padded_len;
        for &w in &cfg.conv_widths {
            convs.push(Conv1d::new(channels, w, k, 2, pad, Init::Normal(0.02), rng));
            channels = w;
            length /= 2;
        }
        let proj = Dense::new(channels * length, cfg.latent_dim, Init::GlorotUniform, rng);
        Self { convs, proj }
    }

    fn flat_dim(&self) -> usize {
        self.proj.w.ncols()
    }

    fn forward(&self, x: &Array3<f64>) -> (Array2<f64>, EncoderCache) {
        let b = x.dim().0;
        let mut cur = x.clone();
        let mut conv_in = Vec::new();
        let mut conv_pre = Vec::new();
        for conv in &self.convs {
            conv_in.push(cur.clone());
            let pre = conv.forward(&cur);
            cur = leaky_relu(&pre, LEAK);
            conv_pre.push(pre);
        }
        let flat = cur.into_shape_with_order((b, self.flat_dim())).unwrap();
        let z = self.proj.forward(&flat);
        (
            z,
            EncoderCache {
                conv_in,
                conv_pre,
                flat,
            },
        )
    }

    fn backward(&mut self, cache: &EncoderCache, gz: &Array2<f64>) -> Array3<f64> {
        let b = cache.flat.nrows();
        let g_flat = self.proj.backward(&cache.flat, gz);
        let c_last = self.convs.last().unwrap().w.dim().0;
        let mut g_act = g_flat
            .into_shape_with_order((b, c_last, self.flat_dim() / c_last))
            .unwrap();
        for i in (0..self.convs.len()).rev() {
            let g_pre = leaky_relu_grad(&cache.conv_pre[i], &g_act, LEAK);
            g_act = self.convs[i].backward(&cache.conv_in[i], &g_pre);
        }
        g_act
    }

    fn zero_grad(&mut self) {
        for c in &mut self.convs {
            c.zero_grad();
        }
        self.proj.zero_grad();
    }

    fn params(&mut self) -> Vec<ParamView<'_>> {
        let mut v = Vec::new();
        for c in &mut self.convs {
            v.extend(c.params());
        }
        v.extend(self.proj.params());
        v
    }

    fn layer_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes: Vec<Vec<usize>> =
            self.convs.iter().map(|c| c.w.shape().to_vec()).collect();
        shapes.push(self.proj.w.shape().to_vec());
        shapes
    }
}

/// Decoder: linear expansion from the latent code, then mirrored stride-2
/// transposed convolutions; sigmoid output matches the [0,1] feature range.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Decoder {
    expand: Dense,
    deconvs: Vec<ConvTranspose1d>,
    seed_channels: usize,
    seed_len: usize,
}

struct DecoderCache {
    z: Array2<f64>,
    expand_pre: Array2<f64>,
    deconv_in: Vec<Array3<f64>>,
    deconv_pre: Vec<Array3<f64>>,
    output: Array3<f64>,
}

impl Decoder {
    fn new(cfg: &ScorerConfig, padded_len: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        let k = cfg.kernel_size;
        let pad = (k - 2) / 2;
        let depth = cfg.conv_widths.len();
        let seed_channels = *cfg.conv_widths.last().unwrap();
        let seed_len = padded_len >> depth;
        let expand = Dense::new(
            cfg.latent_dim,
            seed_channels * seed_len,
            Init::GlorotUniform,
            rng,
        );
        let mut deconvs = Vec::new();
        let mut channels = seed_channels;
        for i in (0..depth).rev() {
            let out = if i == 0 { 1 } else { cfg.conv_widths[i - 1] };
            deconvs.push(ConvTranspose1d::new(
                channels,
                out,
                k,
                2,
                pad,
                Init::Normal(0.02),
                rng,
            ));
            channels = out;
        }
        Self {
            expand,
            deconvs,
            seed_channels,
            seed_len,
        }
    }

    fn forward(&self, z: &Array2<f64>) -> (Array3<f64>, DecoderCache) {
        let b = z.nrows();
        let expand_pre = self.expand.forward(z);
        let h = relu(&expand_pre);
        let mut cur = h
            .into_shape_with_order((b, self.seed_channels, self.seed_len))
            .unwrap();
        let mut deconv_in = Vec::new();
        let mut deconv_pre = Vec::new();
        let last = self.deconvs.len() - 1;
        for (i, deconv) in self.deconvs.iter().enumerate() {
            deconv_in.push(cur.clone());
            let pre = deconv.forward(&cur);
            cur = if i == last { sigmoid(&pre) } else { relu(&pre) };
            deconv_pre.push(pre);
        }
        let output = cur;
        (
            output.clone(),
            DecoderCache {
                z: z.clone(),
                expand_pre,
                deconv_in,
                deconv_pre,
                output,
            },
        )
    }

    fn backward(&mut self, cache: &DecoderCache, g_out: &Array3<f64>) -> Array2<f64> {
        let b = cache.z.nrows();
        let last = self.deconvs.len() - 1;
        let mut g = sigmoid_grad_from_output(&cache.output, g_out);
        for i in (0..self.deconvs.len()).rev() {
            if i != last {
                g = relu_grad(&cache.deconv_pre[i], &g);
            }
            g = self.deconvs[i].backward(&cache.deconv_in[i], &g);
        }
        let g_h = g
            .into_shape_with_order((b, self.seed_channels * self.seed_len))
            .unwrap();
        let g_expand_pre = relu_grad(&cache.expand_pre, &g_h);
        self.expand.backward(&cache.z, &g_expand_pre)
    }

    fn zero_grad(&mut self) {
        self.expand.zero_grad();
        for d in &mut self.deconvs {
            d.zero_grad();
        }
    }

    fn params(&mut self) -> Vec<ParamView<'_>> {
        let mut v = self.expand.params();
        for d in &mut self.deconvs {
            v.extend(d.params());
        }
        v
    }
}

/// Discriminator: encoder-shaped convolution stack; the flattened last
/// activation is the feature map f for the adversarial loss, followed by a
/// scalar real/fake head.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Discriminator {
    convs: Vec<Conv1d>,
    head: Dense,
}

struct DiscCache {
    conv_in: Vec<Array3<f64>>,
    conv_pre: Vec<Array3<f64>>,
    flat: Array2<f64>,
}

impl Discriminator {
    fn new(cfg: &ScorerConfig, padded_len: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        let k = cfg.kernel_size;
        let pad = (k - 2) / 2;
        let mut convs = Vec::new();
        let mut channels = 1;
        let mut length = padded_len;
        for &w in &cfg.conv_widths {
            convs.push(Conv1d::new(channels, w, k, 2, pad, Init::Normal(0.02), rng));
            channels = w;
            length /= 2;
        }
        let head = Dense::new(channels * length, 1, Init::GlorotUniform, rng);
        Self { convs, head }
    }

    fn feature_dim(&self) -> usize {
        self.head.w.ncols()
    }

    /// Returns (features, logits, cache).
    fn forward(&self, x: &Array3<f64>) -> (Array2<f64>, Array2<f64>, DiscCache) {
        let b = x.dim().0;
        let mut cur = x.clone();
        let mut conv_in = Vec::new();
        let mut conv_pre = Vec::new();
        for conv in &self.convs {
            conv_in.push(cur.clone());
            let pre = conv.forward(&cur);
            cur = leaky_relu(&pre, LEAK);
            conv_pre.push(pre);
        }
        let flat = cur.into_shape_with_order((b, self.feature_dim())).unwrap();
        let logits = self.head.forward(&flat);
        (
            flat.clone(),
            logits,
            DiscCache {
                conv_in,
                conv_pre,
                flat,
            },
        )
    }

    /// Backward through either or both heads.
    fn backward(
        &mut self,
        cache: &DiscCache,
        g_feat: Option<&Array2<f64>>,
        g_logit: Option<&Array2<f64>>,
    ) -> Array3<f64> {
        let b = cache.flat.nrows();
        let mut g_flat = match g_logit {
            Some(gl) => self.head.backward(&cache.flat, gl),
            None => Array2::zeros(cache.flat.raw_dim()),
        };
        if let Some(gf) = g_feat {
            g_flat += gf;
        }
        let c_last = self.convs.last().unwrap().w.dim().0;
        let mut g_act = g_flat
            .into_shape_with_order((b, c_last, self.feature_dim() / c_last))
            .unwrap();
        for i in (0..self.convs.len()).rev() {
            let g_pre = leaky_relu_grad(&cache.conv_pre[i], &g_act, LEAK);
            g_act = self.convs[i].backward(&cache.conv_in[i], &g_pre);
        }
        g_act
    }

    fn zero_grad(&mut self) {
        for c in &mut self.convs {
            c.zero_grad();
        }
        self.head.zero_grad();
    }

    fn params(&mut self) -> Vec<ParamView<'_>> {
        let mut v = Vec::new();
        for c in &mut self.convs {
            v.extend(c.params());
        }
        v.extend(self.head.params());
        v
    }
}

/// Mean losses of one epoch; `total` is the weighted sum of the three
/// generator components.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLosses {
    pub total: f64,
    pub adversarial: f64,
    pub contextual: f64,
    pub encoder: f64,
    pub discriminator: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingStats {
    pub epochs: Vec<EpochLosses>,
}

/// Trained anomaly scorer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnomalyScorer {
    pub config: ScorerConfig,
    pub n_features: usize,
    padded_len: usize,
    g_enc: Encoder,
    g_dec: Decoder,
    e_enc: Encoder,
    disc: Discriminator,
    pub training_stats: TrainingStats,
}

fn pad_features(features: &Array2<f64>, padded_len: usize) -> Array2<f64> {
    let (n, d) = features.dim();
    let mut out = Array2::zeros((n, padded_len));
    out.slice_mut(ndarray::s![.., ..d]).assign(features);
    out
}

fn to_channels(batch: &Array2<f64>) -> Array3<f64> {
    let (b, l) = batch.dim();
    batch.to_owned().into_shape_with_order((b, 1, l)).unwrap()
}

fn binary_ce_with_logits(logits: &Array2<f64>, target: f64) -> f64 {
    let n = logits.len() as f64;
    logits
        .iter()
        .map(|&z| z.max(0.0) - z * target + (1.0 + (-z.abs()).exp()).ln())
        .sum::<f64>()
        / n
}

fn sigmoid_scalar(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl AnomalyScorer {
    /// Builds untrained networks (exposed so tests and baselines can measure
    /// untrained behavior).
    pub fn build(n_features: usize, config: &ScorerConfig) -> Result<Self> {
        config.validate()?;
        if n_features == 0 {
            return Err(Error::InvalidParameter("need at least one feature".into()));
        }
        let padded_len = config.padded_len(n_features);
        let mut rng = rng_from_seed(config.seed);
        let g_enc = Encoder::new(config, padded_len, &mut rng);
        let g_dec = Decoder::new(config, padded_len, &mut rng);
        let e_enc = Encoder::new(config, padded_len, &mut rng);
        let disc = Discriminator::new(config, padded_len, &mut rng);
        // The two encoder towers must be architecturally identical (the
        // weights stay independent).
        assert_eq!(
            g_enc.layer_shapes(),
            e_enc.layer_shapes(),
            "encoder towers diverged structurally"
        );
        Ok(Self {
            config: config.clone(),
            n_features,
            padded_len,
            g_enc,
            g_dec,
            e_enc,
            disc,
            training_stats: TrainingStats::default(),
        })
    }

    pub fn padded_len(&self) -> usize {
        self.padded_len
    }

    /// Raw anomaly scores: per sample, the Euclidean norm of
    /// G_E(x) - E(G(x)). Batching is a semantic no-op.
    pub fn score(&self, features: &Array2<f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: features.ncols(),
            });
        }
        let padded = pad_features(features, self.padded_len);
        let mut raw = Vec::with_capacity(features.nrows());
        for chunk_start in (0..features.nrows()).step_by(256) {
            let end = (chunk_start + 256).min(features.nrows());
            let batch = padded.slice(ndarray::s![chunk_start..end, ..]).to_owned();
            let x3 = to_channels(&batch);
            let (z, _) = self.g_enc.forward(&x3);
            let (xhat, _) = self.g_dec.forward(&z);
            let (zhat, _) = self.e_enc.forward(&xhat);
            for i in 0..z.nrows() {
                let d: f64 = z
                    .row(i)
                    .iter()
                    .zip(zhat.row(i).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                raw.push(d.sqrt());
            }
        }
        Ok(raw)
    }

    /// Reconstructions G(x) cropped back to the original feature width.
    pub fn reconstruct(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: features.ncols(),
            });
        }
        let padded = pad_features(features, self.padded_len);
        let x3 = to_channels(&padded);
        let (z, _) = self.g_enc.forward(&x3);
        let (xhat, _) = self.g_dec.forward(&z);
        let b = features.nrows();
        let flat = xhat.into_shape_with_order((b, self.padded_len)).unwrap();
        Ok(flat.slice(ndarray::s![.., ..self.n_features]).to_owned())
    }

    pub fn to_json_file(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    #[cfg(test)]
    pub(crate) fn zero_all_params(&mut self) {
        let views = self
            .g_enc
            .params()
            .into_iter()
            .chain(self.g_dec.params())
            .chain(self.e_enc.params())
            .chain(self.disc.params());
        for p in views {
            p.value.fill(0.0);
        }
    }
}

/// Trains the scorer on (probable) normal samples. Fewer samples than
/// `batch_size` train as one full-set batch; a non-finite loss aborts with a
/// diagnostic. Deterministic given the config seed on a single-threaded
/// build.
pub fn train_scorer(normals: &Array2<f64>, config: &ScorerConfig) -> Result<AnomalyScorer> {
    if normals.nrows() == 0 {
        return Err(Error::EmptyDataset("scorer training set".into()));
    }
    let mut scorer = AnomalyScorer::build(normals.ncols(), config)?;
    let (w_adv, w_con, w_enc) = config.loss_weights;
    let mut adam_g = Adam::new(config.learning_rate, 0.5, 0.999);
    let mut adam_d = Adam::new(config.learning_rate, 0.5, 0.999);
    let mut rng = rng_from_seed(config.seed ^ 0x0ddc_0ffe);

    let padded = pad_features(normals, scorer.padded_len);
    let n = normals.nrows();
    let batch = config.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..config.epochs {
        shuffle(&mut rng, &mut order);
        let mut sums = [0.0f64; 5];
        let mut batches = 0.0;
        for chunk in order.chunks(batch) {
            let x3 = to_channels(&padded.select(Axis(0), chunk));
            let m = chunk.len() as f64;

            let (z, enc_cache) = scorer.g_enc.forward(&x3);
            let (xhat, dec_cache) = scorer.g_dec.forward(&z);
            let (zhat, e_cache) = scorer.e_enc.forward(&xhat);

            let (f_real, logit_real, disc_real_cache) = scorer.disc.forward(&x3);
            let (f_fake, logit_fake, disc_fake_cache) = scorer.disc.forward(&xhat);

            let feat_n = f_real.len() as f64;
            let l_adv = (&f_real - &f_fake).mapv(|v| v * v).sum() / feat_n;
            let l_con = (&x3 - &xhat).mapv(f64::abs).sum() / x3.len() as f64;
            let l_enc = (&z - &zhat).mapv(|v| v * v).sum() / z.len() as f64;
            let l_total = w_adv * l_adv + w_con * l_con + w_enc * l_enc;
            let l_disc = 0.5
                * (binary_ce_with_logits(&logit_real, 1.0)
                    + binary_ce_with_logits(&logit_fake, 0.0));
            if !l_total.is_finite() || !l_disc.is_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "epoch {epoch}: generator loss {l_total}, discriminator loss {l_disc}"
                )));
            }

            // Generator update. Gradients flow through the discriminator
            // features into the reconstruction, but only generator-side
            // parameters step; discriminator grads accumulated on the way
            // are discarded by its zero_grad below.
            scorer.g_enc.zero_grad();
            scorer.g_dec.zero_grad();
            scorer.e_enc.zero_grad();

            let g_ffake = (&f_fake - &f_real).mapv(|v| 2.0 * v * w_adv / feat_n);
            let g_xhat_adv = scorer.disc.backward(&disc_fake_cache, Some(&g_ffake), None);
            let g_xhat_con = (&xhat - &x3).mapv(|v| v.signum() * w_con / x3.len() as f64);
            let g_zhat = (&zhat - &z).mapv(|v| 2.0 * v * w_enc / z.len() as f64);
            let g_xhat_enc = scorer.e_enc.backward(&e_cache, &g_zhat);

            let g_xhat = &g_xhat_adv + &g_xhat_con + &g_xhat_enc;
            let g_z_dec = scorer.g_dec.backward(&dec_cache, &g_xhat);
            let g_z_enc_loss = (&z - &zhat).mapv(|v| 2.0 * v * w_enc / z.len() as f64);
            let g_z = &g_z_dec + &g_z_enc_loss;
            scorer.g_enc.backward(&enc_cache, &g_z);

            let mut g_params = scorer.g_enc.params();
            g_params.extend(scorer.g_dec.params());
            g_params.extend(scorer.e_enc.params());
            adam_g.step(g_params);

            // Discriminator update on the same forward pass.
            scorer.disc.zero_grad();
            let g_logit_real = logit_real.mapv(|v| 0.5 * (sigmoid_scalar(v) - 1.0) / m);
            let g_logit_fake = logit_fake.mapv(|v| 0.5 * sigmoid_scalar(v) / m);
            scorer
                .disc
                .backward(&disc_real_cache, None, Some(&g_logit_real));
            scorer
                .disc
                .backward(&disc_fake_cache, None, Some(&g_logit_fake));
            adam_d.step(scorer.disc.params());

            sums[0] += l_total;
            sums[1] += l_adv;
            sums[2] += l_con;
            sums[3] += l_enc;
            sums[4] += l_disc;
            batches += 1.0;
        }
        scorer.training_stats.epochs.push(EpochLosses {
            total: sums[0] / batches,
            adversarial: sums[1] / batches,
            contextual: sums[2] / batches,
            encoder: sums[3] / batches,
            discriminator: sums[4] / batches,
        });
    }
    Ok(scorer)
}

/// Min-max scales scores into [0,1] over the given set; a constant set maps
/// to all zeros (no evidence of anomaly when every score agrees).
pub fn scale_scores(raw: &[f64]) -> Vec<f64> {
    if raw.is_empty() {
        return Vec::new();
    }
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if span <= 0.0 {
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|&s| (s - min) / span).collect()
}

/// Thresholds scaled scores; a sample on the boundary counts as anomalous.
pub fn classify(scaled: &[f64], threshold: f64) -> Vec<u8> {
    scaled.iter().map(|&h| u8::from(h >= threshold)).collect()
}

/// Nearest-rank quantile (q in [0,1]) of a score set.
pub fn score_quantile(scores: &[f64], q: f64) -> f64 {
    assert!(!scores.is_empty(), "quantile of empty score set");
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Maps a raw-space threshold into the scaled space of a score set (clamped
/// to [0,1]); carries a training-fold operating point onto test scores.
pub fn raw_threshold_to_scaled(raw_threshold: f64, raw_scores: &[f64]) -> f64 {
    if raw_scores.is_empty() {
        return 1.0;
    }
    let min = raw_scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = raw_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if span <= 0.0 {
        // Constant test scores scale to 0: predict anomalous only if the
        // operating point sits at or below them.
        return if raw_threshold <= min { 0.0 } else { 1.0 };
    }
    ((raw_threshold - min) / span).clamp(0.0, 1.0)
}

/// Scores with their scaled form, threshold, and hard labels; the exported
/// per-fold artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreVector {
    pub raw: Vec<f64>,
    pub scaled: Vec<f64>,
    pub threshold: f64,
    pub predicted: Vec<u8>,
}

impl ScoreVector {
    /// Scales the raw scores and thresholds them (threshold in scaled
    /// space).
    pub fn from_raw(raw: Vec<f64>, threshold: f64) -> Self {
        let scaled = scale_scores(&raw);
        let predicted = classify(&scaled, threshold);
        Self {
            raw,
            scaled,
            threshold,
            predicted,
        }
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sample_index", "raw", "scaled", "predicted"])?;
        for i in 0..self.raw.len() {
            w.write_record([
                i.to_string(),
                format!("{:.17e}", self.raw[i]),
                format!("{:.17e}", self.scaled[i]),
                self.predicted[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::roc_auc;
    use crate::rng::standard_normal;

    fn small_config(seed: u64) -> ScorerConfig {
        ScorerConfig {
            latent_dim: 8,
            conv_widths: vec![8, 16],
            kernel_size: 4,
            epochs: 12,
            batch_size: 32,
            seed,
            ..Default::default()
        }
    }

    fn gaussian_rows(
        n: usize,
        dim: usize,
        mean: f64,
        std: f64,
        shift_sigmas: f64,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Array2<f64> {
        Array2::from_shape_fn((n, dim), |(_, j)| {
            let mu = if j < dim / 2 {
                mean + shift_sigmas * std
            } else {
                mean
            };
            (mu + std * standard_normal(rng)).clamp(0.0, 1.0)
        })
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let x = Array2::zeros((0, 8));
        assert!(matches!(
            train_scorer(&x, &small_config(0)),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn training_reduces_reconstruction_loss() {
        let mut rng = rng_from_seed(1);
        let x = gaussian_rows(400, 20, 0.45, 0.1, 0.0, &mut rng);
        let scorer = train_scorer(&x, &small_config(3)).unwrap();
        let stats = &scorer.training_stats.epochs;
        assert!(
            stats.last().unwrap().contextual < stats[0].contextual,
            "contextual loss did not drop: {} -> {}",
            stats[0].contextual,
            stats.last().unwrap().contextual
        );
    }

    #[test]
    fn loss_decomposition_holds_at_every_logged_step() {
        let mut rng = rng_from_seed(2);
        let x = gaussian_rows(200, 12, 0.5, 0.08, 0.0, &mut rng);
        let cfg = small_config(5);
        let scorer = train_scorer(&x, &cfg).unwrap();
        let (wa, wc, we) = cfg.loss_weights;
        for e in &scorer.training_stats.epochs {
            let want = wa * e.adversarial + wc * e.contextual + we * e.encoder;
            assert!((e.total - want).abs() < 1e-6, "{} vs {want}", e.total);
        }
    }

    #[test]
    fn shifted_anomalies_score_higher_on_most_seeds() {
        let mut wins = 0;
        for seed in 0..5u64 {
            let mut rng = rng_from_seed(100 + seed);
            let train = gaussian_rows(400, 20, 0.4, 0.08, 0.0, &mut rng);
            let normals = gaussian_rows(120, 20, 0.4, 0.08, 0.0, &mut rng);
            let anomalies = gaussian_rows(120, 20, 0.4, 0.08, 3.0, &mut rng);
            let scorer = train_scorer(&train, &small_config(seed)).unwrap();
            let sn = scorer.score(&normals).unwrap();
            let sa = scorer.score(&anomalies).unwrap();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            if mean(&sa) > mean(&sn) {
                wins += 1;
            }
        }
        assert!(wins >= 4, "only {wins}/5 seeds separated anomalies");
    }

    #[test]
    fn trained_beats_untrained_auc_on_most_seeds() {
        let mut wins = 0;
        for seed in 0..5u64 {
            let mut rng = rng_from_seed(300 + seed);
            // A 1-sigma shift keeps the untrained scorer off the AUC
            // ceiling so strict improvement is measurable.
            let train = gaussian_rows(400, 20, 0.4, 0.08, 0.0, &mut rng);
            let normals = gaussian_rows(100, 20, 0.4, 0.08, 0.0, &mut rng);
            let anomalies = gaussian_rows(100, 20, 0.4, 0.08, 1.0, &mut rng);
            let scores_of = |s: &AnomalyScorer| {
                let mut all = s.score(&normals).unwrap();
                all.extend(s.score(&anomalies).unwrap());
                all
            };
            let truth: Vec<u8> = std::iter::repeat(0u8)
                .take(100)
                .chain(std::iter::repeat(1u8).take(100))
                .collect();
            let untrained = AnomalyScorer::build(20, &small_config(seed)).unwrap();
            let trained = train_scorer(&train, &small_config(seed)).unwrap();
            let (_, auc_untrained) = roc_auc(&scores_of(&untrained), &truth).unwrap();
            let (_, auc_trained) = roc_auc(&scores_of(&trained), &truth).unwrap();
            eprintln!("seed {seed}: untrained {auc_untrained:.4} trained {auc_trained:.4}");
            if auc_trained > auc_untrained {
                wins += 1;
            }
        }
        assert!(wins >= 4, "trained beat untrained on only {wins}/5 seeds");
    }

    #[test]
    fn batch_and_single_scoring_agree() {
        let mut rng = rng_from_seed(7);
        let x = gaussian_rows(300, 10, 0.5, 0.1, 0.0, &mut rng);
        let scorer = AnomalyScorer::build(10, &small_config(9)).unwrap();
        let batched = scorer.score(&x).unwrap();
        for i in [0usize, 57, 255, 256, 299] {
            let single = scorer
                .score(&x.slice(ndarray::s![i..i + 1, ..]).to_owned())
                .unwrap();
            assert!((batched[i] - single[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_networks_give_zero_scores() {
        // With every parameter zeroed both latent codes are zero vectors, so
        // the score (norm of their difference) is exactly zero.
        let mut scorer = AnomalyScorer::build(6, &small_config(1)).unwrap();
        scorer.zero_all_params();
        let x = Array2::from_elem((4, 6), 0.3);
        assert_eq!(scorer.score(&x).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn naive_forward_oracle_matches_score() {
        // Independent per-sample forward pass written as plain loops.
        let cfg = ScorerConfig {
            latent_dim: 3,
            conv_widths: vec![2, 3],
            kernel_size: 4,
            epochs: 1,
            batch_size: 4,
            seed: 11,
            ..Default::default()
        };
        let scorer = AnomalyScorer::build(5, &cfg).unwrap();
        let mut rng = rng_from_seed(13);
        let x = Array2::from_shape_fn((3, 5), |_| 0.5 + 0.2 * standard_normal(&mut rng));
        let got = scorer.score(&x).unwrap();

        let naive_encoder = |enc: &Encoder, input: &[f64]| -> Vec<f64> {
            let mut cur: Vec<Vec<f64>> = vec![input.to_vec()];
            for conv in &enc.convs {
                let (oc, ic, k) = conv.w.dim();
                let l = cur[0].len();
                let lout = (l + 2 * conv.pad - k) / conv.stride + 1;
                let mut next = vec![vec![0.0; lout]; oc];
                for (o, lane) in next.iter_mut().enumerate() {
                    for (t, slot) in lane.iter_mut().enumerate() {
                        let mut acc = conv.b[o];
                        for ci in 0..ic {
                            for j in 0..k {
                                let src = (t * conv.stride + j) as isize - conv.pad as isize;
                                if src >= 0 && (src as usize) < l {
                                    acc += cur[ci][src as usize] * conv.w[[o, ci, j]];
                                }
                            }
                        }
                        *slot = if acc > 0.0 { acc } else { LEAK * acc };
                    }
                }
                cur = next;
            }
            let flat: Vec<f64> = cur.into_iter().flatten().collect();
            (0..enc.proj.w.nrows())
                .map(|o| {
                    enc.proj.b[o]
                        + flat
                            .iter()
                            .enumerate()
                            .map(|(i, &v)| v * enc.proj.w[[o, i]])
                            .sum::<f64>()
                })
                .collect()
        };
        let naive_decoder = |dec: &Decoder, z: &[f64]| -> Vec<f64> {
            let mut h: Vec<f64> = (0..dec.expand.w.nrows())
                .map(|o| {
                    let v = dec.expand.b[o]
                        + z.iter()
                            .enumerate()
                            .map(|(i, &zv)| zv * dec.expand.w[[o, i]])
                            .sum::<f64>();
                    v.max(0.0)
                })
                .collect();
            let mut channels = dec.seed_channels;
            let mut length = dec.seed_len;
            let last = dec.deconvs.len() - 1;
            for (li, deconv) in dec.deconvs.iter().enumerate() {
                let (ic, oc, k) = deconv.w.dim();
                assert_eq!(ic, channels);
                let lout = (length - 1) * deconv.stride + k - 2 * deconv.pad;
                let mut out = vec![vec![0.0; lout]; oc];
                for o in 0..oc {
                    for t in 0..length {
                        for ci in 0..ic {
                            for j in 0..k {
                                let dst = (t * deconv.stride + j) as isize - deconv.pad as isize;
                                if dst >= 0 && (dst as usize) < lout {
                                    out[o][dst as usize] +=
                                        h[ci * length + t] * deconv.w[[ci, o, j]];
                                }
                            }
                        }
                    }
                }
                let mut flat = Vec::new();
                for o in 0..oc {
                    for t in 0..lout {
                        let v = out[o][t] + deconv.b[o];
                        flat.push(if li == last {
                            1.0 / (1.0 + (-v).exp())
                        } else {
                            v.max(0.0)
                        });
                    }
                }
                h = flat;
                channels = oc;
                length = lout;
            }
            h
        };

        for i in 0..3 {
            let mut padded = vec![0.0; scorer.padded_len];
            for j in 0..5 {
                padded[j] = x[[i, j]];
            }
            let z = naive_encoder(&scorer.g_enc, &padded);
            let xhat = naive_decoder(&scorer.g_dec, &z);
            let zhat = naive_encoder(&scorer.e_enc, &xhat);
            let want: f64 = z
                .iter()
                .zip(&zhat)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(
                (got[i] - want).abs() < 1e-6,
                "sample {i}: {} vs oracle {want}",
                got[i]
            );
        }
    }

    #[test]
    fn scale_scores_examples() {
        assert_eq!(scale_scores(&[2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(scale_scores(&[7.0, 7.0, 7.0]), vec![0.0, 0.0, 0.0]);
        let scaled = scale_scores(&[0.1, 0.2, 0.5, 0.9]);
        let want = [0.0, 0.125, 0.5, 1.0];
        for (a, b) in scaled.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn classify_boundary_is_anomalous() {
        assert_eq!(classify(&[0.0, 0.5, 1.0], 0.5), vec![0, 1, 1]);
        assert_eq!(classify(&[0.0, 0.5, 1.0], 0.0), vec![1, 1, 1]);
        assert_eq!(classify(&[0.0, 0.5, 1.0], 1.0), vec![0, 0, 1]);
    }

    #[test]
    fn scaling_preserves_rank_and_auc() {
        let mut rng = rng_from_seed(21);
        let raw: Vec<f64> = (0..200).map(|_| standard_normal(&mut rng).abs()).collect();
        let truth: Vec<u8> = (0..200).map(|i| (i % 4 == 0) as u8).collect();
        let scaled = scale_scores(&raw);
        assert!(scaled.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let argsort = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap().then(a.cmp(&b)));
            idx
        };
        assert_eq!(argsort(&raw), argsort(&scaled));
        let (_, auc_raw) = roc_auc(&raw, &truth).unwrap();
        let (_, auc_scaled) = roc_auc(&scaled, &truth).unwrap();
        assert!((auc_raw - auc_scaled).abs() < 1e-12);
    }

    #[test]
    fn quantile_and_threshold_mapping() {
        let scores = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(score_quantile(&scores, 0.9), 9.0);
        assert_eq!(score_quantile(&scores, 1.0), 10.0);
        let th = raw_threshold_to_scaled(9.0, &scores);
        assert!((th - 8.0 / 9.0).abs() < 1e-12);
        assert_eq!(raw_threshold_to_scaled(0.5, &scores), 0.0);
        assert_eq!(raw_threshold_to_scaled(11.0, &scores), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let scorer = AnomalyScorer::build(10, &small_config(2)).unwrap();
        let x = Array2::zeros((3, 7));
        assert!(matches!(
            scorer.score(&x),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn checkpoint_round_trip_preserves_scores() {
        let mut rng = rng_from_seed(33);
        let x = gaussian_rows(60, 8, 0.5, 0.1, 0.0, &mut rng);
        let cfg = ScorerConfig {
            epochs: 2,
            ..small_config(17)
        };
        let scorer = train_scorer(&x, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scorer.json");
        scorer.to_json_file(&path).unwrap();
        let loaded = AnomalyScorer::from_json_file(&path).unwrap();
        assert_eq!(scorer.score(&x).unwrap(), loaded.score(&x).unwrap());
    }
}
