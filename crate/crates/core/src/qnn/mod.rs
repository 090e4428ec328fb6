//! Implicit quantile networks: `H(features, u) = h(ψ(features) ∘ φ(u))`.
//!
//! `ψ` is a rectified feed-forward encoder into `embed_dim`, `φ(u)` is a
//! cosine basis `cos(πju), j = 1..n` followed by a rectified linear layer
//! into `embed_dim`, and `h` is a rectified head with dropout that returns
//! one quantile value. Inputs and the target are standardized with
//! statistics stored in the net.

pub mod checkpoint;
pub(crate) mod dense;
pub mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{open01, SimRng};
use crate::util::sorted;
use crate::{Error, Result};
use dense::LayerShape;

pub use train::{train_qnn, QuantileDataset, TrainConfig, TrainReport};

/// Elementwise input transform applied before standardization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureTransform {
    #[default]
    Identity,
    /// `asinh(x)`: compresses heavy-tailed features.
    Asinh,
    /// `ln(x)`: for strictly positive features such as precisions.
    Ln,
}

impl FeatureTransform {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            FeatureTransform::Identity => x,
            FeatureTransform::Asinh => x.asinh(),
            FeatureTransform::Ln => x.ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QnnConfig {
    pub embed_dim: usize,
    /// Widths of the encoder layers; the last must equal `embed_dim`.
    pub encoder_layers: Vec<usize>,
    /// Widths of the head layers; the last must be 1.
    pub fusion_layers: Vec<usize>,
    pub dropout_rate: f64,
    pub activation: Activation,
    pub n_cosines: usize,
    /// Per-feature transforms; empty means identity everywhere.
    pub feature_transforms: Vec<FeatureTransform>,
}

impl Default for QnnConfig {
    fn default() -> Self {
        Self::with_width(64)
    }
}

impl QnnConfig {
    /// Default topology (three encoder layers, four head layers) at a
    /// uniform width.
    pub fn with_width(width: usize) -> Self {
        Self {
            embed_dim: width,
            encoder_layers: vec![width; 3],
            fusion_layers: vec![width, width, width, 1],
            dropout_rate: 0.1,
            activation: Activation::Relu,
            n_cosines: width,
            feature_transforms: Vec::new(),
        }
    }

    pub fn with_transforms(mut self, t: Vec<FeatureTransform>) -> Self {
        self.feature_transforms = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.n_cosines == 0 {
            return Err(Error::domain("embed_dim and n_cosines must be positive"));
        }
        if self.encoder_layers.last() != Some(&self.embed_dim) {
            return Err(Error::domain("encoder output width must equal embed_dim"));
        }
        if self.fusion_layers.last() != Some(&1) {
            return Err(Error::domain("head must end in a single output"));
        }
        if self
            .encoder_layers
            .iter()
            .chain(&self.fusion_layers)
            .any(|&w| w == 0)
        {
            return Err(Error::domain("layer widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::domain("dropout rate must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// `cos(π j u)` for `j = 1..=n`.
pub fn cosine_embed(u: f64, n: usize) -> Result<Vec<f64>> {
    check_u(u)?;
    Ok((1..=n)
        .map(|j| (std::f64::consts::PI * j as f64 * u).cos())
        .collect())
}

/// Fills `out` with `cos(π j u)`, `j = 1..=out.len()`, by the Chebyshev
/// recurrence.
#[inline]
pub(crate) fn fill_cosines(u: f64, out: &mut [f64]) {
    let c1 = (std::f64::consts::PI * u).cos();
    let (mut prev, mut cur) = (1.0, c1);
    for slot in out.iter_mut() {
        *slot = cur;
        let next = 2.0 * c1 * cur - prev;
        prev = cur;
        cur = next;
    }
}

/// `ρ_u(z) = u z 1{z > 0} - (1 - u) z 1{z ≤ 0}` with `z = target - prediction`.
#[inline]
pub fn pinball_loss(u: f64, z: f64) -> f64 {
    if z > 0.0 {
        u * z
    } else {
        -(1.0 - u) * z
    }
}

fn check_u(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("quantile level {u} not in (0, 1)")))
    }
}

/// Per-feature transform plus standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub transforms: Vec<FeatureTransform>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaler {
    fn identity(transforms: Vec<FeatureTransform>) -> Self {
        let d = transforms.len();
        Self {
            transforms,
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    #[inline]
    pub(crate) fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            out[j] = (self.transforms[j].apply(row[j]) - self.mean[j]) / self.scale[j];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub scale: f64,
}

/// Standardization scale with a floor for degenerate columns.
pub(crate) fn safe_scale(sd: f64, mean: f64) -> f64 {
    if sd.is_finite() && sd > 1e-12 * (1.0 + mean.abs()) {
        sd
    } else {
        1.0
    }
}

fn build_layout(
    config: &QnnConfig,
    feature_dim: usize,
) -> (Vec<LayerShape>, LayerShape, Vec<LayerShape>, usize) {
    let mut offset = 0;
    let mut enc_w = vec![feature_dim];
    enc_w.extend(&config.encoder_layers);
    let encoder = dense::layout(&enc_w, &mut offset);
    let cosine = dense::layout(&[config.n_cosines, config.embed_dim], &mut offset)[0];
    let mut fus_w = vec![config.embed_dim];
    fus_w.extend(&config.fusion_layers);
    let fusion = dense::layout(&fus_w, &mut offset);
    (encoder, cosine, fusion, offset)
}

/// Identifies one dense layer of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerId {
    Encoder(usize),
    Cosine,
    Fusion(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileNet {
    pub(crate) config: QnnConfig,
    pub(crate) feature_dim: usize,
    pub(crate) params: Vec<f64>,
    pub(crate) encoder: Vec<LayerShape>,
    pub(crate) cosine: LayerShape,
    pub(crate) fusion: Vec<LayerShape>,
    pub(crate) input: InputScaler,
    pub(crate) target: TargetScaler,
    pub(crate) trained: bool,
}

/// Activations kept for the backward pass.
#[derive(Default)]
pub(crate) struct StackCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
}

pub(crate) struct ForwardCache {
    encoder: StackCache,
    cosine: StackCache,
    emb: Vec<f64>,
    phi: Vec<f64>,
    fusion: StackCache,
}

impl QuantileNet {
    /// Untrained net with uniform fan-in initialization `U(±1/√fan_in)`.
    pub fn new(config: QnnConfig, feature_dim: usize, rng: &mut SimRng) -> Result<Self> {
        config.validate()?;
        if feature_dim == 0 {
            return Err(Error::domain("feature dimension must be positive"));
        }
        let transforms = if config.feature_transforms.is_empty() {
            vec![FeatureTransform::Identity; feature_dim]
        } else if config.feature_transforms.len() == feature_dim {
            config.feature_transforms.clone()
        } else {
            return Err(Error::Interface(format!(
                "{} feature transforms for {feature_dim} features",
                config.feature_transforms.len()
            )));
        };
        let (encoder, cosine, fusion, n_params) = build_layout(&config, feature_dim);
        let mut params = vec![0.0; n_params];
        for l in encoder
            .iter()
            .chain(std::iter::once(&cosine))
            .chain(&fusion)
        {
            let bound = 1.0 / (l.n_in as f64).sqrt();
            for p in &mut params[l.w_off..l.w_off + l.n_params()] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(Self {
            config,
            feature_dim,
            params,
            encoder,
            cosine,
            fusion,
            input: InputScaler::identity(transforms),
            target: TargetScaler {
                mean: 0.0,
                scale: 1.0,
            },
            trained: false,
        })
    }

    pub fn config(&self) -> &QnnConfig {
        &self.config
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_scaler(&self) -> &InputScaler {
        &self.input
    }

    pub fn target_scaler(&self) -> TargetScaler {
        self.target
    }

    /// Layers in parameter order.
    pub fn layers(&self) -> Vec<(LayerId, LayerShape)> {
        let mut v: Vec<_> = self
            .encoder
            .iter()
            .enumerate()
            .map(|(i, l)| (LayerId::Encoder(i), *l))
            .collect();
        v.push((LayerId::Cosine, self.cosine));
        v.extend(
            self.fusion
                .iter()
                .enumerate()
                .map(|(i, l)| (LayerId::Fusion(i), *l)),
        );
        v
    }

    fn shape(&self, id: LayerId) -> Result<LayerShape> {
        let l = match id {
            LayerId::Encoder(i) => self.encoder.get(i),
            LayerId::Cosine => Some(&self.cosine),
            LayerId::Fusion(i) => self.fusion.get(i),
        };
        l.copied()
            .ok_or_else(|| Error::Interface(format!("no layer {id:?}")))
    }

    /// Mutable `(weights, bias)` of one layer.
    pub fn layer_mut(&mut self, id: LayerId) -> Result<(&mut [f64], &mut [f64])> {
        let l = self.shape(id)?;
        let (head, tail) = self.params.split_at_mut(l.b_off);
        Ok((&mut head[l.w_off..], &mut tail[..l.n_out]))
    }

    fn check_features(&self, features: &[f64], rows: usize) -> Result<()> {
        if features.len() != rows * self.feature_dim {
            return Err(Error::Interface(format!(
                "expected {} feature values ({} rows of {}), got {}",
                rows * self.feature_dim,
                rows,
                self.feature_dim,
                features.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn normalize_rows(&self, features: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; features.len()];
        for (src, dst) in features
            .chunks_exact(self.feature_dim)
            .zip(out.chunks_exact_mut(self.feature_dim))
        {
            self.input.apply_row(src, dst);
        }
        out
    }

    fn run_stack(
        &self,
        layers: &[LayerShape],
        mut x: Vec<f64>,
        b: usize,
        relu_last: bool,
        mut dropout: Option<(f64, &mut SimRng)>,
        mut cache: Option<&mut StackCache>,
    ) -> Vec<f64> {
        let last = layers.len() - 1;
        for (i, l) in layers.iter().enumerate() {
            let mut z = vec![0.0; b * l.n_out];
            dense::forward(&self.params, l, &x, b, &mut z);
            let activate = i < last || relu_last;
            let mut out = z.clone();
            if activate {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            let mut mask = None;
            if i < last {
                if let Some((rate, rng)) = dropout.as_mut() {
                    if *rate > 0.0 {
                        let keep = 1.0 - *rate;
                        let m: Vec<f64> = (0..out.len())
                            .map(|_| {
                                if rng.random::<f64>() < keep {
                                    1.0 / keep
                                } else {
                                    0.0
                                }
                            })
                            .collect();
                        out.iter_mut().zip(&m).for_each(|(o, m)| *o *= m);
                        mask = Some(m);
                    }
                }
            }
            if let Some(c) = cache.as_mut() {
                c.inputs.push(std::mem::take(&mut x));
                c.pre.push(z);
                c.masks.push(mask);
            }
            x = out;
        }
        x
    }

    #[allow(clippy::too_many_arguments)]
    fn back_stack(
        &self,
        layers: &[LayerShape],
        cache: &StackCache,
        mut d: Vec<f64>,
        b: usize,
        relu_last: bool,
        grads: &mut [f64],
        need_input: bool,
    ) -> Vec<f64> {
        let last = layers.len() - 1;
        for i in (0..layers.len()).rev() {
            let l = &layers[i];
            if i < last || relu_last {
                for (k, dv) in d.iter_mut().enumerate() {
                    if cache.pre[i][k] <= 0.0 {
                        *dv = 0.0;
                    }
                }
            }
            if let Some(m) = &cache.masks[i] {
                d.iter_mut().zip(m).for_each(|(dv, m)| *dv *= m);
            }
            let want = i > 0 || need_input;
            let mut da = if want {
                vec![0.0; b * l.n_in]
            } else {
                Vec::new()
            };
            dense::backward(
                &self.params,
                grads,
                l,
                &cache.inputs[i],
                &d,
                b,
                if want { Some(&mut da) } else { None },
            );
            d = da;
        }
        d
    }

    fn cosine_inputs(&self, us: &[f64]) -> Vec<f64> {
        let n = self.config.n_cosines;
        let mut c = vec![0.0; us.len() * n];
        for (u, row) in us.iter().zip(c.chunks_exact_mut(n)) {
            fill_cosines(*u, row);
        }
        c
    }

    /// Normalized-scale outputs for normalized inputs; caches activations
    /// when `train` is given.
    pub(crate) fn forward_normalized(
        &self,
        xn: Vec<f64>,
        us: &[f64],
        dropout_rng: Option<&mut SimRng>,
        want_cache: bool,
    ) -> (Vec<f64>, Option<ForwardCache>) {
        let b = us.len();
        let mut enc_c = StackCache::default();
        let mut cos_c = StackCache::default();
        let mut fus_c = StackCache::default();
        let emb = self.run_stack(
            &self.encoder,
            xn,
            b,
            true,
            None,
            want_cache.then_some(&mut enc_c),
        );
        let phi = self.run_stack(
            std::slice::from_ref(&self.cosine),
            self.cosine_inputs(us),
            b,
            true,
            None,
            want_cache.then_some(&mut cos_c),
        );
        let z: Vec<f64> = emb.iter().zip(&phi).map(|(a, c)| a * c).collect();
        let dropout = dropout_rng.map(|r| (self.config.dropout_rate, r));
        let out = self.run_stack(
            &self.fusion,
            z,
            b,
            false,
            dropout,
            want_cache.then_some(&mut fus_c),
        );
        let cache = want_cache.then_some(ForwardCache {
            encoder: enc_c,
            cosine: cos_c,
            emb,
            phi,
            fusion: fus_c,
        });
        (out, cache)
    }

    /// Accumulates parameter gradients given `d loss / d output` (normalized scale).
    pub(crate) fn backward(&self, cache: &ForwardCache, d_out: Vec<f64>, grads: &mut [f64]) {
        let b = d_out.len();
        let dz = self.back_stack(&self.fusion, &cache.fusion, d_out, b, false, grads, true);
        let d_emb: Vec<f64> = dz.iter().zip(&cache.phi).map(|(d, c)| d * c).collect();
        let d_phi: Vec<f64> = dz.iter().zip(&cache.emb).map(|(d, e)| d * e).collect();
        self.back_stack(
            std::slice::from_ref(&self.cosine),
            &cache.cosine,
            d_phi,
            b,
            true,
            grads,
            false,
        );
        self.back_stack(&self.encoder, &cache.encoder, d_emb, b, true, grads, false);
    }

    #[inline]
    fn denormalize(&self, v: f64) -> f64 {
        self.target.mean + self.target.scale * v
    }

    /// `H(features, u)` in inference mode.
    pub fn forward(&self, features: &[f64], u: f64) -> Result<f64> {
        Ok(self.forward_batch(features, &[u])?[0])
    }

    /// Row-wise `H(features_i, u_i)`.
    pub fn forward_batch(&self, features: &[f64], us: &[f64]) -> Result<Vec<f64>> {
        self.check_features(features, us.len())?;
        us.iter().try_for_each(|&u| check_u(u))?;
        if us.is_empty() {
            return Ok(Vec::new());
        }
        let (out, _) = self.forward_normalized(self.normalize_rows(features), us, None, false);
        Ok(out.into_iter().map(|v| self.denormalize(v)).collect())
    }

    /// `H(features, u_k)` for one feature row and many levels; the encoder is
    /// evaluated once.
    pub fn quantiles(&self, features: &[f64], us: &[f64]) -> Result<Vec<f64>> {
        self.check_features(features, 1)?;
        us.iter().try_for_each(|&u| check_u(u))?;
        if us.is_empty() {
            return Ok(Vec::new());
        }
        let emb = self.encode(features);
        self.quantiles_from_embedding(&emb, us)
    }

    /// Encoder output for one feature row.
    pub(crate) fn encode(&self, features: &[f64]) -> Vec<f64> {
        let xn = self.normalize_rows(features);
        self.run_stack(&self.encoder, xn, 1, true, None, None)
    }

    pub(crate) fn quantiles_from_embedding(&self, emb: &[f64], us: &[f64]) -> Result<Vec<f64>> {
        let b = us.len();
        let phi = self.run_stack(
            std::slice::from_ref(&self.cosine),
            self.cosine_inputs(us),
            b,
            true,
            None,
            None,
        );
        let e = emb.len();
        let z: Vec<f64> = phi
            .iter()
            .enumerate()
            .map(|(k, c)| c * emb[k % e])
            .collect();
        let out = self.run_stack(&self.fusion, z, b, false, None, None);
        Ok(out.into_iter().map(|v| self.denormalize(v)).collect())
    }

    /// Predicted quantiles on the grid `(k - ½)/n`, optionally sorted
    /// (monotone rearrangement).
    pub fn quantile_curve(
        &self,
        features: &[f64],
        n_grid: usize,
        rearrange: bool,
    ) -> Result<Vec<f64>> {
        let us: Vec<f64> = (0..n_grid)
            .map(|k| (k as f64 + 0.5) / n_grid as f64)
            .collect();
        let q = self.quantiles(features, &us)?;
        Ok(if rearrange { sorted(&q) } else { q })
    }
}

/// Inverse-transform draws `H(features, u)`, `u ~ U(0, 1)`.
pub fn qnn_sample(
    net: &QuantileNet,
    features: &[f64],
    n_draws: usize,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    net.check_features(features, 1)?;
    let us: Vec<f64> = (0..n_draws).map(|_| open01(rng)).collect();
    net.quantiles(features, &us)
}
