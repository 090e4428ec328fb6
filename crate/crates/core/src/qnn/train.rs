//! Mini-batch pinball-loss training with Adam and early stopping.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_u, pinball_loss, safe_scale, QnnConfig, QuantileNet, TargetScaler};
use crate::rng::{fork, open01, seeded, SimRng};
use crate::{Error, Result};

/// Training triplets: feature rows, targets and the base draws `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileDataset {
    features: Vec<f64>,
    feature_dim: usize,
    targets: Vec<f64>,
    quantile_draws: Vec<f64>,
}

impl QuantileDataset {
    pub fn new(
        features: Vec<f64>,
        feature_dim: usize,
        targets: Vec<f64>,
        quantile_draws: Vec<f64>,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::domain("feature dimension must be positive"));
        }
        if features.len() != targets.len() * feature_dim || quantile_draws.len() != targets.len() {
            return Err(Error::Interface(format!(
                "dataset rows disagree: {} feature values (dim {feature_dim}), {} targets, {} draws",
                features.len(),
                targets.len(),
                quantile_draws.len()
            )));
        }
        quantile_draws.iter().try_for_each(|&u| check_u(u))?;
        Ok(Self {
            features,
            feature_dim,
            targets,
            quantile_draws,
        })
    }

    /// Dataset with fresh `u ~ U(0, 1)` draws.
    pub fn with_random_levels(
        features: Vec<f64>,
        feature_dim: usize,
        targets: Vec<f64>,
        rng: &mut SimRng,
    ) -> Result<Self> {
        let us = (0..targets.len()).map(|_| open01(rng)).collect();
        Self::new(features, feature_dim, targets, us)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn quantile_draws(&self) -> &[f64] {
        &self.quantile_draws
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub n_epochs: usize,
    /// Overrides the caller's rng for split, shuffling and dropout.
    pub seed: Option<u64>,
    pub validation_fraction: f64,
    pub early_stop_patience: usize,
    /// Minimum validation improvement that resets the patience counter.
    pub min_delta: f64,
    /// Draw fresh training levels `u` every epoch after the first instead of
    /// reusing the dataset's draws.
    pub resample_levels: bool,
    /// Multiplicative step-size decay applied after every epoch.
    pub lr_decay: f64,
    /// Per-step decay of an exponential moving average of the weights; the
    /// averaged weights are the ones validated and returned. 0 disables.
    /// The effective decay at step `k` is `min(d, (1 + k) / (10 + k))`.
    pub weight_average: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 256,
            n_epochs: 50,
            seed: None,
            validation_fraction: 0.1,
            early_stop_patience: 10,
            min_delta: 0.0,
            lr_decay: 0.9,
            resample_levels: true,
            weight_average: 0.999,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::domain("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::domain("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps > 0.0)
        {
            return Err(Error::domain("invalid Adam decay rates or epsilon"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::domain("lr_decay must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.weight_average) {
            return Err(Error::domain("weight_average must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::domain("validation fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Per-epoch losses in standardized target units.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_train_loss: Vec<f64>,
    pub epoch_val_loss: Vec<f64>,
    pub initial_val_loss: Option<f64>,
    /// Epoch whose weights were kept (0 = initial weights).
    pub best_epoch: usize,
    pub n_train: usize,
    pub n_val: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], g: &[f64], tc: &TrainConfig, base_lr: f64) {
        self.t += 1;
        let c1 = 1.0 - tc.beta1.powi(self.t);
        let c2 = 1.0 - tc.beta2.powi(self.t);
        let lr = base_lr * c2.sqrt() / c1;
        let eps = tc.eps * c2.sqrt();
        for i in 0..params.len() {
            self.m[i] = tc.beta1 * self.m[i] + (1.0 - tc.beta1) * g[i];
            self.v[i] = tc.beta2 * self.v[i] + (1.0 - tc.beta2) * g[i] * g[i];
            params[i] -= lr * self.m[i] / (self.v[i].sqrt() + eps);
        }
    }
}

/// Fresh net trained on `data`.
pub fn train_qnn(
    data: &QuantileDataset,
    qc: &QnnConfig,
    tc: &TrainConfig,
    rng: &mut SimRng,
) -> Result<(QuantileNet, TrainReport)> {
    tc.validate()?;
    let mut local = tc.seed.map(seeded);
    let rng = local.as_mut().unwrap_or(rng);
    let mut net = QuantileNet::new(qc.clone(), data.feature_dim(), rng)?;
    let report = fit(
        &mut net,
        data,
        &TrainConfig {
            seed: None,
            ..tc.clone()
        },
        rng,
    )?;
    Ok((net, report))
}

/// Continues training `net` on `data`. Standardization statistics are fitted
/// only when the net has not been trained before, so warm starts keep the
/// meaning of the existing weights.
pub fn fit(
    net: &mut QuantileNet,
    data: &QuantileDataset,
    tc: &TrainConfig,
    rng: &mut SimRng,
) -> Result<TrainReport> {
    tc.validate()?;
    if data.feature_dim() != net.feature_dim {
        return Err(Error::Interface(format!(
            "dataset feature dim {} does not match net feature dim {}",
            data.feature_dim(),
            net.feature_dim
        )));
    }
    if data.len() < tc.batch_size {
        return Err(Error::domain(format!(
            "{} samples is fewer than batch size {}",
            data.len(),
            tc.batch_size
        )));
    }
    let mut local = tc.seed.map(seeded);
    let rng = local.as_mut().unwrap_or(rng);
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(rng);
    let n_val = ((data.len() as f64) * tc.validation_fraction).floor() as usize;
    let n_val = n_val.min(data.len() - tc.batch_size);
    let (val_idx, train_idx) = idx.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    if !net.trained {
        fit_scalers(net, data, &train_idx)?;
    }
    let mut report = TrainReport {
        n_train: train_idx.len(),
        n_val,
        ..Default::default()
    };
    let mut best_params = net.params.clone();
    let mut best = if n_val > 0 {
        Some(mean_loss(net, data, val_idx))
    } else {
        None
    };
    report.initial_val_loss = best;
    let mut bad_epochs = 0;
    let mut adam = Adam::new(net.params.len());
    let mut grads = vec![0.0; net.params.len()];
    let mut drop_rng = fork(rng);
    let mut lr = tc.learning_rate;
    let averaging = tc.weight_average > 0.0;
    let mut n_steps = 0usize;
    let mut avg = if averaging {
        net.params.clone()
    } else {
        Vec::new()
    };
    for epoch in 1..=tc.n_epochs {
        if epoch > 1 {
            lr *= tc.lr_decay;
        }
        train_idx.shuffle(rng);
        let mut total = 0.0;
        for batch in train_idx.chunks(tc.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let fresh: Option<Vec<f64>> = (tc.resample_levels && epoch > 1)
                .then(|| batch.iter().map(|_| open01(&mut drop_rng)).collect());
            let loss = batch_loss_grad(
                net,
                data,
                batch,
                fresh.as_deref(),
                Some(&mut drop_rng),
                &mut grads,
            );
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            total += loss * batch.len() as f64;
            adam.step(&mut net.params, &grads, tc, lr);
            if averaging {
                let d = tc
                    .weight_average
                    .min((1 + n_steps) as f64 / (10 + n_steps) as f64);
                n_steps += 1;
                avg.iter_mut()
                    .zip(&net.params)
                    .for_each(|(a, p)| *a = d * *a + (1.0 - d) * p);
            }
        }
        if averaging {
            std::mem::swap(&mut net.params, &mut avg);
        }
        report.epoch_train_loss.push(total / train_idx.len() as f64);
        let Some(best_loss) = best else {
            best_params.copy_from_slice(&net.params);
            report.best_epoch = epoch;
            if averaging {
                std::mem::swap(&mut net.params, &mut avg);
            }
            continue;
        };
        let val = mean_loss(net, data, val_idx);
        if averaging {
            std::mem::swap(&mut net.params, &mut avg);
        }
        if !val.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        report.epoch_val_loss.push(val);
        if val < best_loss - tc.min_delta {
            best = Some(val);
            best_params.copy_from_slice(if averaging { &avg } else { &net.params });
            report.best_epoch = epoch;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= tc.early_stop_patience {
                break;
            }
        }
    }
    net.params = best_params;
    net.trained = true;
    Ok(report)
}

fn fit_scalers(net: &mut QuantileNet, data: &QuantileDataset, rows: &[usize]) -> Result<()> {
    let d = net.feature_dim;
    let n = rows.len() as f64;
    let mut sum = vec![0.0; d];
    let mut sq = vec![0.0; d];
    for &i in rows {
        for (j, &x) in data.row(i).iter().enumerate() {
            let v = net.input.transforms[j].apply(x);
            if !v.is_finite() {
                return Err(Error::domain(format!(
                    "feature {j} of row {i} is not finite after its transform"
                )));
            }
            sum[j] += v;
            sq[j] += v * v;
        }
    }
    for j in 0..d {
        let m = sum[j] / n;
        let var = (sq[j] / n - m * m).max(0.0);
        net.input.mean[j] = m;
        net.input.scale[j] = safe_scale(var.sqrt(), m);
    }
    let ys: Vec<f64> = rows.iter().map(|&i| data.targets[i]).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::domain("targets must be finite"));
    }
    let m = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / n;
    net.target = TargetScaler {
        mean: m,
        scale: safe_scale(var.sqrt(), m),
    };
    Ok(())
}

fn gather(
    net: &QuantileNet,
    data: &QuantileDataset,
    rows: &[usize],
    levels: Option<&[f64]>,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = net.feature_dim;
    let mut xn = vec![0.0; rows.len() * d];
    for (k, &i) in rows.iter().enumerate() {
        net.input
            .apply_row(data.row(i), &mut xn[k * d..(k + 1) * d]);
    }
    let us = match levels {
        Some(l) => l.to_vec(),
        None => rows.iter().map(|&i| data.quantile_draws[i]).collect(),
    };
    let tn = rows
        .iter()
        .map(|&i| (data.targets[i] - net.target.mean) / net.target.scale)
        .collect();
    (xn, us, tn)
}

/// Mean pinball loss of a batch; accumulates its gradient into `grads`.
fn batch_loss_grad(
    net: &QuantileNet,
    data: &QuantileDataset,
    rows: &[usize],
    levels: Option<&[f64]>,
    dropout: Option<&mut SimRng>,
    grads: &mut [f64],
) -> f64 {
    let (xn, us, tn) = gather(net, data, rows, levels);
    let (out, cache) = net.forward_normalized(xn, &us, dropout, true);
    let b = rows.len() as f64;
    let mut loss = 0.0;
    let d_out: Vec<f64> = (0..rows.len())
        .map(|k| {
            let z = tn[k] - out[k];
            loss += pinball_loss(us[k], z);
            if z > 0.0 {
                -us[k] / b
            } else {
                (1.0 - us[k]) / b
            }
        })
        .collect();
    net.backward(cache.as_ref().expect("cache requested"), d_out, grads);
    loss / b
}

fn mean_loss(net: &QuantileNet, data: &QuantileDataset, rows: &[usize]) -> f64 {
    let mut total = 0.0;
    for chunk in rows.chunks(4096) {
        let (xn, us, tn) = gather(net, data, chunk, None);
        let (out, _) = net.forward_normalized(xn, &us, None, false);
        total += (0..chunk.len())
            .map(|k| pinball_loss(us[k], tn[k] - out[k]))
            .sum::<f64>();
    }
    total / rows.len() as f64
}

impl QuantileNet {
    /// Mean pinball loss over `data` (standardized units, dropout off) and its
    /// gradient with respect to `params()`.
    pub fn loss_and_gradient(&self, data: &QuantileDataset) -> Result<(f64, Vec<f64>)> {
        if data.feature_dim() != self.feature_dim || data.is_empty() {
            return Err(Error::Interface(
                "dataset does not match net or is empty".into(),
            ));
        }
        let rows: Vec<usize> = (0..data.len()).collect();
        let mut g = vec![0.0; self.params.len()];
        let loss = batch_loss_grad(self, data, &rows, None, None, &mut g);
        Ok((loss, g))
    }

    /// Mean pinball loss over `data` in standardized units, dropout off.
    pub fn mean_pinball_loss(&self, data: &QuantileDataset) -> Result<f64> {
        if data.feature_dim() != self.feature_dim || data.is_empty() {
            return Err(Error::Interface(
                "dataset does not match net or is empty".into(),
            ));
        }
        let rows: Vec<usize> = (0..data.len()).collect();
        Ok(mean_loss(self, data, &rows))
    }
}
