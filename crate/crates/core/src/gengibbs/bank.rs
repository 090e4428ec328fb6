//! Training and persistence of the filter, smoother and parameter maps.

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{theta_transform, GibbsModel, TargetLink};
use crate::qnn::{train_qnn, FeatureTransform, QnnConfig, QuantileDataset, QuantileNet, TrainConfig};
use crate::rng::{stream, SimRng};
use crate::ssm::PriorSet;
use crate::util::{quantile_sorted, sorted};
use crate::{Error, Result};

pub const BANK_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const PILOT_PATHS: usize = 1000;
const MAX_PRIOR_REJECTIONS: usize = 100_000;

/// Everything needed to rebuild a bank bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankSpec {
    pub model: GibbsModel,
    pub priors: PriorSet,
    /// Observation summary `S_y(y_{1:t}) = (y_{t-lag}, …, y_t)`, followed by
    /// the fraction of those positions that lie inside the sample.
    pub lag: usize,
    /// Value used before the sample starts; `None` is resolved to the median
    /// of a pilot batch of simulated observations.
    pub pad: Option<f64>,
    pub horizon: usize,
    pub n_train: usize,
    pub qnn: QnnConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

impl BankSpec {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.model.check_priors(&self.priors)?;
        self.qnn.validate()?;
        self.train.validate()?;
        if self.horizon < 2 || self.n_train == 0 {
            return Err(Error::domain("bank needs horizon >= 2 and n_train > 0"));
        }
        if matches!(self.pad, Some(p) if !p.is_finite()) {
            return Err(Error::domain("padding value must be finite"));
        }
        Ok(())
    }

    pub fn window_dim(&self) -> usize {
        self.lag + 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapRole {
    /// `x_T | S_y(y_{1:T}), θ`.
    Filter,
    /// `x_t | x_{t+1}, S_y(y_{1:t}), θ`.
    Smoother,
    /// `θ_b | θ_{-b}, S_θ(x_{0:T}, y_{1:T})`.
    Param { block: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapInfo {
    pub name: String,
    pub role: MapRole,
    pub file: String,
    pub feature_dim: usize,
    pub link: TargetLink,
    pub n_train: usize,
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
    pub train_seconds: f64,
    pub sha256: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    spec: BankSpec,
    maps: Vec<MapInfo>,
}

/// Trained maps plus the `BankSpec` they were trained under (with the
/// padding value resolved).
#[derive(Debug, Clone, PartialEq)]
pub struct MapBank {
    pub spec: BankSpec,
    pub maps: Vec<MapInfo>,
    nets: Vec<QuantileNet>,
}

impl MapBank {
    pub fn model(&self) -> &GibbsModel {
        &self.spec.model
    }

    pub fn pad(&self) -> f64 {
        self.spec.pad.unwrap_or(0.0)
    }

    fn find(&self, role: MapRole) -> Result<(&MapInfo, &QuantileNet)> {
        self.maps
            .iter()
            .zip(&self.nets)
            .find(|(m, _)| m.role == role)
            .ok_or_else(|| Error::Interface(format!("bank has no {role:?} map")))
    }

    pub fn filter_map(&self) -> Result<&QuantileNet> {
        Ok(self.find(MapRole::Filter)?.1)
    }

    pub fn smoother_map(&self) -> Result<&QuantileNet> {
        Ok(self.find(MapRole::Smoother)?.1)
    }

    /// Map and link of parameter block `b`.
    pub fn param_map(&self, b: usize) -> Result<(&QuantileNet, TargetLink)> {
        let (info, net) = self.find(MapRole::Param { block: b })?;
        Ok((net, info.link))
    }

    /// Expected feature dimension of each role, from the `BankSpec`.
    fn expected_dim(&self, role: MapRole) -> usize {
        let nb = self.spec.model.n_blocks();
        match role {
            MapRole::Filter => self.spec.window_dim() + nb,
            MapRole::Smoother => 1 + self.spec.window_dim() + nb,
            MapRole::Param { block } => {
                self.spec.model.conditioning_blocks(block).len()
                    + self.spec.model.summary_dim(block)
            }
        }
    }

    fn check_consistency(&self) -> Result<()> {
        let mut roles = vec![MapRole::Filter, MapRole::Smoother];
        roles.extend(
            self.spec
                .model
                .learned_blocks()
                .into_iter()
                .map(|block| MapRole::Param { block }),
        );
        for role in roles {
            let (info, net) = self.find(role)?;
            let want = self.expected_dim(role);
            if info.feature_dim != want || net.feature_dim() != want {
                return Err(Error::Interface(format!(
                    "map `{}` has feature dimension {} (net {}), expected {want}",
                    info.name,
                    info.feature_dim,
                    net.feature_dim()
                )));
            }
        }
        Ok(())
    }

    /// Writes `manifest.json` and one checkpoint per map into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut maps = self.maps.clone();
        for (info, net) in maps.iter_mut().zip(&self.nets) {
            let bytes = net.to_bytes()?;
            info.sha256 = crate::qnn::checkpoint::sha256_hex(&bytes);
            std::fs::write(dir.join(&info.file), bytes)?;
        }
        let manifest = Manifest {
            version: BANK_VERSION,
            spec: self.spec.clone(),
            maps,
        };
        std::fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let raw: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST))?)?;
        let version = raw.get("version").and_then(|v| v.as_u64());
        if version != Some(BANK_VERSION as u64) {
            return Err(Error::Version(format!(
                "map bank manifest version {version:?}, this build reads {BANK_VERSION}"
            )));
        }
        let manifest: Manifest = serde_json::from_value(raw)?;
        manifest.spec.validate()?;
        let mut nets = Vec::with_capacity(manifest.maps.len());
        for info in &manifest.maps {
            let bytes = std::fs::read(dir.join(&info.file))?;
            if crate::qnn::checkpoint::sha256_hex(&bytes) != info.sha256 {
                return Err(Error::Checksum(info.file.clone()));
            }
            nets.push(QuantileNet::from_bytes(&bytes)?);
        }
        let bank = Self {
            spec: manifest.spec,
            maps: manifest.maps,
            nets,
        };
        bank.check_consistency()?;
        Ok(bank)
    }
}

/// Appends `(y_{t-lag}, …, y_t)` (1-based `t`, `y[0] = y_1`), padding
/// positions before the sample with `pad`, then the observed fraction
/// `min(t, lag+1)/(lag+1)`. A pad equal to a plausible observation is
/// otherwise indistinguishable from data at the start of the sample.
pub(crate) fn push_window(out: &mut Vec<f64>, y: &[f64], t: usize, lag: usize, pad: f64) {
    for s in t as isize - lag as isize..=t as isize {
        out.push(if s >= 1 { y[s as usize - 1] } else { pad });
    }
    out.push(t.min(lag + 1) as f64 / (lag + 1) as f64);
}

fn draw_admitted(model: &GibbsModel, priors: &PriorSet, rng: &mut SimRng) -> Result<Vec<f64>> {
    for _ in 0..MAX_PRIOR_REJECTIONS {
        let theta = priors.sample(rng);
        if model.admits(&theta) {
            return Ok(theta);
        }
    }
    Err(Error::domain(
        "prior puts (almost) no mass on the admitted parameter region",
    ))
}

fn pilot_median(spec: &BankSpec) -> Result<f64> {
    let mut rng = stream(spec.seed, u64::MAX);
    let mut ys = Vec::with_capacity(PILOT_PATHS * spec.horizon);
    for _ in 0..PILOT_PATHS {
        let theta = draw_admitted(&spec.model, &spec.priors, &mut rng)?;
        ys.extend(spec.model.simulate(&theta, spec.horizon, &mut rng)?.1);
    }
    Ok(quantile_sorted(&sorted(&ys), 0.5))
}

struct PendingMap {
    name: String,
    role: MapRole,
    link: TargetLink,
    transforms: Vec<FeatureTransform>,
    dim: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
}

/// Simulates `n_train` joint draws from prior × model and trains the
/// filter, smoother and parameter maps on them.
///
/// Each path contributes one row to every map: the filter map sees
/// `(S_y(y_{1:T}), θ) → x_T`, the smoother map `(x_{t+1}, S_y(y_{1:t}), θ) →
/// x_t` at one random `t ∈ {0, …, T-1}` (half the time restricted to
/// `t ≤ lag`; past the padded start every `t` has the same conditional),
/// and the map of block `b` `(θ_{-b}, S_θ) → θ_b` on the block's link scale. Maps are trained one
/// after another on independent random streams, so training them in
/// parallel elsewhere gives the same nets.
pub fn pretrain_gengibbs_maps(spec: &BankSpec) -> Result<MapBank> {
    spec.validate()?;
    let mut spec = spec.clone();
    if spec.pad.is_none() {
        spec.pad = Some(pilot_median(&spec)?);
    }
    let pad = spec.pad.unwrap_or(0.0);
    let model = spec.model;
    let nb = model.n_blocks();
    let (n, horizon, lag) = (spec.n_train, spec.horizon, spec.lag);
    let wdim = spec.window_dim();

    let theta_tf: Vec<FeatureTransform> = spec
        .priors
        .blocks
        .iter()
        .map(|(_, p)| theta_transform(p))
        .collect();
    let mut window_tf = vec![model.obs_transform(); wdim - 1];
    window_tf.push(FeatureTransform::Identity);
    let mut pending = Vec::new();
    let filter_tf = [window_tf.clone(), theta_tf.clone()].concat();
    pending.push(PendingMap {
        name: "filter".into(),
        role: MapRole::Filter,
        link: TargetLink::Identity,
        dim: filter_tf.len(),
        transforms: filter_tf,
        features: Vec::with_capacity(n * (wdim + nb)),
        targets: Vec::with_capacity(n),
    });
    let smoother_tf = [vec![FeatureTransform::Identity], window_tf, theta_tf.clone()].concat();
    pending.push(PendingMap {
        name: "smoother".into(),
        role: MapRole::Smoother,
        link: TargetLink::Identity,
        dim: smoother_tf.len(),
        transforms: smoother_tf,
        features: Vec::with_capacity(n * (1 + wdim + nb)),
        targets: Vec::with_capacity(n),
    });
    let learned = model.learned_blocks();
    for &b in &learned {
        let mut tf: Vec<FeatureTransform> = model
            .conditioning_blocks(b)
            .iter()
            .map(|&j| theta_tf[j])
            .collect();
        tf.extend(model.summary_transforms(b));
        let dim = tf.len();
        pending.push(PendingMap {
            name: format!("param_{}", model.block_names()[b]),
            role: MapRole::Param { block: b },
            link: TargetLink::for_prior(&spec.priors.blocks[b].1),
            transforms: tf,
            dim,
            features: Vec::with_capacity(n * dim),
            targets: Vec::with_capacity(n),
        });
    }

    let started = Instant::now();
    let mut rng = stream(spec.seed, 0);
    for _ in 0..n {
        let theta = draw_admitted(&model, &spec.priors, &mut rng)?;
        let (x, y) = model.simulate(&theta, horizon, &mut rng)?;
        // Half of the smoother rows come from the start of the sample, where
        // the window is partly padding and each t has its own conditional.
        let t_hi = if rng.random_bool(0.5) { (lag + 1).min(horizon) } else { horizon };
        let t = rng.random_range(0..t_hi);
        for pm in pending.iter_mut() {
            match pm.role {
                MapRole::Filter => {
                    push_window(&mut pm.features, &y, horizon, lag, pad);
                    pm.features.extend_from_slice(&theta);
                    pm.targets.push(x[horizon]);
                }
                MapRole::Smoother => {
                    pm.features.push(x[t + 1]);
                    push_window(&mut pm.features, &y, t, lag, pad);
                    pm.features.extend_from_slice(&theta);
                    pm.targets.push(x[t]);
                }
                MapRole::Param { block } => {
                    pm.features
                        .extend(model.conditioning_blocks(block).iter().map(|&j| theta[j]));
                    pm.features.extend(model.block_summary(block, &x, &y)?);
                    pm.targets.push(pm.link.forward(theta[block]));
                }
            }
        }
    }
    log::info!(
        "simulated {n} training paths of length {horizon} in {:.1}s",
        started.elapsed().as_secs_f64()
    );

    let mut tc = spec.train.clone();
    tc.seed = None;
    let mut maps = Vec::with_capacity(pending.len());
    let mut nets = Vec::with_capacity(pending.len());
    for (k, pm) in pending.into_iter().enumerate() {
        let started = Instant::now();
        let mut rng = stream(spec.seed, 1 + k as u64);
        let qc = spec.qnn.clone().with_transforms(pm.transforms);
        let name = pm.name;
        let wrap = |e: Error| Error::MapTraining {
            map: name.clone(),
            source: Box::new(e),
        };
        let data = QuantileDataset::with_random_levels(pm.features, pm.dim, pm.targets, &mut rng)
            .map_err(wrap)?;
        let (net, report) = train_qnn(&data, &qc, &tc, &mut rng).map_err(wrap)?;
        drop(data);
        let best_val_loss = if report.best_epoch == 0 {
            report.initial_val_loss
        } else {
            report.epoch_val_loss.get(report.best_epoch - 1).copied()
        };
        let secs = started.elapsed().as_secs_f64();
        log::info!(
            "trained map `{name}`: best epoch {} of {}, validation loss {best_val_loss:?}, {secs:.1}s",
            report.best_epoch,
            report.epoch_val_loss.len()
        );
        maps.push(MapInfo {
            file: format!("{name}.qnn"),
            name,
            role: pm.role,
            feature_dim: pm.dim,
            link: pm.link,
            n_train: n,
            best_epoch: report.best_epoch,
            best_val_loss,
            train_seconds: secs,
            sha256: String::new(),
        });
        nets.push(net);
    }
    let bank = MapBank { spec, maps, nets };
    bank.check_consistency()?;
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_pad_before_the_sample() {
        let y = [1.0, 2.0, 3.0];
        let mut out = Vec::new();
        push_window(&mut out, &y, 0, 2, -9.0);
        push_window(&mut out, &y, 2, 2, -9.0);
        push_window(&mut out, &y, 3, 1, -9.0);
        let want = [
            [-9.0, -9.0, -9.0, 0.0],
            [-9.0, 1.0, 2.0, 2.0 / 3.0],
        ];
        assert_eq!(out[..8], want.concat()[..]);
        assert_eq!(out[8..], [2.0, 3.0, 1.0]);
    }
}
