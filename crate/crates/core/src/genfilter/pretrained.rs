//! Maps trained once on simulated histories and reused on any series.

use std::path::Path;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::output::{FilterOutput, FilterWarning, StepDiagnostics};
use super::summary::{apply_summary, sample_moments, SummarySpec};
use crate::qnn::{train_qnn, QnnConfig, QuantileDataset, QuantileNet, TrainConfig, TrainReport};
use crate::rng::{open01, SimRng};
use crate::ssm::StateSpaceModel;
use crate::{Error, Result};

/// A map `x_t̄ | S(y_{1:t̄})` with the summary it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedMap {
    pub net: QuantileNet,
    /// Summary with any padding value resolved.
    pub spec: SummarySpec,
    pub horizon: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapMeta {
    spec: SummarySpec,
    horizon: usize,
}

impl PretrainedMap {
    /// Writes `map.json` and `net.qnn` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let meta = MapMeta {
            spec: self.spec,
            horizon: self.horizon,
        };
        std::fs::write(dir.join("map.json"), serde_json::to_vec_pretty(&meta)?)?;
        self.net.save(dir.join("net.qnn"))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: MapMeta = serde_json::from_slice(&std::fs::read(dir.join("map.json"))?)?;
        let net = QuantileNet::load(dir.join("net.qnn"))?;
        check_dim(&net, &meta.spec)?;
        Ok(Self {
            net,
            spec: meta.spec,
            horizon: meta.horizon,
        })
    }
}

fn check_dim(net: &QuantileNet, spec: &SummarySpec) -> Result<()> {
    if net.feature_dim() != spec.dim() {
        return Err(Error::Interface(format!(
            "summary dimension {} does not match net feature dimension {}",
            spec.dim(),
            net.feature_dim()
        )));
    }
    Ok(())
}

/// Trains one map on `n_train` simulated paths of length `horizon`, with
/// target `x_horizon` and features `S(ỹ_{1:horizon})`. An unresolved
/// lag-window pad is set to the mean of the simulated observations.
pub fn pretrain_summary_map(
    model: &dyn StateSpaceModel,
    spec: &SummarySpec,
    horizon: usize,
    n_train: usize,
    qc: &QnnConfig,
    tc: &TrainConfig,
    rng: &mut SimRng,
) -> Result<(PretrainedMap, TrainReport)> {
    if horizon == 0 || n_train == 0 {
        return Err(Error::domain("horizon and n_train must be positive"));
    }
    let keep = match *spec {
        SummarySpec::LagWindow { lag, .. } => (lag + 1).min(horizon),
        SummarySpec::Moments { .. } => horizon,
    };
    let mut windows = Vec::with_capacity(n_train * keep);
    let mut targets = Vec::with_capacity(n_train);
    let mut ybuf = vec![0.0; horizon];
    let mut ysum = 0.0;
    for _ in 0..n_train {
        let mut x = model.sample_initial(rng);
        for (t, slot) in ybuf.iter_mut().enumerate() {
            x = model.sample_transition(x, rng);
            *slot = model.sample_emission(x, rng);
            if !(x.is_finite() && slot.is_finite()) {
                return Err(Error::Simulation { t: t + 1 });
            }
        }
        ysum += ybuf.iter().sum::<f64>();
        windows.extend_from_slice(&ybuf[horizon - keep..]);
        targets.push(x);
    }
    let resolved = match *spec {
        SummarySpec::LagWindow { lag, pad: None } => SummarySpec::LagWindow {
            lag,
            pad: Some(ysum / (n_train * horizon) as f64),
        },
        other => other,
    };
    let dim = resolved.dim();
    let mut features = Vec::with_capacity(n_train * dim);
    for w in windows.chunks_exact(keep) {
        features.extend(apply_summary(&resolved, w)?);
    }
    drop(windows);
    let data = QuantileDataset::with_random_levels(features, dim, targets, rng)?;
    let (net, report) = train_qnn(&data, qc, tc, rng)?;
    Ok((
        PretrainedMap {
            net,
            spec: resolved,
            horizon,
        },
        report,
    ))
}

/// Draws from `p(x_t | S(y_{1:t}))` for every `t` with a fixed map.
pub fn pretrained_filter_run(
    map: &PretrainedMap,
    y: &[f64],
    n_post: usize,
    rng: &mut SimRng,
) -> Result<FilterOutput> {
    check_dim(&map.net, &map.spec)?;
    if y.is_empty() {
        return Err(Error::domain("observation sequence is empty"));
    }
    let mut out = FilterOutput::with_capacity(y.len());
    for t in 1..=y.len() {
        let start = Instant::now();
        let feat = apply_summary(&map.spec, &y[..t])?;
        let us: Vec<f64> = (0..n_post).map(|_| open01(rng)).collect();
        out.draws.push(map.net.quantiles(&feat, &us)?);
        out.diagnostics.push(StepDiagnostics {
            t,
            wall_time_s: start.elapsed().as_secs_f64(),
            ..Default::default()
        });
    }
    Ok(out)
}

/// Uniform prior over summary space for the moment recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentPrior {
    pub mean_lo: f64,
    pub mean_hi: f64,
    pub var_lo: f64,
    pub var_hi: f64,
}

impl MomentPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_lo <= self.mean_hi && 0.0 <= self.var_lo && self.var_lo <= self.var_hi) {
            return Err(Error::domain(
                "moment prior needs lo ≤ hi and non-negative variances",
            ));
        }
        Ok(())
    }

    pub fn contains(&self, m: f64, v: f64) -> bool {
        (self.mean_lo..=self.mean_hi).contains(&m) && (self.var_lo..=self.var_hi).contains(&v)
    }

    fn sample(&self, rng: &mut SimRng) -> (f64, f64) {
        let m = self.mean_lo + (self.mean_hi - self.mean_lo) * open01(rng);
        let v = self.var_lo + (self.var_hi - self.var_lo) * open01(rng);
        (m, v)
    }
}

/// A map `x_t | (y_t, m_{t-1}, v_{t-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMap {
    pub net: QuantileNet,
    pub prior: MomentPrior,
}

/// Trains on quadruples `(ỹ_t, m, v, u)` with `(m, v)` from `prior`,
/// `x_{t-1} ~ N(m, v)`, `x_t` from the transition and `ỹ_t` from the
/// emission.
pub fn pretrain_moment_map(
    model: &dyn StateSpaceModel,
    prior: &MomentPrior,
    n_train: usize,
    qc: &QnnConfig,
    tc: &TrainConfig,
    rng: &mut SimRng,
) -> Result<(MomentMap, TrainReport)> {
    prior.validate()?;
    let mut features = Vec::with_capacity(3 * n_train);
    let mut targets = Vec::with_capacity(n_train);
    for _ in 0..n_train {
        let (m, v) = prior.sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        let prev = m + v.sqrt() * z;
        let x = model.sample_transition(prev, rng);
        let yt = model.sample_emission(x, rng);
        if !(x.is_finite() && yt.is_finite()) {
            return Err(Error::Simulation { t: 1 });
        }
        features.extend([yt, m, v]);
        targets.push(x);
    }
    let data = QuantileDataset::with_random_levels(features, 3, targets, rng)?;
    let (net, report) = train_qnn(&data, qc, tc, rng)?;
    Ok((MomentMap { net, prior: *prior }, report))
}

/// Recursive filter feeding each step's posterior sample mean and variance
/// into the next step. Moments outside the training prior produce an
/// extrapolation warning.
pub fn moment_summary_filter(
    map: &MomentMap,
    y: &[f64],
    m0: f64,
    v0: f64,
    n_post: usize,
    rng: &mut SimRng,
) -> Result<FilterOutput> {
    if map.net.feature_dim() != 3 {
        return Err(Error::Interface("moment map must take (y, m, v)".into()));
    }
    if n_post < 2 {
        return Err(Error::domain(
            "moment recursion needs at least two draws per step",
        ));
    }
    let mut out = FilterOutput::with_capacity(y.len());
    let (mut m, mut v) = (m0, v0);
    for (i, &yt) in y.iter().enumerate() {
        let t = i + 1;
        let start = Instant::now();
        if !map.prior.contains(m, v) {
            let message = format!(
                "moments (m = {m:.4}, v = {v:.4}) outside the training prior; extrapolating"
            );
            log::warn!("step {t}: {message}");
            out.warnings.push(FilterWarning { t, message });
        }
        let us: Vec<f64> = (0..n_post).map(|_| open01(rng)).collect();
        let draws = map.net.quantiles(&[yt, m, v], &us)?;
        let mom = sample_moments(&draws, 2)?;
        m = mom[0];
        v = mom[1];
        out.draws.push(draws);
        out.diagnostics.push(StepDiagnostics {
            t,
            wall_time_s: start.elapsed().as_secs_f64(),
            ..Default::default()
        });
    }
    Ok(out)
}
