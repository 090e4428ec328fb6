//! Per-step retrained generative filter.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::output::{FilterOutput, StepDiagnostics};
use crate::qnn::train::fit;
use crate::qnn::{QnnConfig, QuantileDataset, QuantileNet, TrainConfig};
use crate::rng::{open01, SimRng};
use crate::ssm::StateSpaceModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenFilterConfig {
    /// Synthetic pairs per step; also the size of the recycled posterior cloud.
    pub n_train: usize,
    /// Draws reported per step (taken from the recycled cloud when equal to
    /// `n_train`, drawn separately otherwise).
    pub n_post: usize,
    pub qnn: QnnConfig,
    /// Training budget at `t = 1` (and at every step without warm start).
    pub first_step: TrainConfig,
    /// Training budget at warm-started steps.
    pub later_steps: TrainConfig,
    pub warm_start: bool,
    /// Skip the observation update: posterior = predictive. Used to check
    /// prior propagation.
    pub skip_update: bool,
}

impl Default for GenFilterConfig {
    fn default() -> Self {
        Self {
            n_train: 1000,
            n_post: 1000,
            qnn: QnnConfig::with_width(32),
            first_step: TrainConfig {
                batch_size: 64,
                ..TrainConfig::default()
            },
            later_steps: TrainConfig {
                batch_size: 64,
                n_epochs: 20,
                early_stop_patience: 5,
                lr_decay: 1.0,
                ..TrainConfig::default()
            },
            warm_start: true,
            skip_update: false,
        }
    }
}

/// Sequential generative filter on observations `y_{1:T}`.
///
/// At each step the previous posterior cloud is pushed through the
/// transition, pseudo-observations are simulated, a map `x_t | ỹ_t` is
/// trained on the pairs and evaluated at the real `y_t`.
pub fn gen_filter_run(
    model: &dyn StateSpaceModel,
    y: &[f64],
    cfg: &GenFilterConfig,
    rng: &mut SimRng,
) -> Result<FilterOutput> {
    if y.is_empty() {
        return Err(Error::domain("observation sequence is empty"));
    }
    if cfg.n_train < cfg.first_step.batch_size.max(cfg.later_steps.batch_size) || cfg.n_post == 0 {
        return Err(Error::domain(
            "n_train must cover the batch size and n_post must be positive",
        ));
    }
    let n = cfg.n_train;
    let mut cloud: Vec<f64> = (0..n).map(|_| model.sample_initial(rng)).collect();
    let mut out = FilterOutput::with_capacity(y.len());
    let mut net: Option<QuantileNet> = None;
    for (i, &yt) in y.iter().enumerate() {
        let t = i + 1;
        let start = Instant::now();
        let pred: Vec<f64> = cloud
            .iter()
            .map(|&x| model.sample_transition(x, rng))
            .collect();
        if pred.iter().any(|x| !x.is_finite()) {
            return Err(Error::Simulation { t });
        }
        if cfg.skip_update {
            out.draws.push(report_draws(&pred, cfg.n_post, rng, |k, r| {
                let x = cloud[k % n];
                model.sample_transition(x, r)
            }));
            out.diagnostics.push(StepDiagnostics {
                t,
                wall_time_s: start.elapsed().as_secs_f64(),
                ..Default::default()
            });
            cloud = pred;
            continue;
        }
        let ysim: Vec<f64> = pred
            .iter()
            .map(|&x| model.sample_emission(x, rng))
            .collect();
        if ysim.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation { t });
        }
        let data = QuantileDataset::with_random_levels(ysim, 1, pred, rng)?;
        let warm = cfg.warm_start && net.is_some();
        let tc = if warm {
            &cfg.later_steps
        } else {
            &cfg.first_step
        };
        let mut current = match net.take() {
            Some(prev) if cfg.warm_start => prev,
            _ => QuantileNet::new(cfg.qnn.clone(), 1, rng)?,
        };
        let rep = fit(&mut current, &data, tc, rng).map_err(|e| e.at_step(t))?;
        let us: Vec<f64> = (0..n).map(|_| open01(rng)).collect();
        let post = current.quantiles(&[yt], &us)?;
        let reported = if cfg.n_post == n {
            post.clone()
        } else {
            let us: Vec<f64> = (0..cfg.n_post).map(|_| open01(rng)).collect();
            current.quantiles(&[yt], &us)?
        };
        out.draws.push(reported);
        out.diagnostics.push(StepDiagnostics {
            t,
            train_loss: rep.epoch_train_loss.last().copied(),
            val_loss: rep
                .epoch_val_loss
                .iter()
                .copied()
                .reduce(f64::min)
                .or(rep.initial_val_loss),
            epochs: rep.epoch_train_loss.len(),
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        cloud = post;
        net = Some(current);
    }
    Ok(out)
}

fn report_draws(
    cloud: &[f64],
    n_post: usize,
    rng: &mut SimRng,
    mut extra: impl FnMut(usize, &mut SimRng) -> f64,
) -> Vec<f64> {
    if n_post == cloud.len() {
        cloud.to_vec()
    } else {
        (0..n_post).map(|k| extra(k, rng)).collect()
    }
}
