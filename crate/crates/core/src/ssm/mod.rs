//! State-space models defined as pure samplers, trajectory simulation and
//! the rare-event filter.

pub mod io;
pub mod models;
pub mod prior;
pub mod stable;

use serde::{Deserialize, Serialize};

pub use models::{LGParams, LinearGaussian, SVParams, StochasticVolatility};
pub use prior::{Prior, PriorSet};
pub use stable::{sample_stable, stable_cdf, stable_quantile, Parameterization, StableParams};

use crate::rng::SimRng;
use crate::{Error, Result};

/// A scalar state-space model with fixed parameters.
///
/// The emission is split into a noise draw and a deterministic map so that
/// simulation can inspect the noise (see [`RareEventFilter`]). Only tractable
/// models provide [`log_likelihood`](Self::log_likelihood).
pub trait StateSpaceModel: Send + Sync {
    fn sample_initial(&self, rng: &mut SimRng) -> f64;
    fn sample_transition(&self, x: f64, rng: &mut SimRng) -> f64;
    fn sample_noise(&self, rng: &mut SimRng) -> f64;
    fn emit(&self, x: f64, noise: f64) -> f64;

    fn sample_emission(&self, x: f64, rng: &mut SimRng) -> f64 {
        let e = self.sample_noise(rng);
        self.emit(x, e)
    }

    /// `log p(y | x)` when the emission density is available.
    fn log_likelihood(&self, _x: f64, _y: f64) -> Option<f64> {
        None
    }

    /// Quantile of the emission noise law at level `p`.
    fn noise_quantile(&self, p: f64) -> Result<f64>;

    fn param_vector(&self) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `x_0, …, x_T`.
    pub states: Vec<f64>,
    /// `y_1, …, y_T`.
    pub observations: Vec<f64>,
    /// Emission noise draws `ε_1, …, ε_T`.
    pub noise: Vec<f64>,
    pub params: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.observations.len()
    }

    /// States `x_1, …, x_T` aligned with the observations.
    pub fn filtered_states(&self) -> &[f64] {
        &self.states[1..]
    }
}

/// Regenerates whole trajectories whose emission noise leaves the central
/// `[Q(p), Q(1-p)]` band of the noise law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RareEventFilter {
    pub threshold: f64,
    pub lower: f64,
    pub upper: f64,
}

impl RareEventFilter {
    /// Computes the band once from the model's noise quantiles.
    pub fn for_model(model: &dyn StateSpaceModel, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 0.5) {
            return Err(Error::domain(format!(
                "tail threshold {threshold} not in (0, 0.5)"
            )));
        }
        Ok(Self {
            threshold,
            lower: model.noise_quantile(threshold)?,
            upper: model.noise_quantile(1.0 - threshold)?,
        })
    }

    /// Uses a band cached from an earlier computation.
    pub fn from_band(threshold: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(lower < upper) {
            return Err(Error::domain("rare-event band must satisfy lower < upper"));
        }
        Ok(Self {
            threshold,
            lower,
            upper,
        })
    }

    pub fn accepts(&self, noise: f64) -> bool {
        noise >= self.lower && noise <= self.upper
    }
}

pub fn simulate_trajectory(
    model: &dyn StateSpaceModel,
    horizon: usize,
    rng: &mut SimRng,
) -> Result<Trajectory> {
    simulate_checked(model, horizon, rng, None)
        .map(|o| o.expect("unfiltered simulation always succeeds"))
}

/// Simulates one path; returns `Ok(None)` if the filter rejects it.
fn simulate_checked(
    model: &dyn StateSpaceModel,
    horizon: usize,
    rng: &mut SimRng,
    filter: Option<&RareEventFilter>,
) -> Result<Option<Trajectory>> {
    if horizon == 0 {
        return Err(Error::domain("horizon must be at least 1"));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut observations = Vec::with_capacity(horizon);
    let mut noise = Vec::with_capacity(horizon);
    let mut x = model.sample_initial(rng);
    if !x.is_finite() {
        return Err(Error::Simulation { t: 0 });
    }
    states.push(x);
    let mut rejected = false;
    for t in 1..=horizon {
        x = model.sample_transition(x, rng);
        let e = model.sample_noise(rng);
        let y = model.emit(x, e);
        if !(x.is_finite() && y.is_finite()) {
            if filter.is_some() {
                rejected = true;
            } else {
                return Err(Error::Simulation { t });
            }
        }
        if let Some(f) = filter {
            rejected |= !f.accepts(e);
        }
        states.push(x);
        observations.push(y);
        noise.push(e);
    }
    if rejected {
        return Ok(None);
    }
    Ok(Some(Trajectory {
        states,
        observations,
        noise,
        params: model.param_vector(),
    }))
}

/// Simulates `n` trajectories, regenerating any path rejected by `filter`.
pub fn simulate_batch(
    model: &dyn StateSpaceModel,
    n: usize,
    horizon: usize,
    rng: &mut SimRng,
    filter: Option<&RareEventFilter>,
) -> Result<Vec<Trajectory>> {
    if n == 0 {
        return Err(Error::domain("replicate count must be at least 1"));
    }
    let limit = 1000 * n;
    let mut out = Vec::with_capacity(n);
    let mut consecutive = 0usize;
    while out.len() < n {
        match simulate_checked(model, horizon, rng, filter)? {
            Some(tr) => {
                consecutive = 0;
                out.push(tr);
            }
            None => {
                consecutive += 1;
                if consecutive > limit {
                    return Err(Error::FilterInfeasible {
                        rejections: consecutive,
                    });
                }
            }
        }
    }
    Ok(out)
}
