use serde::{Deserialize, Serialize};

use super::particles::{systematic_resample, ParticleSet};
use crate::rng::SimRng;
use crate::ssm::StateSpaceModel;
use crate::util::log_add_exp;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbcKernel {
    /// `1{d < ε}`
    Uniform,
    /// `exp(-d² / (2ε²))`, unnormalized.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbcConfig {
    pub kernel: AbcKernel,
    pub epsilon: f64,
    pub n_particles: usize,
    pub ess_threshold: f64,
    pub weight_floor: f64,
}

impl AbcConfig {
    /// Kernel and tolerance with `N/2` resampling trigger and a `1e-10` floor.
    pub fn new(kernel: AbcKernel, epsilon: f64, n_particles: usize) -> Result<Self> {
        let cfg = Self {
            kernel,
            epsilon,
            n_particles,
            ess_threshold: n_particles as f64 / 2.0,
            weight_floor: 1e-10,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::domain("ABC tolerance must be positive"));
        }
        if !(self.weight_floor >= 0.0) {
            return Err(Error::domain("ABC weight floor must be non-negative"));
        }
        if self.n_particles == 0 {
            return Err(Error::domain("particle count must be positive"));
        }
        Ok(())
    }

    /// `log K_ε(d)` for the absolute distance `d`.
    pub fn log_kernel(&self, d: f64) -> f64 {
        match self.kernel {
            AbcKernel::Uniform => {
                if d < self.epsilon {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            AbcKernel::Gaussian => -0.5 * (d / self.epsilon).powi(2),
        }
    }
}

/// Emitted when no simulated pseudo-observation receives kernel mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseWarning {
    pub t: usize,
    pub ess: f64,
    pub collapsed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcRun {
    pub sets: Vec<ParticleSet>,
    pub warnings: Vec<CollapseWarning>,
}

impl AbcRun {
    /// Warnings as JSON lines.
    pub fn write_warnings<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for warning in &self.warnings {
            serde_json::to_writer(&mut w, warning)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// ABC particle filter with streaming output; returns collapse warnings.
pub fn abc_pf_visit<F>(
    model: &dyn StateSpaceModel,
    y: &[f64],
    cfg: &AbcConfig,
    rng: &mut SimRng,
    mut visit: F,
) -> Result<Vec<CollapseWarning>>
where
    F: FnMut(usize, &ParticleSet) -> Result<()>,
{
    cfg.validate()?;
    let n = cfg.n_particles;
    let log_floor = cfg.weight_floor.ln();
    let mut warnings = Vec::new();
    let mut ps = ParticleSet::uniform((0..n).map(|_| model.sample_initial(rng)).collect());
    for (i, &yt) in y.iter().enumerate() {
        let t = i + 1;
        let mut any_mass = false;
        for (x, lw) in ps.particles.iter_mut().zip(ps.log_weights.iter_mut()) {
            *x = model.sample_transition(*x, rng);
            let pseudo = model.sample_emission(*x, rng);
            let lk = cfg.log_kernel((pseudo - yt).abs());
            let kernel_part = *lw + lk;
            any_mass |= kernel_part > f64::NEG_INFINITY;
            *lw = log_add_exp(kernel_part, log_floor);
        }
        if !any_mass {
            ps.log_weights.iter_mut().for_each(|lw| *lw = 0.0);
        }
        ps.normalize().map_err(|_| Error::DegenerateWeights { t })?;
        let ess = ps.ess()?;
        if !any_mass {
            warnings.push(CollapseWarning {
                t,
                ess,
                collapsed: true,
            });
        }
        visit(t, &ps)?;
        if ess < cfg.ess_threshold {
            ps = systematic_resample(&ps, rng)?;
        }
    }
    Ok(warnings)
}

pub fn abc_pf_run(
    model: &dyn StateSpaceModel,
    y: &[f64],
    cfg: &AbcConfig,
    rng: &mut SimRng,
) -> Result<AbcRun> {
    let mut sets = Vec::with_capacity(y.len());
    let warnings = abc_pf_visit(model, y, cfg, rng, |_, ps| {
        sets.push(ps.clone());
        Ok(())
    })?;
    Ok(AbcRun { sets, warnings })
}
