//! Concrete scalar state-space models.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::stable::{sample_stable_unchecked, stable_quantile, StableParams};
use super::StateSpaceModel;
use crate::rng::SimRng;
use crate::util::norm_ppf;
use crate::{Error, Result};

/// Linear Gaussian AR(1) parameters: `x_t = φ x_{t-1} + σ_x η_t`,
/// `y_t = x_t + σ_y ε_t`.
///
/// Zero noise scales are accepted so that deterministic limits can be
/// simulated; the corresponding precision is then infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LGParams {
    pub phi: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl LGParams {
    pub fn new(phi: f64, sigma_x: f64, sigma_y: f64) -> Result<Self> {
        let p = Self {
            phi,
            sigma_x,
            sigma_y,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_precisions(phi: f64, psi_x: f64, psi_y: f64) -> Result<Self> {
        if !(psi_x > 0.0 && psi_y > 0.0) {
            return Err(Error::domain("precisions must be positive"));
        }
        Self::new(phi, psi_x.powf(-0.5), psi_y.powf(-0.5))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.phi.is_finite() {
            return Err(Error::domain("phi must be finite"));
        }
        for (name, s) in [("sigma_x", self.sigma_x), ("sigma_y", self.sigma_y)] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::domain(format!(
                    "{name} = {s} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }

    pub fn psi_x(&self) -> f64 {
        1.0 / (self.sigma_x * self.sigma_x)
    }

    pub fn psi_y(&self) -> f64 {
        1.0 / (self.sigma_y * self.sigma_y)
    }

    /// Stationary state variance `σ_x² / (1 - φ²)`.
    pub fn stationary_var(&self) -> Result<f64> {
        if self.phi.abs() >= 1.0 {
            return Err(Error::domain(format!(
                "|phi| = {} is not stationary",
                self.phi.abs()
            )));
        }
        Ok(self.sigma_x * self.sigma_x / (1.0 - self.phi * self.phi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussian {
    pub params: LGParams,
    pub init_mean: f64,
    pub init_var: f64,
}

impl LinearGaussian {
    /// Model started from its stationary law.
    pub fn stationary(params: LGParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            init_mean: 0.0,
            init_var: params.stationary_var()?,
        })
    }

    pub fn with_initial(params: LGParams, init_mean: f64, init_var: f64) -> Result<Self> {
        params.validate()?;
        if !(init_var >= 0.0 && init_var.is_finite() && init_mean.is_finite()) {
            return Err(Error::domain(
                "initial law must have finite mean and variance >= 0",
            ));
        }
        Ok(Self {
            params,
            init_mean,
            init_var,
        })
    }
}

impl StateSpaceModel for LinearGaussian {
    fn sample_initial(&self, rng: &mut SimRng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.init_mean + self.init_var.sqrt() * z
    }

    fn sample_transition(&self, x: f64, rng: &mut SimRng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.params.phi * x + self.params.sigma_x * z
    }

    fn sample_noise(&self, rng: &mut SimRng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn emit(&self, x: f64, noise: f64) -> f64 {
        x + self.params.sigma_y * noise
    }

    fn log_likelihood(&self, x: f64, y: f64) -> Option<f64> {
        let s = self.params.sigma_y;
        if s <= 0.0 {
            return None;
        }
        let z = (y - x) / s;
        Some(-0.5 * z * z - s.ln() - 0.5 * (2.0 * PI).ln())
    }

    fn noise_quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("quantile level {p} not in (0, 1)")));
        }
        Ok(norm_ppf(p))
    }

    fn param_vector(&self) -> Vec<f64> {
        vec![self.params.phi, self.params.sigma_x, self.params.sigma_y]
    }
}

/// Stochastic volatility: `x_t = μ + φ(x_{t-1} - μ) + σ_η η_t`,
/// `y_t = exp(x_t / 2) ε_t`, with α-stable `ε_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SVParams {
    pub mu: f64,
    pub phi: f64,
    pub sigma_eta: f64,
    pub noise: StableParams,
}

impl SVParams {
    pub fn new(mu: f64, phi: f64, sigma_eta: f64, noise: StableParams) -> Result<Self> {
        let p = Self {
            mu,
            phi,
            sigma_eta,
            noise,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi.abs() < 1.0) {
            return Err(Error::domain(format!(
                "SV phi = {} must satisfy |phi| < 1",
                self.phi
            )));
        }
        if !(self.sigma_eta > 0.0 && self.sigma_eta.is_finite()) {
            return Err(Error::domain("SV sigma_eta must be positive"));
        }
        if !self.mu.is_finite() {
            return Err(Error::domain("SV mu must be finite"));
        }
        self.noise.validate()
    }

    pub fn stationary_var(&self) -> f64 {
        self.sigma_eta * self.sigma_eta / (1.0 - self.phi * self.phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticVolatility {
    pub params: SVParams,
}

impl StochasticVolatility {
    pub fn new(params: SVParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl StateSpaceModel for StochasticVolatility {
    fn sample_initial(&self, rng: &mut SimRng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.params.mu + self.params.stationary_var().sqrt() * z
    }

    fn sample_transition(&self, x: f64, rng: &mut SimRng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let p = &self.params;
        p.mu + p.phi * (x - p.mu) + p.sigma_eta * z
    }

    fn sample_noise(&self, rng: &mut SimRng) -> f64 {
        sample_stable_unchecked(&self.params.noise, rng)
    }

    fn emit(&self, x: f64, noise: f64) -> f64 {
        (0.5 * x).exp() * noise
    }

    fn log_likelihood(&self, x: f64, y: f64) -> Option<f64> {
        let n = &self.params.noise;
        let scale = (0.5 * x).exp();
        if n.is_gaussian() {
            // ε ~ N(δ, 2γ²)
            let sd = std::f64::consts::SQRT_2 * n.gamma * scale;
            let z = (y - scale * n.delta) / sd;
            Some(-0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln())
        } else if n.is_cauchy() {
            let g = n.gamma * scale;
            let z = (y - scale * n.delta) / g;
            Some(-(PI * g).ln() - (1.0 + z * z).ln())
        } else {
            None
        }
    }

    fn noise_quantile(&self, p: f64) -> Result<f64> {
        stable_quantile(&self.params.noise, p)
    }

    fn param_vector(&self) -> Vec<f64> {
        let p = &self.params;
        vec![
            p.mu,
            p.phi,
            p.sigma_eta,
            p.noise.alpha,
            p.noise.beta,
            p.noise.gamma,
            p.noise.delta,
        ]
    }
}
