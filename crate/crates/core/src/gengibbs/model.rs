//! Model families supported by the Gen-Gibbs sampler: how to simulate from
//! them, how their parameter blocks are summarized and how blocks are
//! mapped to an unconstrained scale for learning.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mh::MhHyper;
use super::summaries::{
    obs_summaries, residual_summaries, standardized_residuals, state_summaries,
};
use crate::qnn::FeatureTransform;
use crate::rng::SimRng;
use crate::ssm::stable::sample_stable_unchecked;
use crate::ssm::{Prior, PriorSet, StableParams};
use crate::{Error, Result};

/// A model family with a fixed set of named parameter blocks.
///
/// * `LinearGaussian`: `x_t = φ x_{t-1} + ψ_x^{-1/2} η_t`,
///   `y_t = x_t + ψ_y^{-1/2} ε_t`, stationary `x_0`; blocks `psi_x, psi_y`.
/// * `GaussianSv`: `x_t = μ + φ(x_{t-1} - μ) + σ_η η_t`,
///   `y_t = exp(x_t/2) ε_t`, `ε_t ~ N(0,1)`; blocks `mu, phi, sigma2_eta`.
///   Prior draws with `φ > phi_max` are rejected when building training sets.
/// * `StableSv`: as above with `σ_η` fixed and `ε_t ~ S(α, β, 1, 0)`;
///   blocks `mu, phi, alpha, beta`. `(μ, φ)` are updated exactly
///   ([`super::mh`]); `(α, β)` through learned maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GibbsModel {
    LinearGaussian { phi: f64 },
    GaussianSv { phi_max: f64 },
    StableSv { sigma_eta: f64, sigma_phi_sq: f64 },
}

/// Invertible map from a block's support to the real line; the learned map
/// predicts the transformed value so draws always respect the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetLink {
    Identity,
    Log,
    Logit { lo: f64, hi: f64 },
}

impl TargetLink {
    pub fn for_prior(p: &Prior) -> Self {
        match *p {
            Prior::Gamma { .. } | Prior::InverseGamma { .. } => TargetLink::Log,
            Prior::Beta { .. } => TargetLink::Logit { lo: 0.0, hi: 1.0 },
            Prior::Uniform { lo, hi } => TargetLink::Logit { lo, hi },
            Prior::Normal { .. } | Prior::PointMass { .. } => TargetLink::Identity,
        }
    }

    pub fn forward(self, v: f64) -> f64 {
        match self {
            TargetLink::Identity => v,
            TargetLink::Log => v.ln(),
            TargetLink::Logit { lo, hi } => {
                let p = (v - lo) / (hi - lo);
                (p / (1.0 - p)).ln()
            }
        }
    }

    pub fn inverse(self, z: f64) -> f64 {
        match self {
            TargetLink::Identity => z,
            TargetLink::Log => z.exp(),
            TargetLink::Logit { lo, hi } => {
                let p = if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                };
                lo + (hi - lo) * p
            }
        }
    }
}

/// Feature transform for a parameter value used as a conditioning input.
pub(crate) fn theta_transform(p: &Prior) -> FeatureTransform {
    match p {
        Prior::Gamma { .. } | Prior::InverseGamma { .. } => FeatureTransform::Ln,
        _ => FeatureTransform::Identity,
    }
}

impl GibbsModel {
    pub fn block_names(&self) -> &'static [&'static str] {
        match self {
            GibbsModel::LinearGaussian { .. } => &["psi_x", "psi_y"],
            GibbsModel::GaussianSv { .. } => &["mu", "phi", "sigma2_eta"],
            GibbsModel::StableSv { .. } => &["mu", "phi", "alpha", "beta"],
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.block_names().len()
    }

    /// Blocks updated through learned maps, in update order.
    pub fn learned_blocks(&self) -> Vec<usize> {
        match self {
            GibbsModel::StableSv { .. } => vec![2, 3],
            _ => (0..self.n_blocks()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GibbsModel::LinearGaussian { phi } if !(phi.abs() < 1.0) => {
                Err(Error::domain("linear Gaussian phi must satisfy |phi| < 1"))
            }
            GibbsModel::GaussianSv { phi_max } if !(phi_max > 0.0 && phi_max < 1.0) => {
                Err(Error::domain("phi_max must lie in (0, 1)"))
            }
            GibbsModel::StableSv {
                sigma_eta,
                sigma_phi_sq,
            } if !(sigma_eta > 0.0 && sigma_phi_sq > 0.0) => Err(Error::domain(
                "stable SV needs positive sigma_eta and sigma_phi_sq",
            )),
            _ => Ok(()),
        }
    }

    /// Checks that `priors` names exactly this model's blocks, in order.
    pub fn check_priors(&self, priors: &PriorSet) -> Result<()> {
        let names = priors.names();
        if names != self.block_names() {
            return Err(Error::Interface(format!(
                "prior blocks {names:?} do not match model blocks {:?}",
                self.block_names()
            )));
        }
        for (_, p) in &priors.blocks {
            p.validate()?;
        }
        if let GibbsModel::StableSv { .. } = self {
            self.mh_hyper(priors)?;
            for (i, lo, hi) in [(2, 0.0, 2.0), (3, -1.0, 1.0)] {
                let (_, p) = &priors.blocks[i];
                let ok = match *p {
                    Prior::Uniform { lo: a, hi: b } => a >= lo && b <= hi,
                    Prior::PointMass { value } => value > lo && value <= hi,
                    _ => false,
                };
                if !ok {
                    return Err(Error::domain(format!(
                        "stable noise block `{}` needs a uniform or point-mass prior inside [{lo}, {hi}]",
                        self.block_names()[i]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Hyperparameters of the exact `(γ, φ)` update (stable SV only).
    pub fn mh_hyper(&self, priors: &PriorSet) -> Result<MhHyper> {
        match *self {
            GibbsModel::StableSv {
                sigma_eta,
                sigma_phi_sq,
            } => MhHyper::from_mu_prior(
                &priors.blocks[0].1,
                sigma_eta,
                sigma_phi_sq,
                priors.blocks[1].1,
            ),
            _ => Err(Error::Interface(
                "only the stable SV model has exact level/persistence updates".into(),
            )),
        }
    }

    /// Whether a prior draw is admitted to the training set.
    pub fn admits(&self, theta: &[f64]) -> bool {
        match *self {
            GibbsModel::GaussianSv { phi_max } => theta[1] <= phi_max,
            _ => true,
        }
    }

    /// `(μ, φ, σ_x)` of the latent AR(1) under `theta`.
    fn latent(&self, theta: &[f64]) -> (f64, f64, f64) {
        match *self {
            GibbsModel::LinearGaussian { phi } => (0.0, phi, theta[0].powf(-0.5)),
            GibbsModel::GaussianSv { .. } => (theta[0], theta[1], theta[2].sqrt()),
            GibbsModel::StableSv { sigma_eta, .. } => (theta[0], theta[1], sigma_eta),
        }
    }

    /// Simulates `(x_{0:T}, y_{1:T})` under `theta`.
    pub fn simulate(
        &self,
        theta: &[f64],
        horizon: usize,
        rng: &mut SimRng,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let (mu, phi, sx) = self.latent(theta);
        if !(phi.abs() < 1.0) || !sx.is_finite() {
            return Err(Error::domain(format!(
                "non-stationary latent dynamics for theta = {theta:?}"
            )));
        }
        let noise = self.stable_noise(theta)?;
        let mut x = Vec::with_capacity(horizon + 1);
        let mut y = Vec::with_capacity(horizon);
        let z: f64 = StandardNormal.sample(rng);
        x.push(mu + sx / (1.0 - phi * phi).sqrt() * z);
        for t in 1..=horizon {
            let z: f64 = StandardNormal.sample(rng);
            let xt = mu + phi * (x[t - 1] - mu) + sx * z;
            let yt = self.emit_with(theta, noise.as_ref(), xt, rng);
            if !(xt.is_finite() && yt.is_finite()) {
                return Err(Error::Simulation { t });
            }
            x.push(xt);
            y.push(yt);
        }
        Ok((x, y))
    }

    fn stable_noise(&self, theta: &[f64]) -> Result<Option<StableParams>> {
        match self {
            GibbsModel::StableSv { .. } => Ok(Some(StableParams::new(theta[2], theta[3], 1.0, 0.0)?)),
            _ => Ok(None),
        }
    }

    fn emit_with(
        &self,
        theta: &[f64],
        noise: Option<&StableParams>,
        x: f64,
        rng: &mut SimRng,
    ) -> f64 {
        match self {
            GibbsModel::LinearGaussian { .. } => {
                let z: f64 = StandardNormal.sample(rng);
                x + z / theta[1].sqrt()
            }
            GibbsModel::GaussianSv { .. } => {
                let z: f64 = StandardNormal.sample(rng);
                (0.5 * x).exp() * z
            }
            GibbsModel::StableSv { .. } => {
                let p = noise.expect("stable noise resolved");
                (0.5 * x).exp() * sample_stable_unchecked(p, rng)
            }
        }
    }

    /// One draw of `y_t | x_t, θ`.
    pub fn emit(&self, theta: &[f64], x: f64, rng: &mut SimRng) -> Result<f64> {
        let noise = self.stable_noise(theta)?;
        Ok(self.emit_with(theta, noise.as_ref(), x, rng))
    }

    /// Blocks of `θ_{-b}` fed to the map of block `b`.
    pub fn conditioning_blocks(&self, b: usize) -> Vec<usize> {
        match self {
            GibbsModel::StableSv { .. } => vec![if b == 2 { 3 } else { 2 }],
            _ => (0..self.n_blocks()).filter(|&j| j != b).collect(),
        }
    }

    /// Dimension of `S_θ` for block `b`.
    pub fn summary_dim(&self, _b: usize) -> usize {
        match self {
            GibbsModel::LinearGaussian { .. } => 1,
            GibbsModel::GaussianSv { .. } => {
                super::summaries::OBS_SUMMARY_DIM + super::summaries::STATE_SUMMARY_DIM
            }
            GibbsModel::StableSv { .. } => 4,
        }
    }

    /// `S_θ(x_{0:T}, y_{1:T})` for block `b`.
    pub fn block_summary(&self, b: usize, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if x.len() != y.len() + 1 {
            return Err(Error::Interface(format!(
                "state path of length {} does not match {} observations",
                x.len(),
                y.len()
            )));
        }
        match *self {
            GibbsModel::LinearGaussian { phi } => Ok(vec![match b {
                0 => x.windows(2).map(|w| (w[1] - phi * w[0]).powi(2)).sum(),
                _ => y.iter().zip(&x[1..]).map(|(y, x)| (y - x).powi(2)).sum(),
            }]),
            GibbsModel::GaussianSv { .. } => {
                let mut s = obs_summaries(y)?;
                s.extend(state_summaries(x)?);
                Ok(s)
            }
            GibbsModel::StableSv { .. } => {
                let r = residual_summaries(&standardized_residuals(y, x)?)?;
                Ok(if b == 2 {
                    r.alpha_block().to_vec()
                } else {
                    r.beta_block().to_vec()
                })
            }
        }
    }

    /// Input transforms for the summary part of block `b`'s features.
    pub(crate) fn summary_transforms(&self, b: usize) -> Vec<FeatureTransform> {
        use FeatureTransform::*;
        match self {
            GibbsModel::LinearGaussian { .. } => vec![Ln],
            GibbsModel::GaussianSv { .. } => {
                let mut t = vec![Identity, Ln, Identity, Identity, Identity];
                t.extend([Asinh; 5]);
                t.extend([Identity, Identity, Ln]);
                t
            }
            GibbsModel::StableSv { .. } => {
                if b == 2 {
                    vec![Identity, Asinh, Ln, Ln]
                } else {
                    vec![Identity, Identity, Ln, Identity]
                }
            }
        }
    }

    /// Input transform applied to observation windows.
    pub(crate) fn obs_transform(&self) -> FeatureTransform {
        match self {
            GibbsModel::LinearGaussian { .. } => FeatureTransform::Identity,
            _ => FeatureTransform::Asinh,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn links_round_trip() {
        for (link, v) in [
            (TargetLink::Log, 3.5),
            (TargetLink::Logit { lo: 1.0, hi: 2.0 }, 1.3),
            (TargetLink::Logit { lo: -1.0, hi: 1.0 }, -0.99),
            (TargetLink::Identity, -2.0),
        ] {
            assert!((link.inverse(link.forward(v)) - v).abs() < 1e-12);
        }
        let l = TargetLink::Logit { lo: 0.0, hi: 1.0 };
        assert!(l.inverse(800.0) <= 1.0 && l.inverse(-800.0) >= 0.0);
    }

    #[test]
    fn lg_summaries_are_residual_sums() {
        let m = GibbsModel::LinearGaussian { phi: 0.5 };
        let x = [1.0, 2.0, 0.0];
        let y = [1.0, 1.0];
        assert_eq!(m.block_summary(0, &x, &y).unwrap(), vec![2.25 + 1.0]);
        assert_eq!(m.block_summary(1, &x, &y).unwrap(), vec![1.0 + 1.0]);
        assert!(m.block_summary(0, &x[..2], &y).is_err());
    }

    #[test]
    fn prior_layout_checked() {
        let m = GibbsModel::LinearGaussian { phi: 0.9 };
        let g = Prior::Gamma {
            shape: 2.0,
            rate: 2.0,
        };
        let ok = PriorSet::new(vec![("psi_x".into(), g), ("psi_y".into(), g)]).unwrap();
        assert!(m.check_priors(&ok).is_ok());
        let bad = PriorSet::new(vec![("psi_y".into(), g), ("psi_x".into(), g)]).unwrap();
        assert!(m.check_priors(&bad).is_err());
    }
}
