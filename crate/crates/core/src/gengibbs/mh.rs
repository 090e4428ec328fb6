//! Exact updates for the level and persistence of a Gaussian AR(1) latent
//! path written with unit innovation variance.
//!
//! With `x̃_t = x_t / σ_η` and `γ = μ / σ_η` the path follows
//! `x̃_t = γ + φ(x̃_{t-1} - γ) + η_t`, `x̃_0 ~ N(γ, 1/(1-φ²))`. `γ` has a
//! Normal full conditional; `φ` is proposed from the Normal conditional
//! under an auxiliary `N(0, σ²_φ)` prior and corrected by Metropolis-Hastings
//! towards the actual prior.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{open01, SimRng};
use crate::ssm::Prior;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MhHyper {
    /// Prior mean of `γ`.
    pub gamma_mean: f64,
    /// Prior variance `τ₀²` of `γ`; `f64::INFINITY` gives a flat prior.
    pub tau0_sq: f64,
    /// Variance of the auxiliary Normal prior used to build the proposal.
    pub sigma_phi_sq: f64,
    /// Target prior of `φ`.
    pub phi_prior: Prior,
}

impl MhHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau0_sq > 0.0) || !(self.sigma_phi_sq > 0.0) || !self.gamma_mean.is_finite() {
            return Err(Error::domain(
                "MH hyperparameters need positive variances and a finite mean",
            ));
        }
        self.phi_prior.validate()
    }

    /// `γ = μ/σ_η` prior induced by a Normal prior on `μ`.
    pub fn from_mu_prior(
        mu_prior: &Prior,
        sigma_eta: f64,
        sigma_phi_sq: f64,
        phi_prior: Prior,
    ) -> Result<Self> {
        let Prior::Normal { mean, sd } = *mu_prior else {
            return Err(Error::domain("exact level update needs a Normal prior on mu"));
        };
        if !(sigma_eta > 0.0) {
            return Err(Error::domain("sigma_eta must be positive"));
        }
        let h = Self {
            gamma_mean: mean / sigma_eta,
            tau0_sq: (sd / sigma_eta).powi(2),
            sigma_phi_sq,
            phi_prior,
        };
        h.validate()?;
        Ok(h)
    }
}

/// Mean and variance of `γ | x̃_{0:T}, φ`.
pub fn gamma_conditional(x: &[f64], phi: f64, hyper: &MhHyper) -> (f64, f64) {
    let t = (x.len() - 1) as f64;
    let prec = (1.0 - phi * phi) + t * (1.0 - phi).powi(2) + 1.0 / hyper.tau0_sq;
    let innov: f64 = x.windows(2).map(|w| w[1] - phi * w[0]).sum();
    let lin = x[0] * (1.0 - phi * phi) + (1.0 - phi) * innov + hyper.gamma_mean / hyper.tau0_sq;
    (lin / prec, 1.0 / prec)
}

/// Mean and variance of the proposal for `φ` (Normal conditional under the
/// auxiliary prior, ignoring the `x̃_0` term).
pub fn phi_proposal(x: &[f64], gamma: f64, hyper: &MhHyper) -> (f64, f64) {
    let a: f64 = x[..x.len() - 1]
        .iter()
        .map(|v| (v - gamma).powi(2))
        .sum::<f64>()
        + 1.0 / hyper.sigma_phi_sq;
    let b: f64 = x
        .windows(2)
        .map(|w| (w[1] - gamma) * (w[0] - gamma))
        .sum();
    (b / a, 1.0 / a)
}

/// `ln N(x̃_0; γ, 1/(1-φ²))`.
pub fn ln_initial_density(x0: f64, gamma: f64, phi: f64) -> f64 {
    let prec = 1.0 - phi * phi;
    if !(prec > 0.0) {
        return f64::NEG_INFINITY;
    }
    0.5 * prec.ln() - 0.5 * prec * (x0 - gamma).powi(2) - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// One exact draw of `γ` followed by one MH step for `φ`, on a path in the
/// unit-innovation scale. Returns the new `(γ, φ)` and whether the `φ`
/// proposal was accepted. Proposals with `|φ*| ≥ 1` are rejected.
pub fn mh_update_gamma_phi(
    x: &[f64],
    current: (f64, f64),
    hyper: &MhHyper,
    rng: &mut SimRng,
) -> Result<((f64, f64), bool)> {
    if x.is_empty() {
        return Err(Error::domain("latent path is empty"));
    }
    let (_, phi) = current;
    if !(phi.abs() < 1.0) {
        return Err(Error::domain(format!("current phi = {phi} is not stationary")));
    }
    let (gm, gv) = gamma_conditional(x, phi, hyper);
    let z: f64 = StandardNormal.sample(rng);
    let gamma = gm + gv.sqrt() * z;

    let (phi, accepted) = mh_update_phi(x, gamma, phi, hyper, rng);
    Ok(((gamma, phi), accepted))
}

/// One MH step for `φ` with `γ` held fixed. The caller guarantees a
/// non-empty path and `|φ| < 1`.
pub fn mh_update_phi(
    x: &[f64],
    gamma: f64,
    phi: f64,
    hyper: &MhHyper,
    rng: &mut SimRng,
) -> (f64, bool) {
    let (pm, pv) = phi_proposal(x, gamma, hyper);
    let z: f64 = StandardNormal.sample(rng);
    let cand = pm + pv.sqrt() * z;
    if !(cand.abs() < 1.0) {
        return (phi, false);
    }
    let aux_ln = |p: f64| -0.5 * p * p / hyper.sigma_phi_sq;
    let target = |p: f64| ln_initial_density(x[0], gamma, p) + hyper.phi_prior.ln_pdf(p);
    let ln_ratio = target(cand) - target(phi) + aux_ln(phi) - aux_ln(cand);
    if ln_ratio.is_nan() {
        return (phi, false);
    }
    let accept = ln_ratio >= 0.0 || open01(rng).ln() < ln_ratio;
    (if accept { cand } else { phi }, accept)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_prior_single_state_collapses_to_unit_normal() {
        let h = MhHyper {
            gamma_mean: 0.0,
            tau0_sq: f64::INFINITY,
            sigma_phi_sq: 10.0,
            phi_prior: Prior::Uniform { lo: -1.0, hi: 1.0 },
        };
        let (m, v) = gamma_conditional(&[1.7], 0.0, &h);
        assert_eq!((m, v), (1.7, 1.0));
    }

    #[test]
    fn out_of_range_current_phi_is_an_error() {
        let h = MhHyper {
            gamma_mean: 0.0,
            tau0_sq: 1.0,
            sigma_phi_sq: 10.0,
            phi_prior: Prior::Uniform { lo: -1.0, hi: 1.0 },
        };
        let mut rng = crate::rng::seeded(1);
        assert!(mh_update_gamma_phi(&[0.0, 1.0], (0.0, 1.0), &h, &mut rng).is_err());
    }
}
