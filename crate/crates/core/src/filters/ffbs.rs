use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::kalman::{kalman_filter, KalmanTrace};
use crate::rng::SimRng;
use crate::ssm::LGParams;
use crate::{Error, Result};

/// One joint draw of `x_{0:T}` given the forward trace: `x_T ~ N(m_T, C_T)`,
/// then `x_t | x_{t+1} ~ N(m_t + J_t(x_{t+1} - a_{t+1}), C_t - J_t² R_{t+1})`
/// with `J_t = C_t φ / R_{t+1}`, down to `t = 0`.
pub fn ffbs_lg_draw(trace: &KalmanTrace, p: &LGParams, rng: &mut SimRng) -> Result<Vec<f64>> {
    let n = trace.len();
    let mut x = vec![0.0; n + 1];
    let draw = |mean: f64, var: f64, rng: &mut SimRng| -> Result<f64> {
        if var < -1e-12 * (1.0 + mean.abs()) || !var.is_finite() {
            return Err(Error::Numerical(format!(
                "negative backward variance {var}"
            )));
        }
        let z: f64 = StandardNormal.sample(rng);
        Ok(mean + var.max(0.0).sqrt() * z)
    };
    if n == 0 {
        x[0] = draw(trace.m0, trace.c0, rng)?;
        return Ok(x);
    }
    x[n] = draw(trace.m[n - 1], trace.c[n - 1], rng)?;
    for t in (0..n).rev() {
        let (m, c) = if t == 0 {
            (trace.m0, trace.c0)
        } else {
            (trace.m[t - 1], trace.c[t - 1])
        };
        let (a_next, r_next) = (trace.a[t], trace.r[t]);
        let j = c * p.phi / r_next;
        // C - J²R = C σ_x² / R, written without cancellation.
        x[t] = draw(
            m + j * (x[t + 1] - a_next),
            c * p.sigma_x * p.sigma_x / r_next,
            rng,
        )?;
    }
    Ok(x)
}

/// Draw from `Gamma(a0 + n/2, rate = b0 + ss/2)`.
pub fn gamma_precision_draw(a0: f64, b0: f64, n: f64, ss: f64, rng: &mut SimRng) -> f64 {
    let shape = a0 + 0.5 * n;
    let rate = b0 + 0.5 * ss;
    Gamma::new(shape, 1.0 / rate)
        .expect("positive shape and rate")
        .sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsLgConfig {
    pub phi: f64,
    pub a0: f64,
    pub b0: f64,
    pub n_iter: usize,
    pub burn_in: usize,
    pub init_psi_x: f64,
    pub init_psi_y: f64,
    /// Adds the stationary `x_0` prior's contribution to the `ψ_x`
    /// conditional (shape +½, rate +(1-φ²)x_0²/2). Off by default, which
    /// gives the textbook update over `t = 1..T` only.
    pub include_initial_term: bool,
    /// Keep the sampled state paths.
    pub store_states: bool,
}

impl GibbsLgConfig {
    pub fn new(phi: f64, a0: f64, b0: f64, n_iter: usize, burn_in: usize) -> Self {
        Self {
            phi,
            a0,
            b0,
            n_iter,
            burn_in,
            init_psi_x: a0 / b0,
            init_psi_y: a0 / b0,
            include_initial_term: false,
            store_states: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsLgChain {
    pub psi_x: Vec<f64>,
    pub psi_y: Vec<f64>,
    /// `x_{0:T}` per iteration when requested.
    pub states: Vec<Vec<f64>>,
    pub burn_in: usize,
}

impl GibbsLgChain {
    pub fn retained_psi_x(&self) -> &[f64] {
        &self.psi_x[self.burn_in.min(self.psi_x.len())..]
    }

    pub fn retained_psi_y(&self) -> &[f64] {
        &self.psi_y[self.burn_in.min(self.psi_y.len())..]
    }
}

/// Conjugate Gibbs sampler for `(ψ_x, ψ_y, x_{0:T})` with `φ` known.
pub fn gibbs_lg(y: &[f64], cfg: &GibbsLgConfig, rng: &mut SimRng) -> Result<GibbsLgChain> {
    if !(cfg.a0 > 0.0 && cfg.b0 > 0.0) {
        return Err(Error::domain("Gamma hyperparameters must be positive"));
    }
    if !(cfg.phi.abs() < 1.0) {
        return Err(Error::domain("Gibbs sampler needs a stationary phi"));
    }
    if cfg.burn_in > cfg.n_iter {
        return Err(Error::domain("burn-in exceeds iteration count"));
    }
    let big_t = y.len() as f64;
    let (mut psi_x, mut psi_y) = (cfg.init_psi_x, cfg.init_psi_y);
    let mut chain = GibbsLgChain {
        psi_x: Vec::with_capacity(cfg.n_iter),
        psi_y: Vec::with_capacity(cfg.n_iter),
        states: Vec::new(),
        burn_in: cfg.burn_in,
    };
    for _ in 0..cfg.n_iter {
        let p = LGParams::from_precisions(cfg.phi, psi_x, psi_y)?;
        let c0 = p.stationary_var()?;
        let trace = kalman_filter(y, &p, 0.0, c0)?;
        let x = ffbs_lg_draw(&trace, &p, rng)?;
        let ss_y: f64 = y.iter().zip(&x[1..]).map(|(y, x)| (y - x) * (y - x)).sum();
        let mut ss_x: f64 = x.windows(2).map(|w| (w[1] - cfg.phi * w[0]).powi(2)).sum();
        let mut n_x = big_t;
        if cfg.include_initial_term {
            ss_x += (1.0 - cfg.phi * cfg.phi) * x[0] * x[0];
            n_x += 1.0;
        }
        psi_y = gamma_precision_draw(cfg.a0, cfg.b0, big_t, ss_y, rng);
        psi_x = gamma_precision_draw(cfg.a0, cfg.b0, n_x, ss_x, rng);
        chain.psi_x.push(psi_x);
        chain.psi_y.push(psi_y);
        if cfg.store_states {
            chain.states.push(x);
        }
    }
    Ok(chain)
}
