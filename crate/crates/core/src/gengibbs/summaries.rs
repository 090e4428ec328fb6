//! Summary statistics of observations, latent paths and standardized
//! residuals used as inputs to the parameter maps.

use serde::{Deserialize, Serialize};

use crate::util::{inverse_ecdf_sorted, mean, sorted};
use crate::{Error, Result};

/// Quantile levels reported by [`obs_summaries`].
pub const OBS_QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];
/// Autocovariance lags reported by [`obs_summaries`].
pub const OBS_LAGS: [usize; 3] = [1, 3, 5];
pub const OBS_SUMMARY_DIM: usize = 2 + OBS_LAGS.len() + OBS_QUANTILE_LEVELS.len();
pub const STATE_SUMMARY_DIM: usize = 3;

/// Number of points on the characteristic-function grid.
pub const ECF_GRID_POINTS: usize = 20;
pub const ECF_GRID_LO: f64 = 0.1;
pub const ECF_GRID_HI: f64 = 5.0;
/// Fraction of the sample used as upper order statistics by the Hill
/// estimator.
pub const HILL_FRACTION: f64 = 0.1;
pub const RESIDUAL_MIN_LEN: usize = 50;

/// `(ȳ, s², γ₁, γ₃, γ₅, Q_.05, Q_.25, Q_.5, Q_.75, Q_.95)`.
///
/// Autocovariances use divisor `T - k`; quantiles are the left-continuous
/// inverse of the empirical CDF. A constant series reports zero variance
/// and zero autocovariances exactly.
pub fn obs_summaries(y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    if n < 6 {
        return Err(Error::InsufficientData(format!(
            "observation summaries need T >= 6, got {n}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("observation summaries need finite values"));
    }
    let s = sorted(y);
    let mut out = Vec::with_capacity(OBS_SUMMARY_DIM);
    if s[0] == s[n - 1] {
        out.push(s[0]);
        out.extend([0.0; 1 + OBS_LAGS.len()]);
    } else {
        let m = mean(y);
        let d: Vec<f64> = y.iter().map(|v| v - m).collect();
        out.push(m);
        out.push(d.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64);
        for k in OBS_LAGS {
            let g: f64 = d[k..].iter().zip(&d).map(|(a, b)| a * b).sum();
            out.push(g / (n - k) as f64);
        }
    }
    out.extend(OBS_QUANTILE_LEVELS.iter().map(|&p| inverse_ecdf_sorted(&s, p)));
    Ok(out)
}

/// `(x̄, φ̂, σ̂²_η)` of a latent path: the least-squares AR(1) coefficient of
/// the demeaned path and the residual variance with divisor `n - 1`.
pub fn state_summaries(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "state summaries need at least 3 states, got {n}"
        )));
    }
    let m = mean(x);
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let den: f64 = d[..n - 1].iter().map(|v| v * v).sum();
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::DegenerateSummary(
            "constant latent path: AR coefficient undefined".into(),
        ));
    }
    let num: f64 = d[1..].iter().zip(&d).map(|(a, b)| a * b).sum();
    let phi = num / den;
    let ss: f64 = d[1..]
        .iter()
        .zip(&d)
        .map(|(a, b)| (a - phi * b).powi(2))
        .sum();
    Ok(vec![m, phi, ss / (n - 1) as f64])
}

/// Tail- and skewness-sensitive statistics of standardized residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummaries {
    pub ecf_slope: f64,
    pub phase_slope: f64,
    pub hill_tail_index: f64,
    pub outer_inner_spread_ratio: f64,
    pub quantile_asymmetry: f64,
    pub sign_imbalance: f64,
    pub tail_ratio: f64,
    pub extreme_quantile_skew: f64,
}

impl ResidualSummaries {
    /// Statistics aimed at the tail index.
    pub fn alpha_block(&self) -> [f64; 4] {
        [
            self.ecf_slope,
            self.phase_slope,
            self.hill_tail_index,
            self.outer_inner_spread_ratio,
        ]
    }

    /// Statistics aimed at the skewness.
    pub fn beta_block(&self) -> [f64; 4] {
        [
            self.quantile_asymmetry,
            self.sign_imbalance,
            self.tail_ratio,
            self.extreme_quantile_skew,
        ]
    }
}

/// `ε̂_t = y_t exp(-x_t / 2)` for `t = 1..T` given `x_{0:T}`.
pub fn standardized_residuals(y: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() + 1 {
        return Err(Error::Interface(format!(
            "state path of length {} does not match {} observations",
            x.len(),
            y.len()
        )));
    }
    Ok(y.iter()
        .zip(&x[1..])
        .map(|(y, x)| y * (-0.5 * x).exp())
        .collect())
}

/// The 20-point log-spaced grid on `[0.1, 5]`.
pub fn ecf_grid() -> Vec<f64> {
    let (a, b) = (ECF_GRID_LO.ln(), ECF_GRID_HI.ln());
    (0..ECF_GRID_POINTS)
        .map(|i| (a + (b - a) * i as f64 / (ECF_GRID_POINTS - 1) as f64).exp())
        .collect()
}

/// Least-squares slope of `y` on `x`.
fn ols_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn residual_summaries(eps: &[f64]) -> Result<ResidualSummaries> {
    let n = eps.len();
    if n < RESIDUAL_MIN_LEN {
        return Err(Error::InsufficientData(format!(
            "residual summaries need T >= {RESIDUAL_MIN_LEN}, got {n}"
        )));
    }
    if eps.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("residual summaries need finite values"));
    }
    let s = sorted(eps);
    if s[0] == s[n - 1] {
        return Err(Error::DegenerateSummary("identical residuals".into()));
    }
    let q = |p: f64| inverse_ecdf_sorted(&s, p);
    let degenerate = |what: &str| Error::DegenerateSummary(format!("{what} undefined"));

    // Empirical characteristic function on the grid.
    let mut log_t = Vec::with_capacity(ECF_GRID_POINTS);
    let mut log_neg_log_mod = Vec::with_capacity(ECF_GRID_POINTS);
    let mut grid = Vec::with_capacity(ECF_GRID_POINTS);
    let mut phase_over_t = Vec::with_capacity(ECF_GRID_POINTS);
    for t in ecf_grid() {
        let (mut re, mut im) = (0.0, 0.0);
        for &e in eps {
            let (sn, cs) = (t * e).sin_cos();
            re += cs;
            im += sn;
        }
        re /= n as f64;
        im /= n as f64;
        let modulus = re.hypot(im);
        if modulus > 0.0 && modulus < 1.0 {
            log_t.push(t.ln());
            log_neg_log_mod.push((-modulus.ln()).ln());
        }
        grid.push(t);
        phase_over_t.push(im.atan2(re) / t);
    }
    let ecf_slope = ols_slope(&log_t, &log_neg_log_mod).ok_or_else(|| degenerate("ECF slope"))?;
    let phase_slope = ols_slope(&grid, &phase_over_t).ok_or_else(|| degenerate("phase slope"))?;

    let mut abs: Vec<f64> = eps.iter().map(|v| v.abs()).collect();
    abs.sort_by(|a, b| b.total_cmp(a));
    let k = ((HILL_FRACTION * n as f64).floor() as usize).max(1);
    let anchor = abs[k].ln();
    let hill_mean = abs[..k].iter().map(|v| v.ln() - anchor).sum::<f64>() / k as f64;
    if !(hill_mean > 0.0 && hill_mean.is_finite()) {
        return Err(degenerate("Hill tail index"));
    }

    let (q01, q025, q05, q25, q50) = (q(0.01), q(0.025), q(0.05), q(0.25), q(0.5));
    let (q75, q95, q975, q99) = (q(0.75), q(0.95), q(0.975), q(0.99));
    let ratio = |num: f64, den: f64, what: &str| -> Result<f64> {
        if den == 0.0 {
            Err(degenerate(what))
        } else {
            Ok(num / den)
        }
    };
    let outer_inner = ratio(q975 - q025, q75 - q25, "outer/inner spread ratio")?;
    let asym = ratio(q95 + q05 - 2.0 * q50, q95 - q05, "quantile asymmetry")?;
    let extreme = ratio(q99 + q01 - 2.0 * q50, q99 - q01, "extreme quantile skew")?;
    let tail_ratio = ratio((q95 - q50).abs(), (q05 - q50).abs(), "tail ratio")?;
    if tail_ratio == 0.0 {
        return Err(degenerate("tail ratio"));
    }
    let positive = eps.iter().filter(|&&v| v > 0.0).count();
    Ok(ResidualSummaries {
        ecf_slope,
        phase_slope,
        hill_tail_index: 1.0 / hill_mean,
        outer_inner_spread_ratio: outer_inner,
        quantile_asymmetry: asym,
        sign_imbalance: positive as f64 / n as f64,
        tail_ratio,
        extreme_quantile_skew: extreme,
    })
}
