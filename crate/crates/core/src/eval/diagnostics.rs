//! Residual diagnostics for return series.

use crate::util::mean;
use crate::{Error, Result};

/// Ljung-Box `Q = T(T+2) Σ_{k=1}^{h} ρ̂_k² / (T - k)`.
pub fn ljung_box(y: &[f64], h: usize) -> Result<f64> {
    let n = y.len();
    if h == 0 || n <= h {
        return Err(Error::InsufficientData(format!(
            "need more than {h} observations"
        )));
    }
    let m = mean(y);
    let d: Vec<f64> = y.iter().map(|v| v - m).collect();
    let denom: f64 = d.iter().map(|v| v * v).sum();
    if denom <= 0.0 {
        return Err(Error::DegenerateSummary(
            "constant series has no autocorrelation".into(),
        ));
    }
    let nf = n as f64;
    let q: f64 = (1..=h)
        .map(|k| {
            let rho = d[k..]
                .iter()
                .zip(&d[..n - k])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / denom;
            rho * rho / (nf - k as f64)
        })
        .sum();
    Ok(nf * (nf + 2.0) * q)
}

/// Jarque-Bera `(T/6)(S² + (K - 3)²/4)` with moment skewness `S` and
/// non-excess kurtosis `K`.
pub fn jarque_bera(y: &[f64]) -> Result<f64> {
    let n = y.len();
    if n < 8 {
        return Err(Error::InsufficientData(
            "Jarque-Bera needs at least 8 observations".into(),
        ));
    }
    let m = mean(y);
    let nf = n as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in y {
        let d = v - m;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 <= 0.0 {
        return Err(Error::DegenerateSummary("zero variance".into()));
    }
    let s = m3 / m2.powf(1.5);
    let k = m4 / (m2 * m2);
    Ok(nf / 6.0 * (s * s + (k - 3.0).powi(2) / 4.0))
}
