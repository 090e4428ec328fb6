//! Summary statistics of observation histories and of sample clouds.

use serde::{Deserialize, Serialize};

use crate::rng::SimRng;
use crate::ssm::{simulate_trajectory, StateSpaceModel};
use crate::util::mean;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SummarySpec {
    /// `(y_{t-l}, …, y_t)`, padded with `pad` before the sample starts.
    /// `pad: None` means "estimate the stationary observation mean" when a
    /// map is trained; applying an unresolved window pads with 0.
    LagWindow { lag: usize, pad: Option<f64> },
    /// Sample mean, variance and central moments `3..=k` of a cloud.
    Moments { k: usize },
}

impl SummarySpec {
    pub fn dim(&self) -> usize {
        match *self {
            SummarySpec::LagWindow { lag, .. } => lag + 1,
            SummarySpec::Moments { k } => k,
        }
    }
}

/// Summary of `values` (an observation history `y_{1:t}` for a lag window,
/// a sample cloud for moments).
pub fn apply_summary(spec: &SummarySpec, values: &[f64]) -> Result<Vec<f64>> {
    match *spec {
        SummarySpec::LagWindow { lag, pad } => {
            if values.is_empty() {
                return Err(Error::domain("summary needs at least one observation"));
            }
            let mut out = vec![pad.unwrap_or(0.0); lag + 1];
            let take = values.len().min(lag + 1);
            out[lag + 1 - take..].copy_from_slice(&values[values.len() - take..]);
            Ok(out)
        }
        SummarySpec::Moments { k } => sample_moments(values, k),
    }
}

/// `(mean, variance, m_3, …, m_k)` with `m_j` the `j`-th central moment;
/// the variance uses the `n - 1` divisor.
pub fn sample_moments(values: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::domain("need at least one moment"));
    }
    if values.len() < 2 {
        return Err(Error::InsufficientData(
            "moments need at least two values".into(),
        ));
    }
    let m = mean(values);
    let n = values.len() as f64;
    let mut out = vec![m];
    for j in 2..=k {
        let s: f64 = values.iter().map(|v| (v - m).powi(j as i32)).sum();
        out.push(if j == 2 { s / (n - 1.0) } else { s / n });
    }
    Ok(out)
}

/// Mean of all observations over `n_paths` simulated paths of length
/// `horizon`.
pub fn stationary_obs_mean(
    model: &dyn StateSpaceModel,
    n_paths: usize,
    horizon: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    let mut sum = 0.0;
    for _ in 0..n_paths {
        let tr = simulate_trajectory(model, horizon, rng)?;
        sum += tr.observations.iter().sum::<f64>();
    }
    Ok(sum / (n_paths * horizon) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn lag_window_examples() {
        let s = SummarySpec::LagWindow {
            lag: 2,
            pad: Some(0.0),
        };
        assert_eq!(
            apply_summary(&s, &[5.0, 6.0, 7.0]).unwrap(),
            vec![5.0, 6.0, 7.0]
        );
        assert_eq!(
            apply_summary(&s, &[4.0, 5.0, 6.0, 7.0]).unwrap(),
            vec![5.0, 6.0, 7.0]
        );
        let s3 = SummarySpec::LagWindow {
            lag: 3,
            pad: Some(0.0),
        };
        assert_eq!(
            apply_summary(&s3, &[9.0]).unwrap(),
            vec![0.0, 0.0, 0.0, 9.0]
        );
        let sp = SummarySpec::LagWindow {
            lag: 1,
            pad: Some(-1.5),
        };
        assert_eq!(apply_summary(&sp, &[2.0]).unwrap(), vec![-1.5, 2.0]);
        assert!(apply_summary(&s, &[]).is_err());
        assert_eq!(s3.dim(), 4);
    }

    #[test]
    fn moments_of_normal_cloud() {
        let mut rng = seeded(1);
        let d = Normal::new(1.5, 0.7).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng)).collect();
        let m = apply_summary(&SummarySpec::Moments { k: 2 }, &xs).unwrap();
        assert!((m[0] - 1.5).abs() < 0.01);
        assert!((m[1] - 0.49).abs() < 0.01);
        let m4 = sample_moments(&xs, 4).unwrap();
        assert!(m4[2].abs() < 0.01);
        assert!((m4[3] - 3.0 * 0.49 * 0.49).abs() < 0.02);
    }

    #[test]
    fn summary_is_pure() {
        let s = SummarySpec::LagWindow {
            lag: 4,
            pad: Some(0.3),
        };
        let y = [1.0, -2.0, 0.5];
        assert_eq!(
            apply_summary(&s, &y).unwrap(),
            apply_summary(&s, &y).unwrap()
        );
    }
}
