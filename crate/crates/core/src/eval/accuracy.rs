use serde::{Deserialize, Serialize};

use super::sample::SampleSet;
use crate::util::norm_ppf;
use crate::{Error, Result};

pub const COVERAGE_LEVELS: [f64; 3] = [0.75, 0.90, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub rmse: f64,
    /// `(level, fraction of t covered)`.
    pub coverage: Vec<(f64, f64)>,
}

impl AccuracyReport {
    pub fn coverage_at(&self, level: f64) -> Option<f64> {
        self.coverage
            .iter()
            .find(|(l, _)| (l - level).abs() < 1e-12)
            .map(|c| c.1)
    }
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(Error::domain("coverage levels must lie in (0, 1)"));
    }
    Ok(())
}

/// RMSE of per-t posterior means and the fraction of `t` whose truth lies in
/// the central empirical credible interval at each level.
pub fn rmse_and_coverage(
    truth: &[f64],
    draws: &[SampleSet],
    levels: &[f64],
) -> Result<AccuracyReport> {
    if truth.len() != draws.len() {
        return Err(Error::Interface(format!(
            "{} truths vs {} draw sets",
            truth.len(),
            draws.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::EmptySample);
    }
    check_levels(levels)?;
    let n = truth.len() as f64;
    let rmse = (truth
        .iter()
        .zip(draws)
        .map(|(x, d)| (d.mean() - x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let coverage = levels
        .iter()
        .map(|&l| {
            let hits = truth
                .iter()
                .zip(draws)
                .filter(|(x, d)| {
                    let lo = d.quantile(0.5 * (1.0 - l));
                    let hi = d.quantile(0.5 * (1.0 + l));
                    lo <= **x && **x <= hi
                })
                .count();
            (l, hits as f64 / n)
        })
        .collect();
    Ok(AccuracyReport { rmse, coverage })
}

/// As [`rmse_and_coverage`] for Gaussian posteriors given by means and variances.
pub fn rmse_and_coverage_gaussian(
    truth: &[f64],
    means: &[f64],
    vars: &[f64],
    levels: &[f64],
) -> Result<AccuracyReport> {
    if truth.len() != means.len() || truth.len() != vars.len() {
        return Err(Error::Interface(
            "misaligned truth, means and variances".into(),
        ));
    }
    if truth.is_empty() {
        return Err(Error::EmptySample);
    }
    check_levels(levels)?;
    let n = truth.len() as f64;
    let rmse = (truth
        .iter()
        .zip(means)
        .map(|(x, m)| (m - x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let coverage = levels
        .iter()
        .map(|&l| {
            let z = norm_ppf(0.5 * (1.0 + l));
            let hits = (0..truth.len())
                .filter(|&i| (truth[i] - means[i]).abs() <= z * vars[i].sqrt())
                .count();
            (l, hits as f64 / n)
        })
        .collect();
    Ok(AccuracyReport { rmse, coverage })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn point_masses_on_truth() {
        let truth = vec![0.5, -1.0, 2.0];
        let draws: Vec<SampleSet> = truth
            .iter()
            .map(|&x| SampleSet::new(vec![x; 5]).unwrap())
            .collect();
        let r = rmse_and_coverage(&truth, &draws, &COVERAGE_LEVELS).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert!(r.coverage.iter().all(|c| c.1 == 1.0));
    }

    #[test]
    fn exact_calibration() {
        let mut rng = seeded(21);
        let t = 1000;
        // Truth and draws share the law N(c_t, 1).
        let centres: Vec<f64> = (0..t).map(|i| (i as f64 * 0.01).sin()).collect();
        let truth: Vec<f64> = centres
            .iter()
            .map(|c| c + Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let draws: Vec<SampleSet> = centres
            .iter()
            .map(|&c| {
                SampleSet::new(
                    (0..1000)
                        .map(|_| c + Distribution::<f64>::sample(&StandardNormal, &mut rng))
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let r = rmse_and_coverage(&truth, &draws, &COVERAGE_LEVELS).unwrap();
        assert!((r.coverage_at(0.95).unwrap() - 0.95).abs() < 0.02);
    }

    #[test]
    fn misaligned_lengths() {
        let d = vec![SampleSet::new(vec![0.0]).unwrap()];
        assert!(rmse_and_coverage(&[0.0, 1.0], &d, &COVERAGE_LEVELS).is_err());
    }

    proptest! {
        #[test]
        fn coverage_monotone_in_level(seed in 0u64..1000) {
            let mut rng = seeded(seed);
            let truth: Vec<f64> = (0..30).map(|_| StandardNormal.sample(&mut rng)).collect();
            let draws: Vec<SampleSet> = (0..30)
                .map(|_| SampleSet::new((0..50).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap())
                .collect();
            let levels = [0.1, 0.5, 0.75, 0.9, 0.95, 0.99];
            let r = rmse_and_coverage(&truth, &draws, &levels).unwrap();
            for w in r.coverage.windows(2) {
                prop_assert!(w[0].1 <= w[1].1);
            }
        }
    }
}
